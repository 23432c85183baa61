//! Planar geometry behind the on-demand annotation tool.
//!
//! Everything here works in raster cell units: cell `(col, row)` covers the
//! square `[col, col + 1) x [row, row + 1)` and its center sits at
//! `(col + 0.5, row + 0.5)`. Masks may carry an integer origin so that small
//! marker masks can be anchored anywhere in the plane.

mod annotate;
mod candidates;
mod fps;
mod grasp;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use annotate::{annotate, AnnotatedOption, AnnotatedView};
pub use candidates::{
    candidate_placements, candidate_push_endpoints, PushDirection, DEFAULT_PLACEMENT_CANDIDATES,
};
pub use fps::farthest_point_sample;
pub use grasp::{location_score, select_grasp, GraspSelection, ReachableWorkspace};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("no feasible grasp among {0} hypotheses")]
    NoFeasibleGrasp(usize),
}

pub type Result<T> = std::result::Result<T, GeometryError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        self.distance_squared(other).sqrt()
    }

    pub fn distance_squared(&self, other: &Point2) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    /// Integer cell containing this point.
    pub fn cell(&self) -> (i64, i64) {
        (self.x.floor() as i64, self.y.floor() as i64)
    }
}

impl std::fmt::Display for Point2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({:.2}, {:.2})", self.x, self.y)
    }
}

/// Row-major boolean grid anchored at an integer origin.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "MaskRepr", into = "MaskRepr")]
pub struct RasterMask {
    width: usize,
    height: usize,
    origin: (i64, i64),
    bits: Vec<bool>,
}

impl RasterMask {
    /// An all-clear mask of the given size at the origin.
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            origin: (0, 0),
            bits: vec![false; width * height],
        }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(GeometryError::InvalidInput(format!(
                "mask bits length {} does not match {}x{}",
                bits.len(),
                width,
                height
            )));
        }
        Ok(Self {
            width,
            height,
            origin: (0, 0),
            bits,
        })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut mask = Self::new(width, height);
        for row in 0..height {
            for col in 0..width {
                mask.bits[row * width + col] = f(col, row);
            }
        }
        mask
    }

    /// A single set cell covering `point`.
    pub fn marker(point: Point2) -> Self {
        let mut mask = Self::new(1, 1);
        mask.origin = point.cell();
        mask.bits[0] = true;
        mask
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn origin(&self) -> (i64, i64) {
        self.origin
    }

    pub fn with_origin(mut self, origin: (i64, i64)) -> Self {
        self.origin = origin;
        self
    }

    pub fn get(&self, col: usize, row: usize) -> bool {
        col < self.width && row < self.height && self.bits[row * self.width + col]
    }

    pub fn set(&mut self, col: usize, row: usize, value: bool) {
        if col < self.width && row < self.height {
            self.bits[row * self.width + col] = value;
        }
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|b| *b)
    }

    /// Length of the raster diagonal in cells.
    pub fn diagonal(&self) -> f64 {
        ((self.width * self.width + self.height * self.height) as f64).sqrt()
    }

    /// Whether the plane point falls in a set cell.
    pub fn contains(&self, point: Point2) -> bool {
        if !point.is_finite() {
            return false;
        }
        let (cx, cy) = point.cell();
        let col = cx - self.origin.0;
        let row = cy - self.origin.1;
        col >= 0 && row >= 0 && self.get(col as usize, row as usize)
    }

    /// Centers of the set cells in row-major order, in plane coordinates.
    pub fn cell_centers(&self) -> Vec<Point2> {
        let mut out = Vec::with_capacity(self.count());
        for row in 0..self.height {
            for col in 0..self.width {
                if self.bits[row * self.width + col] {
                    out.push(Point2::new(
                        (self.origin.0 + col as i64) as f64 + 0.5,
                        (self.origin.1 + row as i64) as f64 + 0.5,
                    ));
                }
            }
        }
        out
    }
}

#[derive(Serialize, Deserialize)]
struct MaskRepr {
    width: usize,
    height: usize,
    #[serde(default)]
    origin: (i64, i64),
    rows: Vec<String>,
}

impl From<RasterMask> for MaskRepr {
    fn from(mask: RasterMask) -> Self {
        let rows = (0..mask.height)
            .map(|row| {
                (0..mask.width)
                    .map(|col| if mask.get(col, row) { '1' } else { '0' })
                    .collect()
            })
            .collect();
        Self {
            width: mask.width,
            height: mask.height,
            origin: mask.origin,
            rows,
        }
    }
}

impl TryFrom<MaskRepr> for RasterMask {
    type Error = GeometryError;

    fn try_from(repr: MaskRepr) -> Result<Self> {
        if repr.rows.len() != repr.height {
            return Err(GeometryError::InvalidInput(format!(
                "mask declares {} rows but carries {}",
                repr.height,
                repr.rows.len()
            )));
        }
        let mut bits = Vec::with_capacity(repr.width * repr.height);
        for row in &repr.rows {
            if row.chars().count() != repr.width {
                return Err(GeometryError::InvalidInput(format!(
                    "mask row has {} cells, expected {}",
                    row.chars().count(),
                    repr.width
                )));
            }
            for c in row.chars() {
                match c {
                    '0' => bits.push(false),
                    '1' => bits.push(true),
                    other => {
                        return Err(GeometryError::InvalidInput(format!(
                            "unexpected mask character {other:?}"
                        )))
                    }
                }
            }
        }
        Ok(RasterMask::from_bits(repr.width, repr.height, bits)?.with_origin(repr.origin))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Approach {
    Top,
    SideLeft,
    SideRight,
}

impl Approach {
    pub const ALL: [Approach; 3] = [Approach::Top, Approach::SideLeft, Approach::SideRight];

    pub fn as_str(&self) -> &'static str {
        match self {
            Approach::Top => "top",
            Approach::SideLeft => "side-left",
            Approach::SideRight => "side-right",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraspHypothesis {
    pub position: Point2,
    pub approach: Approach,
    pub confidence: f64,
}

impl GraspHypothesis {
    pub fn new(position: Point2, approach: Approach, confidence: f64) -> Self {
        Self {
            position,
            approach,
            confidence,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub label: u32,
    pub location: Point2,
    pub mask: RasterMask,
}

/// Numbered candidate locations. Labels run `1..=n` in order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CandidateSet {
    items: Vec<Candidate>,
}

impl CandidateSet {
    /// Numbers the locations `1..=n` and attaches a marker mask to each.
    pub fn from_locations(locations: impl IntoIterator<Item = Point2>) -> Self {
        let items = locations
            .into_iter()
            .enumerate()
            .map(|(i, location)| Candidate {
                label: i as u32 + 1,
                location,
                mask: RasterMask::marker(location),
            })
            .collect();
        Self { items }
    }

    pub fn items(&self) -> &[Candidate] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, label: u32) -> Option<&Candidate> {
        label
            .checked_sub(1)
            .and_then(|i| self.items.get(i as usize))
    }

    pub fn labels_consecutive(&self) -> bool {
        self.items
            .iter()
            .enumerate()
            .all(|(i, c)| c.label == i as u32 + 1)
    }
}
