use serde::{Deserialize, Serialize};

use super::{farthest_point_sample, CandidateSet, GeometryError, Point2, RasterMask, Result};

/// Placement candidates shown to the selector when nothing else is configured.
pub const DEFAULT_PLACEMENT_CANDIDATES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PushDirection {
    Left,
    Right,
}

impl PushDirection {
    pub fn sign(&self) -> f64 {
        match self {
            PushDirection::Left => -1.0,
            PushDirection::Right => 1.0,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            PushDirection::Left => "left",
            PushDirection::Right => "right",
        }
    }

    /// Direction that moves `from` toward `to` along x; right on a tie.
    pub fn toward(from: f64, to: f64) -> Self {
        if to < from {
            PushDirection::Left
        } else {
            PushDirection::Right
        }
    }
}

/// Spread-out placement options inside `mask`.
///
/// The first option is the set cell nearest the mask centroid, the rest follow
/// farthest-point order. `k` is clamped to the number of set cells.
pub fn candidate_placements(mask: &RasterMask, k: usize) -> Result<CandidateSet> {
    if k == 0 {
        return Err(GeometryError::InvalidInput("k must be at least 1".into()));
    }
    let cells = mask.cell_centers();
    if cells.is_empty() {
        return Err(GeometryError::InvalidInput("mask has no set cells".into()));
    }
    let n = cells.len() as f64;
    let centroid = Point2::new(
        cells.iter().map(|p| p.x).sum::<f64>() / n,
        cells.iter().map(|p| p.y).sum::<f64>() / n,
    );
    let mut seed = 0;
    let mut seed_dist = f64::INFINITY;
    for (i, c) in cells.iter().enumerate() {
        let d = c.distance_squared(&centroid);
        if d < seed_dist {
            seed = i;
            seed_dist = d;
        }
    }
    let order = farthest_point_sample(&cells, k.min(cells.len()), seed)?;
    Ok(CandidateSet::from_locations(order.into_iter().map(|i| cells[i])))
}

/// Gripper end points for a push, `step` apart along the image x axis.
///
/// Label `i` sits at `start ± i * step`. Label 0 would be the start itself
/// and is never emitted.
pub fn candidate_push_endpoints(
    start: Point2,
    direction: PushDirection,
    step: f64,
    count: usize,
) -> Result<CandidateSet> {
    if !start.is_finite() {
        return Err(GeometryError::InvalidInput("non-finite push start".into()));
    }
    if !(step > 0.0) || !step.is_finite() {
        return Err(GeometryError::InvalidInput(format!(
            "push step must be positive, got {step}"
        )));
    }
    if count == 0 {
        return Err(GeometryError::InvalidInput(
            "push candidate count must be at least 1".into(),
        ));
    }
    let sign = direction.sign();
    Ok(CandidateSet::from_locations((1..=count).map(|i| {
        Point2::new(start.x + sign * i as f64 * step, start.y)
    })))
}
