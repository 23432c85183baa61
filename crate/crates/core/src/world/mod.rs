//! Deterministic 2D tabletop world with pick, place and push.
//!
//! Coordinates are raster cells; the table spans the whole raster. Objects
//! are discs. Every operation is a pure function of the world value.

mod exec;
mod observe;
mod scenario;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point2;

pub use exec::{execute, grasp_candidates, nominal_postcondition, placement_candidates, push_candidates, Effect, EffectKind};
pub use observe::{describe, observe, GroundTruth, Observation, ObservedObject};
pub use scenario::{builtin_scenarios, ExpectedAction, OperatorNoteSpec, Scenario, BUILTIN_SCENARIO_NAMES};

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("invalid world: {0}")]
    InvalidWorld(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, WorldError>;

/// Two objects closer than this (edge to edge) count as crowding each other
/// for planning purposes.
pub const CLEARANCE: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimObject {
    pub id: usize,
    pub name: String,
    pub position: Point2,
    pub extent: f64,
    #[serde(default)]
    pub fragile: bool,
    #[serde(default)]
    pub tiny: bool,
    #[serde(default)]
    pub is_container: bool,
    #[serde(default)]
    pub contents: Vec<usize>,
    #[serde(default)]
    pub supports: Option<usize>,
    #[serde(default)]
    pub flat_tool_face: bool,
    #[serde(default)]
    pub handle_cell: Option<Point2>,
    #[serde(default)]
    pub cracked: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimParams {
    pub occlusion_gap: f64,
    pub gripper_min_contact: f64,
    pub raster_width: usize,
    pub raster_height: usize,
    pub push_step: f64,
    pub placement_candidates: usize,
    pub push_candidates: usize,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            occlusion_gap: 1.0,
            gripper_min_contact: 1.0,
            raster_width: 64,
            raster_height: 48,
            push_step: 2.0,
            placement_candidates: crate::geometry::DEFAULT_PLACEMENT_CANDIDATES,
            push_candidates: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableBounds {
    pub min: Point2,
    pub max: Point2,
}

impl TableBounds {
    pub fn contains(&self, p: Point2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn clamp(&self, p: Point2) -> Point2 {
        Point2::new(p.x.clamp(self.min.x, self.max.x), p.y.clamp(self.min.y, self.max.y))
    }

    pub fn diagonal(&self) -> f64 {
        self.min.distance(&self.max)
    }
}

/// Where an object currently is.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Whereabouts {
    Held,
    OnTable,
    Dropped,
}

/// Declarative task goal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Goal {
    /// `subject` on the table within `radius` of `target`.
    Near { subject: String, target: String, radius: f64 },
    Held { subject: String },
}

impl Goal {
    pub fn subject(&self) -> &str {
        match self {
            Goal::Near { subject, .. } | Goal::Held { subject } => subject,
        }
    }

    pub fn target(&self) -> Option<&str> {
        match self {
            Goal::Near { target, .. } => Some(target),
            Goal::Held { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub objects: Vec<SimObject>,
    pub held: Option<usize>,
    pub dropped: Vec<usize>,
    pub bounds: TableBounds,
    pub params: SimParams,
}

impl WorldState {
    /// Builds a world, renumbering ids by position in `objects`.
    pub fn new(objects: Vec<SimObject>, params: SimParams) -> Result<Self> {
        let bounds = TableBounds {
            min: Point2::new(0.0, 0.0),
            max: Point2::new(params.raster_width as f64, params.raster_height as f64),
        };
        let world = Self {
            objects,
            held: None,
            dropped: Vec::new(),
            bounds,
            params,
        };
        world.validate()?;
        Ok(world)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(WorldError::InvalidWorld(m));
        let n = self.objects.len();
        for (i, o) in self.objects.iter().enumerate() {
            if o.id != i {
                return bad(format!("object {} has id {} at index {i}", o.name, o.id));
            }
            if o.name.trim().is_empty() {
                return bad(format!("object {i} has no name"));
            }
            if self.objects[..i].iter().any(|p| p.name.eq_ignore_ascii_case(&o.name)) {
                return bad(format!("duplicate object name {}", o.name));
            }
            if !(o.extent > 0.0) || !o.extent.is_finite() {
                return bad(format!("{} has invalid extent {}", o.name, o.extent));
            }
            if !o.position.is_finite() || !self.bounds.contains(o.position) {
                return bad(format!("{} at {} is off the table", o.name, o.position));
            }
            if o.tiny && o.extent >= self.params.gripper_min_contact {
                return bad(format!("{} is tiny but extent {} >= gripper contact", o.name, o.extent));
            }
            for &c in &o.contents {
                if c >= n || c == i {
                    return bad(format!("{} has invalid contents id {c}", o.name));
                }
            }
            if let Some(s) = o.supports {
                if s >= n || s == i {
                    return bad(format!("{} supports invalid id {s}", o.name));
                }
            }
            if !o.contents.is_empty() && !o.is_container {
                return bad(format!("{} has contents but is not a container", o.name));
            }
        }
        if let Some(h) = self.held {
            if h >= n || self.dropped.contains(&h) {
                return bad(format!("held id {h} is invalid"));
            }
        }
        if self.dropped.iter().any(|&d| d >= n) {
            return bad("dropped id out of range".into());
        }
        Ok(())
    }

    pub fn object(&self, id: usize) -> &SimObject {
        &self.objects[id]
    }

    /// Case-insensitive lookup by name.
    pub fn find(&self, name: &str) -> Option<usize> {
        let name = name.trim();
        self.objects
            .iter()
            .position(|o| o.name.eq_ignore_ascii_case(name))
    }

    pub fn whereabouts(&self, id: usize) -> Whereabouts {
        if self.held == Some(id) {
            Whereabouts::Held
        } else if self.dropped.contains(&id) {
            Whereabouts::Dropped
        } else {
            Whereabouts::OnTable
        }
    }

    pub fn on_table(&self, id: usize) -> bool {
        self.whereabouts(id) == Whereabouts::OnTable
    }

    pub fn held_tool(&self) -> Option<usize> {
        self.held.filter(|&h| self.objects[h].flat_tool_face)
    }

    pub fn container_of(&self, id: usize) -> Option<usize> {
        self.objects.iter().position(|o| o.contents.contains(&id))
    }

    pub fn supporter_of(&self, id: usize) -> Option<usize> {
        self.objects.iter().position(|o| o.supports == Some(id))
    }

    /// Resting inside or on top of another object.
    pub fn is_nested(&self, id: usize) -> bool {
        self.container_of(id).is_some() || self.supporter_of(id).is_some()
    }

    /// Objects riding along with `id`: its contents and whatever it supports.
    pub fn riders(&self, id: usize) -> Vec<usize> {
        let o = &self.objects[id];
        let mut out = o.contents.clone();
        out.extend(o.supports);
        out
    }

    /// Edge-to-edge distance.
    pub fn gap(&self, a: usize, b: usize) -> f64 {
        let (oa, ob) = (&self.objects[a], &self.objects[b]);
        oa.position.distance(&ob.position) - oa.extent - ob.extent
    }

    /// On-table, top-level objects other than `id` and its own nesting
    /// relatives, nearest first (ties by id).
    pub fn neighbors(&self, id: usize) -> Vec<(usize, f64)> {
        let related: Vec<usize> = self
            .riders(id)
            .into_iter()
            .chain(self.container_of(id))
            .chain(self.supporter_of(id))
            .collect();
        let mut out: Vec<(usize, f64)> = (0..self.objects.len())
            .filter(|&o| o != id && self.on_table(o) && !self.is_nested(o) && !related.contains(&o))
            .map(|o| (o, self.gap(id, o)))
            .collect();
        out.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        out
    }

    pub fn goal_satisfied(&self, goal: &Goal) -> bool {
        let Some(s) = self.find(goal.subject()) else {
            return false;
        };
        if !self.dropped.is_empty() || self.objects[s].cracked {
            return false;
        }
        match goal {
            Goal::Held { .. } => self.held == Some(s),
            Goal::Near { target, radius, .. } => {
                let Some(t) = self.find(target) else {
                    return false;
                };
                self.on_table(s)
                    && self.on_table(t)
                    && self.objects[s].position.distance(&self.objects[t].position) <= *radius
            }
        }
    }
}
