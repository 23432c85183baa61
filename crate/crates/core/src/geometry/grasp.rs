use serde::{Deserialize, Serialize};

use super::{Approach, GeometryError, GraspHypothesis, Point2, Result};

/// `1 - min(1, |g - chosen| / diag)`.
pub fn location_score(grasp: &GraspHypothesis, chosen: Point2, diag: f64) -> Result<f64> {
    if !(diag > 0.0) || !diag.is_finite() {
        return Err(GeometryError::InvalidInput(format!(
            "normalizer must be positive, got {diag}"
        )));
    }
    if !grasp.position.is_finite() || !chosen.is_finite() {
        return Err(GeometryError::InvalidInput("non-finite location".into()));
    }
    let ratio = grasp.position.distance(&chosen) / diag;
    Ok(1.0 - ratio.min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraspSelection {
    /// Index into the hypotheses passed to [`select_grasp`].
    pub index: usize,
    pub hypothesis: GraspHypothesis,
    pub score: f64,
}

/// Picks the feasible hypothesis maximizing `confidence * location score`.
///
/// Without a chosen location the location score is 1 everywhere and this
/// reduces to the most confident feasible grasp. Ties go to the lowest index.
pub fn select_grasp(
    hypotheses: &[GraspHypothesis],
    feasible: impl Fn(&GraspHypothesis) -> bool,
    chosen: Option<Point2>,
    diag: f64,
) -> Result<GraspSelection> {
    let mut best: Option<GraspSelection> = None;
    for (index, g) in hypotheses.iter().enumerate() {
        if !g.confidence.is_finite() || g.confidence < 0.0 {
            return Err(GeometryError::InvalidInput(format!(
                "hypothesis {index} has invalid confidence {}",
                g.confidence
            )));
        }
        if !feasible(g) {
            continue;
        }
        let s_loc = match chosen {
            Some(p) => location_score(g, p, diag)?,
            None => 1.0,
        };
        let score = g.confidence * s_loc;
        if best.map_or(true, |b| score > b.score) {
            best = Some(GraspSelection {
                index,
                hypothesis: *g,
                score,
            });
        }
    }
    best.ok_or(GeometryError::NoFeasibleGrasp(hypotheses.len()))
}

/// Stand-in for an inverse-kinematics check: the grasp point must lie in a
/// reachable rectangle and its approach must be allowed at that cell.
///
/// Side approaches need `side_clearance` cells of room on their side inside
/// the rectangle; individual (cell, approach) pairs can also be blocked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReachableWorkspace {
    pub min: Point2,
    pub max: Point2,
    #[serde(default)]
    pub side_clearance: f64,
    #[serde(default)]
    pub blocked: Vec<((i64, i64), Approach)>,
}

impl ReachableWorkspace {
    pub fn new(min: Point2, max: Point2) -> Self {
        Self {
            min,
            max,
            side_clearance: 0.0,
            blocked: Vec::new(),
        }
    }

    pub fn with_side_clearance(mut self, clearance: f64) -> Self {
        self.side_clearance = clearance;
        self
    }

    pub fn block(mut self, cell: (i64, i64), approach: Approach) -> Self {
        self.blocked.push((cell, approach));
        self
    }

    fn inside(&self, p: Point2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn is_feasible(&self, grasp: &GraspHypothesis) -> bool {
        let p = grasp.position;
        if !p.is_finite() || !self.inside(p) {
            return false;
        }
        let approach_ok = match grasp.approach {
            Approach::Top => true,
            Approach::SideLeft => p.x - self.side_clearance >= self.min.x,
            Approach::SideRight => p.x + self.side_clearance <= self.max.x,
        };
        approach_ok && !self.blocked.contains(&(p.cell(), grasp.approach))
    }
}
