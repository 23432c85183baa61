use serde::{Deserialize, Serialize};

use super::exec::disc_mask;
use super::{Effect, Goal, WorldState};
use crate::geometry::{Approach, GraspHypothesis, Point2, RasterMask};

const BASE_CONFIDENCE: f64 = 0.9;
const OVERLAP_PENALTY: f64 = 0.15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedObject {
    pub name: String,
    pub position: Point2,
    pub extent: f64,
    pub mask: RasterMask,
    pub grasps: Vec<GraspHypothesis>,
    pub handle: Option<Point2>,
    pub tiny: bool,
    pub fragile: bool,
    pub cracked: bool,
    pub is_container: bool,
    pub flat_tool_face: bool,
    pub contents: Vec<String>,
    pub supports: Option<String>,
    /// Container or supporter this object rests in or on.
    pub resting_on: Option<String>,
}

/// Simulator facts handed to scripted backends only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub goal: Goal,
    pub goal_satisfied: bool,
    pub last_effect: Option<Effect>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub scene: String,
    pub raster_width: usize,
    pub raster_height: usize,
    /// Objects on the table, by id.
    pub objects: Vec<ObservedObject>,
    pub held: Option<String>,
    pub held_flat_tool: bool,
    pub dropped: Vec<String>,
    #[serde(default)]
    pub ground_truth: Option<GroundTruth>,
}

impl Observation {
    pub fn with_ground_truth(mut self, gt: GroundTruth) -> Self {
        self.ground_truth = Some(gt);
        self
    }

    pub fn object(&self, name: &str) -> Option<&ObservedObject> {
        self.objects.iter().find(|o| o.name.eq_ignore_ascii_case(name.trim()))
    }

    pub fn is_held(&self, name: &str) -> bool {
        self.held.as_deref().is_some_and(|h| h.eq_ignore_ascii_case(name.trim()))
    }

    /// Top-level objects other than `name` and its nesting relatives, with
    /// edge-to-edge gaps, nearest first.
    pub fn neighbors(&self, name: &str) -> Vec<(&ObservedObject, f64)> {
        let Some(me) = self.object(name) else {
            return Vec::new();
        };
        let related = |o: &ObservedObject| {
            me.contents.contains(&o.name)
                || me.supports.as_deref() == Some(&o.name)
                || me.resting_on.as_deref() == Some(&o.name)
        };
        let mut out: Vec<(&ObservedObject, f64)> = self
            .objects
            .iter()
            .filter(|o| o.name != me.name && o.resting_on.is_none() && !related(o))
            .map(|o| (o, o.position.distance(&me.position) - o.extent - me.extent))
            .collect();
        out.sort_by(|a, b| a.1.total_cmp(&b.1));
        out
    }

    /// Plain-text rendering for a remote model, without ground truth.
    pub fn render(&self) -> String {
        let mut out = format!("Scene: {}\n", self.scene);
        for o in &self.objects {
            out.push_str(&format!("- {} at {}, radius {:.2}", o.name, o.position, o.extent));
            if let Some(r) = &o.resting_on {
                out.push_str(&format!(", resting on {r}"));
            }
            out.push('\n');
        }
        if let Some(h) = &self.held {
            out.push_str(&format!("The gripper is holding the {h}.\n"));
        }
        for d in &self.dropped {
            out.push_str(&format!("The {d} is on the floor.\n"));
        }
        out
    }
}

fn article(phrase: &str) -> &'static str {
    match phrase.chars().next() {
        Some(c) if "aeiouAEIOU".contains(c) => "an",
        _ => "a",
    }
}

fn with_article(phrase: String) -> String {
    format!("{} {phrase}", article(&phrase))
}

fn noun_phrase(w: &WorldState, id: usize) -> String {
    let o = w.object(id);
    let mut words = Vec::new();
    if o.tiny {
        words.push("tiny");
    }
    if o.cracked {
        words.push("cracked");
    } else if o.fragile {
        words.push("fragile");
    }
    words.push(&o.name);
    with_article(words.join(" "))
}

fn join_and(items: &[String]) -> String {
    match items {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} and {last}", init.join(", ")),
    }
}

fn object_phrase(w: &WorldState, id: usize) -> String {
    let o = w.object(id);
    let mut out = noun_phrase(w, id);
    let inside: Vec<String> = o.contents.iter().map(|&c| noun_phrase(w, c)).collect();
    if !inside.is_empty() {
        out.push_str(&format!(" with {} inside", join_and(&inside)));
    }
    if let Some(s) = o.supports {
        out.push_str(&format!(" with {} on top", noun_phrase(w, s)));
    }
    out
}

/// Canonical scene sentence built from the world's objects and relations.
pub fn describe(w: &WorldState) -> String {
    let top: Vec<String> = (0..w.objects.len())
        .filter(|&i| w.on_table(i) && !w.is_nested(i))
        .map(|i| object_phrase(w, i))
        .collect();
    let mut out = match top.as_slice() {
        [] => "an empty table".to_string(),
        [one] => format!("{one} on the table"),
        [first, rest @ ..] => format!("{first} next to {} on the table", join_and(rest)),
    };
    if let Some(h) = w.held {
        out.push_str(&format!("; the robot is holding {}", noun_phrase(w, h)));
    }
    if !w.dropped.is_empty() {
        let fallen: Vec<String> = w.dropped.iter().map(|&d| noun_phrase(w, d)).collect();
        let verb = if fallen.len() == 1 { "is" } else { "are" };
        out.push_str(&format!("; {} {verb} on the floor", join_and(&fallen)));
    }
    out
}

fn confidence(w: &WorldState, id: usize) -> f64 {
    let o = w.object(id);
    let overlapping = w
        .objects
        .iter()
        .filter(|p| p.id != id && w.on_table(p.id))
        .filter(|p| p.position.distance(&o.position) < p.extent + o.extent)
        .count();
    (BASE_CONFIDENCE - OVERLAP_PENALTY * overlapping as f64).clamp(0.05, 0.95)
}

pub fn observe(w: &WorldState) -> Observation {
    let objects = (0..w.objects.len())
        .filter(|&i| w.on_table(i))
        .map(|i| {
            let o = w.object(i);
            let c = confidence(w, i);
            let p = o.position;
            ObservedObject {
                name: o.name.clone(),
                position: p,
                extent: o.extent,
                mask: disc_mask(p, o.extent),
                grasps: vec![
                    GraspHypothesis::new(p, Approach::Top, c),
                    GraspHypothesis::new(Point2::new(p.x - o.extent, p.y), Approach::SideLeft, c),
                    GraspHypothesis::new(Point2::new(p.x + o.extent, p.y), Approach::SideRight, c),
                ],
                handle: o.handle_cell,
                tiny: o.tiny,
                fragile: o.fragile,
                cracked: o.cracked,
                is_container: o.is_container,
                flat_tool_face: o.flat_tool_face,
                contents: o.contents.iter().map(|&c| w.object(c).name.clone()).collect(),
                supports: o.supports.map(|s| w.object(s).name.clone()),
                resting_on: w
                    .container_of(i)
                    .or_else(|| w.supporter_of(i))
                    .map(|r| w.object(r).name.clone()),
            }
        })
        .collect();
    Observation {
        scene: describe(w),
        raster_width: w.params.raster_width,
        raster_height: w.params.raster_height,
        objects,
        held: w.held.map(|h| w.object(h).name.clone()),
        held_flat_tool: w.held_tool().is_some(),
        dropped: w.dropped.iter().map(|&d| w.object(d).name.clone()).collect(),
        ground_truth: None,
    }
}
