use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Goal, Result, SimObject, SimParams, WorldError, WorldState};
use crate::action::Skill;
use crate::geometry::Point2;
use crate::memory::LessonTag;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorNoteSpec {
    /// STM step before which the note is injected.
    pub step: usize,
    pub text: String,
}

/// The first action a planner that knows the trap should take.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectedAction {
    pub skill: Skill,
    pub object: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub name: String,
    pub instruction: String,
    pub attempts_allowed: u32,
    pub trap: LessonTag,
    pub goal: Goal,
    pub initial: WorldState,
    pub operator_notes: Vec<OperatorNoteSpec>,
    pub expected_first_action: Option<ExpectedAction>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    name: String,
    instruction: String,
    #[serde(default = "one")]
    attempts_allowed: u32,
    #[serde(default = "no_trap")]
    trap: LessonTag,
    goal: GoalFile,
    #[serde(default)]
    objects: Vec<ObjectFile>,
    #[serde(default)]
    params: ParamsFile,
    #[serde(default)]
    operator_notes: Vec<OperatorNoteSpec>,
    #[serde(default)]
    expected_first_action: Option<ExpectedAction>,
}

fn one() -> u32 {
    1
}

fn no_trap() -> LessonTag {
    LessonTag::None
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GoalFile {
    #[serde(rename = "type")]
    kind: String,
    subject: String,
    #[serde(default)]
    target: Option<String>,
    #[serde(default)]
    radius: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ObjectFile {
    name: String,
    x: f64,
    y: f64,
    extent: f64,
    #[serde(default)]
    fragile: bool,
    #[serde(default)]
    tiny: bool,
    #[serde(default)]
    container: bool,
    #[serde(default)]
    flat_tool: bool,
    #[serde(default)]
    contents: Vec<String>,
    #[serde(default)]
    supports: Option<String>,
    #[serde(default)]
    handle: Option<Point2>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct ParamsFile {
    occlusion_gap: Option<f64>,
    gripper_min_contact: Option<f64>,
    raster: Option<RasterFile>,
    push_step: Option<f64>,
    placement_candidates: Option<usize>,
    push_candidates: Option<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RasterFile {
    w: usize,
    h: usize,
}

impl ParamsFile {
    fn resolve(self) -> Result<SimParams> {
        let d = SimParams::default();
        let p = SimParams {
            occlusion_gap: self.occlusion_gap.unwrap_or(d.occlusion_gap),
            gripper_min_contact: self.gripper_min_contact.unwrap_or(d.gripper_min_contact),
            raster_width: self.raster.as_ref().map_or(d.raster_width, |r| r.w),
            raster_height: self.raster.as_ref().map_or(d.raster_height, |r| r.h),
            push_step: self.push_step.unwrap_or(d.push_step),
            placement_candidates: self.placement_candidates.unwrap_or(d.placement_candidates),
            push_candidates: self.push_candidates.unwrap_or(d.push_candidates),
        };
        let positive = [p.occlusion_gap, p.gripper_min_contact, p.push_step];
        if positive.iter().any(|v| !(*v > 0.0) || !v.is_finite())
            || p.raster_width == 0
            || p.raster_height == 0
            || p.placement_candidates == 0
            || p.push_candidates == 0
        {
            return Err(WorldError::Parse("params must be positive".into()));
        }
        Ok(p)
    }
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| WorldError::Parse(e.to_string()))?;
        let params = file.params.resolve()?;
        let index = |name: &str| {
            file.objects
                .iter()
                .position(|o| o.name.eq_ignore_ascii_case(name))
                .ok_or_else(|| WorldError::Parse(format!("unknown object {name:?}")))
        };
        let mut objects = Vec::with_capacity(file.objects.len());
        for (id, o) in file.objects.iter().enumerate() {
            objects.push(SimObject {
                id,
                name: o.name.clone(),
                position: Point2::new(o.x, o.y),
                extent: o.extent,
                fragile: o.fragile,
                tiny: o.tiny,
                is_container: o.container,
                contents: o.contents.iter().map(|c| index(c)).collect::<Result<_>>()?,
                supports: o.supports.as_deref().map(index).transpose()?,
                flat_tool_face: o.flat_tool,
                handle_cell: o.handle,
                cracked: false,
            });
        }
        let initial = WorldState::new(objects, params)?;
        let goal = match file.goal.kind.as_str() {
            "held" => Goal::Held {
                subject: file.goal.subject,
            },
            "near" => {
                let target = file
                    .goal
                    .target
                    .ok_or_else(|| WorldError::Parse("near goal needs a target".into()))?;
                let t = index(&target)?;
                let radius = file.goal.radius.unwrap_or(initial.objects[t].extent + 0.5);
                Goal::Near {
                    subject: file.goal.subject,
                    target,
                    radius,
                }
            }
            other => return Err(WorldError::Parse(format!("unknown goal type {other:?}"))),
        };
        index(goal.subject())?;
        if file.instruction.trim().is_empty() {
            return Err(WorldError::Parse("instruction is empty".into()));
        }
        if file.attempts_allowed == 0 {
            return Err(WorldError::Parse("attempts_allowed must be at least 1".into()));
        }
        if let Some(e) = &file.expected_first_action {
            index(&e.object)?;
        }
        Ok(Self {
            name: file.name,
            instruction: file.instruction,
            attempts_allowed: file.attempts_allowed,
            trap: file.trap,
            goal,
            initial,
            operator_notes: file.operator_notes,
            expected_first_action: file.expected_first_action,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn builtin(name: &str) -> Option<Self> {
        BUILTIN
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, text)| Self::from_toml(text).expect("builtin scenarios parse"))
    }

    /// The exact initial world.
    pub fn reset(&self) -> WorldState {
        self.initial.clone()
    }

    /// Stable hex digest of the scenario's content, used to match logs.
    pub fn fingerprint(&self) -> String {
        let text = serde_json::to_string(self).expect("scenario serializes");
        format!("{:016x}", crate::embedding::fnv1a(0, text.as_bytes()))
    }
}

const BUILTIN: [(&str, &str); 16] = [
    ("stm-apple-container", include_str!("../../scenarios/stm-apple-container.toml")),
    ("stm-candy-sponge", include_str!("../../scenarios/stm-candy-sponge.toml")),
    ("stm-egg", include_str!("../../scenarios/stm-egg.toml")),
    ("stm-bowl-apple", include_str!("../../scenarios/stm-bowl-apple.toml")),
    ("ltm-apple-container", include_str!("../../scenarios/ltm-apple-container.toml")),
    ("ltm-tennis-ball-mug", include_str!("../../scenarios/ltm-tennis-ball-mug.toml")),
    ("ltm-orange-fan", include_str!("../../scenarios/ltm-orange-fan.toml")),
    ("ltm-candy-towel", include_str!("../../scenarios/ltm-candy-towel.toml")),
    ("ltm-paper-brush", include_str!("../../scenarios/ltm-paper-brush.toml")),
    ("ltm-screw-towel", include_str!("../../scenarios/ltm-screw-towel.toml")),
    ("ltm-egg", include_str!("../../scenarios/ltm-egg.toml")),
    ("ltm-sushi", include_str!("../../scenarios/ltm-sushi.toml")),
    ("ltm-grape", include_str!("../../scenarios/ltm-grape.toml")),
    ("ltm-bowl-apple", include_str!("../../scenarios/ltm-bowl-apple.toml")),
    ("ltm-box-apple", include_str!("../../scenarios/ltm-box-apple.toml")),
    ("ltm-towel-orange", include_str!("../../scenarios/ltm-towel-orange.toml")),
];

pub const BUILTIN_SCENARIO_NAMES: [&str; 16] = {
    let mut names = [""; 16];
    let mut i = 0;
    while i < 16 {
        names[i] = BUILTIN[i].0;
        i += 1;
    }
    names
};

pub fn builtin_scenarios() -> Vec<Scenario> {
    BUILTIN_SCENARIO_NAMES
        .iter()
        .map(|n| Scenario::builtin(n).expect("listed"))
        .collect()
}
