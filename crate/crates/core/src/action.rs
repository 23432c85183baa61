//! Parameterized skill invocations produced by the planner.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::geometry::PushDirection;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Skill {
    Pick,
    Place,
    Push,
}

impl Skill {
    pub fn as_str(&self) -> &'static str {
        match self {
            Skill::Pick => "pick",
            Skill::Place => "place",
            Skill::Push => "push",
        }
    }
}

impl std::str::FromStr for Skill {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "pick" => Ok(Skill::Pick),
            "place" => Ok(Skill::Place),
            "push" => Ok(Skill::Push),
            other => Err(format!("unknown skill {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Action {
    pub skill: Skill,
    pub target_object: String,
    #[serde(default)]
    pub grasp_part: Option<String>,
    #[serde(default)]
    pub specific_grasp_required: bool,
    #[serde(default)]
    pub placement_location: Option<String>,
    #[serde(default)]
    pub precise_placement_spot_required: bool,
    #[serde(default)]
    pub push_direction: Option<PushDirection>,
    #[serde(default)]
    pub action_description: String,
    #[serde(default)]
    pub scene_description: String,
    #[serde(default)]
    pub reasoning: String,
}

impl Action {
    fn bare(skill: Skill, target: &str) -> Self {
        Self {
            skill,
            target_object: target.to_string(),
            grasp_part: None,
            specific_grasp_required: false,
            placement_location: None,
            precise_placement_spot_required: false,
            push_direction: None,
            action_description: String::new(),
            scene_description: String::new(),
            reasoning: String::new(),
        }
    }

    pub fn pick(target: &str) -> Self {
        let mut a = Self::bare(Skill::Pick, target);
        a.action_description = format!("Pick up the {target}.");
        a
    }

    pub fn place(target: &str, location: &str) -> Self {
        let mut a = Self::bare(Skill::Place, target);
        a.placement_location = Some(location.to_string());
        a.action_description = format!("Place the {target} on the {location}.");
        a
    }

    pub fn push(target: &str, direction: PushDirection) -> Self {
        let mut a = Self::bare(Skill::Push, target);
        a.push_direction = Some(direction);
        a.action_description = format!("Push the {target} to the {}.", direction.as_str());
        a
    }

    pub fn with_grasp(mut self, part: Option<&str>, specific: bool) -> Self {
        self.grasp_part = part.map(str::to_string);
        self.specific_grasp_required = specific;
        self
    }

    pub fn with_precise_spot(mut self, precise: bool) -> Self {
        self.precise_placement_spot_required = precise;
        self
    }

    pub fn with_scene(mut self, scene: impl Into<String>) -> Self {
        self.scene_description = scene.into();
        self
    }

    pub fn with_reasoning(mut self, reasoning: impl Into<String>) -> Self {
        self.reasoning = reasoning.into();
        self
    }

    /// Checks that the populated fields match the skill.
    pub fn validate(&self) -> Result<(), String> {
        if self.target_object.trim().is_empty() {
            return Err("target_object is empty".into());
        }
        let grasp = self.grasp_part.is_some() || self.specific_grasp_required;
        let place = self.placement_location.is_some() || self.precise_placement_spot_required;
        let push = self.push_direction.is_some();
        match self.skill {
            Skill::Pick if place || push => Err("pick carries placement or push fields".into()),
            Skill::Place if grasp || push => Err("place carries grasp or push fields".into()),
            Skill::Place if self.placement_location.as_deref().map_or(true, |l| l.trim().is_empty()) => {
                Err("place needs a placement_location".into())
            }
            Skill::Push if grasp || place => Err("push carries grasp or placement fields".into()),
            Skill::Push if !push => Err("push needs a push_direction".into()),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.skill {
            Skill::Pick => write!(f, "pick({})", self.target_object),
            Skill::Place => write!(
                f,
                "place({}, {})",
                self.target_object,
                self.placement_location.as_deref().unwrap_or("?")
            ),
            Skill::Push => write!(
                f,
                "push({}, {})",
                self.target_object,
                self.push_direction.map_or("?", |d| d.as_str())
            ),
        }
    }
}
