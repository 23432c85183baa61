//! The planner, selector, detector and summarizer roles behind one trait.
//!
//! [`ScriptedVlm`] is a deterministic oracle driven by simulator ground
//! truth; [`RemoteVlm`] speaks OpenAI-compatible function calling.

mod remote;
mod scripted;
pub mod wire;

use serde::{Deserialize, Serialize};

pub use remote::RemoteVlm;
pub use scripted::{corrective_action, infer_trap, Policy, ScriptedVlm};

use crate::action::Action;
use crate::geometry::AnnotatedView;
use crate::memory::{LessonTag, ScenarioKey};
use crate::remote::BackendError;
use crate::stm::StmLedger;
use crate::world::Observation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeedbackStatus {
    Successful,
    Uncertain,
    Failed,
}

impl FeedbackStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            FeedbackStatus::Successful => "successful",
            FeedbackStatus::Uncertain => "uncertain",
            FeedbackStatus::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    pub status: FeedbackStatus,
    pub failure_cause: String,
    pub next_step_suggestion: String,
    pub completed: bool,
    pub reasoning: String,
}

impl FeedbackRecord {
    pub fn validate(&self) -> Result<(), BackendError> {
        if self.completed && self.status == FeedbackStatus::Failed {
            return Err(BackendError::ProtocolViolation(
                "feedback marks the task completed but the action failed".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrievalMode {
    Rag,
    RandomK,
    All,
    None,
}

impl RetrievalMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            RetrievalMode::Rag => "rag",
            RetrievalMode::RandomK => "random_k",
            RetrievalMode::All => "all",
            RetrievalMode::None => "none",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextEntry {
    pub record_id: u64,
    pub key: ScenarioKey,
    pub summary: String,
    #[serde(default)]
    pub lesson: Option<LessonTag>,
}

impl ContextEntry {
    /// Stored tag, or one inferred from the prose when none was stored.
    pub fn lesson_tag(&self) -> LessonTag {
        self.lesson
            .unwrap_or_else(|| LessonTag::infer_from_text(&self.summary))
    }
}

/// Past experiences handed to the planner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedContext {
    pub entries: Vec<ContextEntry>,
    pub mode: RetrievalMode,
}

impl RetrievedContext {
    pub fn empty() -> Self {
        Self {
            entries: Vec::new(),
            mode: RetrievalMode::None,
        }
    }

    pub fn render(&self) -> String {
        if self.entries.is_empty() {
            return "none".into();
        }
        self.entries
            .iter()
            .enumerate()
            .map(|(i, e)| {
                format!(
                    "long-term memory {}\nInstruction: {}\nScene: {}\nExperience: {}",
                    i + 1,
                    e.key.instruction,
                    e.key.scene_description,
                    e.summary
                )
            })
            .collect::<Vec<_>>()
            .join("\n\n")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperienceSummary {
    pub text: String,
    pub lesson: Option<LessonTag>,
}

pub trait VlmBackend: Send + Sync {
    fn name(&self) -> &str;

    fn describe_scene(&self, instruction: &str, observation: &Observation) -> Result<String, BackendError>;

    fn plan_action(
        &self,
        instruction: &str,
        observation: &Observation,
        stm: &StmLedger,
        context: &RetrievedContext,
    ) -> Result<Action, BackendError>;

    fn choose_grasp_section(&self, action: &Action, view: &AnnotatedView, observation: &Observation) -> Result<u32, BackendError>;

    fn choose_placement(&self, action: &Action, view: &AnnotatedView, observation: &Observation) -> Result<u32, BackendError>;

    fn choose_push_spot(&self, action: &Action, view: &AnnotatedView, observation: &Observation) -> Result<u32, BackendError>;

    fn evaluate_action(&self, action: &Action, observation: &Observation, instruction: &str) -> Result<FeedbackRecord, BackendError>;

    fn summarize_experience(&self, stm: &StmLedger) -> Result<ExperienceSummary, BackendError>;
}

pub(crate) fn require_labels(view: &AnnotatedView) -> Result<(), BackendError> {
    if view.options.is_empty() {
        return Err(BackendError::InvalidInput("annotated view has no options".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn completed_failure_is_a_violation() {
        let mut fb = FeedbackRecord {
            status: FeedbackStatus::Failed,
            failure_cause: "x".into(),
            next_step_suggestion: String::new(),
            completed: true,
            reasoning: String::new(),
        };
        assert!(fb.validate().is_err());
        fb.status = FeedbackStatus::Uncertain;
        assert!(fb.validate().is_ok());
    }

    #[test]
    fn context_rendering() {
        let ctx = RetrievedContext {
            entries: vec![ContextEntry {
                record_id: 3,
                key: ScenarioKey::new("Pick up the bowl.", "a bowl").unwrap(),
                summary: "Moved the apple out first.".into(),
                lesson: None,
            }],
            mode: RetrievalMode::Rag,
        };
        assert_eq!(
            ctx.render(),
            "long-term memory 1\nInstruction: Pick up the bowl.\nScene: a bowl\nExperience: Moved the apple out first."
        );
        assert_eq!(RetrievedContext::empty().render(), "none");
        assert_eq!(ctx.entries[0].lesson_tag(), LessonTag::None);
    }
}
