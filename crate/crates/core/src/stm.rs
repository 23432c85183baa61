//! Short-term memory: the action/feedback log of the current task.

use serde::{Deserialize, Serialize};

use crate::action::Action;
use crate::vlm::{FeedbackRecord, FeedbackStatus};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StmEntry {
    pub step: usize,
    pub action: Action,
    pub feedback: FeedbackRecord,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperatorNote {
    pub step: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StmLedger {
    entries: Vec<StmEntry>,
    operator_notes: Vec<OperatorNote>,
}

impl StmLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[StmEntry] {
        &self.entries
    }

    pub fn operator_notes(&self) -> &[OperatorNote] {
        &self.operator_notes
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty() && self.operator_notes.is_empty()
    }

    /// Index the next entry will get.
    pub fn next_step(&self) -> usize {
        self.entries.len()
    }

    pub fn push(&mut self, action: Action, feedback: FeedbackRecord) -> usize {
        let step = self.next_step();
        self.entries.push(StmEntry { step, action, feedback });
        step
    }

    pub fn add_note(&mut self, text: impl Into<String>) -> Result<(), String> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err("operator note is empty".into());
        }
        let step = self.next_step();
        self.operator_notes.push(OperatorNote { step, text });
        Ok(())
    }

    pub fn last_completed(&self) -> bool {
        self.entries.last().is_some_and(|e| e.feedback.completed)
    }

    pub fn failures(&self) -> impl DoubleEndedIterator<Item = &StmEntry> {
        self.entries
            .iter()
            .filter(|e| e.feedback.status == FeedbackStatus::Failed)
    }

    /// Log lines in step order; a note precedes the entry of the same step.
    pub fn render(&self) -> String {
        let mut lines = Vec::new();
        let mut notes = self.operator_notes.iter().peekable();
        for e in &self.entries {
            while let Some(n) = notes.next_if(|n| n.step <= e.step) {
                lines.push(note_line(n));
            }
            let fb = &e.feedback;
            let mut line = format!(
                "At time step {}, the robot executed {} ({}). VLM detected that the action was {}.",
                e.step,
                e.action.action_description.trim_end_matches('.'),
                e.action,
                fb.status.as_str()
            );
            if !fb.failure_cause.is_empty() {
                line.push_str(&format!(" Failure cause: {}.", fb.failure_cause));
            }
            if !fb.next_step_suggestion.is_empty() {
                line.push_str(&format!(" Suggestions for next action: {}.", fb.next_step_suggestion));
            }
            if fb.completed {
                line.push_str(" The task is completed.");
            }
            lines.push(line);
        }
        lines.extend(notes.map(note_line));
        if lines.is_empty() {
            return "none".into();
        }
        lines.join("\n")
    }
}

fn note_line(n: &OperatorNote) -> String {
    format!("At time step {}, Observation from human: {}", n.step, n.text)
}
