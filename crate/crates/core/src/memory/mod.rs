//! Long-term experience memory.
//!
//! An append-only list of experience records keyed by scenario text, each with
//! a cached embedding. Three retrieval modes are offered: cosine top-k, a
//! seeded random sample, and the whole store in insertion order.
//!
//! Concurrency: the store is a plain value. Wrap it in a `RwLock` to get
//! concurrent reads with serialized appends; a retrieval holding the read
//! guard sees the store as of the call.

mod persist;
mod store;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use store::{MemoryStore, NewRecord, RecordClock, DEFAULT_TOP_K};

#[derive(Debug, Error)]
pub enum MemoryError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unknown record id {0}")]
    UnknownRecord(u64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, MemoryError>;

/// Instruction plus initial scene description; the retrieval key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioKey {
    pub instruction: String,
    pub scene_description: String,
}

impl ScenarioKey {
    pub fn new(instruction: impl Into<String>, scene_description: impl Into<String>) -> Result<Self> {
        let instruction = instruction.into();
        if instruction.trim().is_empty() {
            return Err(MemoryError::InvalidInput("instruction must not be empty".into()));
        }
        Ok(Self {
            instruction,
            scene_description: scene_description.into(),
        })
    }

    /// The text that gets embedded.
    pub fn key_text(&self) -> String {
        format!("{}\n{}", self.instruction, self.scene_description)
    }
}

/// Corrective strategy a summary taught, kept alongside the prose summary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LessonTag {
    PushObstructionFirst,
    UseFlatToolForTiny,
    PushFragileInsteadOfPick,
    UnloadContainerBeforeLift,
    None,
}

impl LessonTag {
    pub const ALL: [LessonTag; 5] = [
        LessonTag::PushObstructionFirst,
        LessonTag::UseFlatToolForTiny,
        LessonTag::PushFragileInsteadOfPick,
        LessonTag::UnloadContainerBeforeLift,
        LessonTag::None,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            LessonTag::PushObstructionFirst => "push_obstruction_first",
            LessonTag::UseFlatToolForTiny => "use_flat_tool_for_tiny",
            LessonTag::PushFragileInsteadOfPick => "push_fragile_instead_of_pick",
            LessonTag::UnloadContainerBeforeLift => "unload_container_before_lift",
            LessonTag::None => "none",
        }
    }

    /// Keyword fallback for prose that carries no tag.
    pub fn infer_from_text(text: &str) -> LessonTag {
        let t = text.to_lowercase();
        if t.contains("occlud") || t.contains("obstruct") {
            LessonTag::PushObstructionFirst
        } else if t.contains("insufficient contact") || t.contains("too small") {
            LessonTag::UseFlatToolForTiny
        } else if t.contains("crack") || t.contains("fragile") {
            LessonTag::PushFragileInsteadOfPick
        } else if t.contains("dropped") {
            LessonTag::UnloadContainerBeforeLift
        } else {
            LessonTag::None
        }
    }
}

impl std::str::FromStr for LessonTag {
    type Err = MemoryError;

    fn from_str(s: &str) -> Result<Self> {
        LessonTag::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| MemoryError::InvalidInput(format!("unknown lesson tag {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperienceRecord {
    pub id: u64,
    pub key: ScenarioKey,
    pub summary: String,
    pub embedding: Vec<f64>,
    pub episode_id: String,
    pub created_at: DateTime<Utc>,
    pub lesson: Option<LessonTag>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalResult {
    pub record: ExperienceRecord,
    pub similarity: f64,
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `a . b / (|a| |b|)`, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(MemoryError::InvalidInput(format!(
            "dimension mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let na = l2_norm(a);
    let nb = l2_norm(b);
    if !(na > 0.0) || !(nb > 0.0) || !na.is_finite() || !nb.is_finite() {
        return Err(MemoryError::InvalidInput(
            "cosine similarity needs nonzero finite vectors".into(),
        ));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn self_similarity() {
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
    }

    #[test]
    fn orthogonal() {
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn hand_computed_pair() {
        // 32 / (sqrt(14) * sqrt(77))
        let s = cosine_similarity(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert!((s - 0.974631846).abs() < 1e-9);
    }

    #[test]
    fn rejects_mismatch_and_zero() {
        assert!(cosine_similarity(&[1.0], &[1.0, 0.0]).is_err());
        assert!(cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]).is_err());
        assert!(cosine_similarity(&[], &[]).is_err());
    }

    #[test]
    fn key_text_is_pure() {
        let k = ScenarioKey::new("Pick up the bowl.", "a bowl with an apple inside on the table").unwrap();
        assert_eq!(k.key_text(), k.clone().key_text());
        assert!(k.key_text().starts_with("Pick up the bowl."));
        assert!(ScenarioKey::new("  ", "x").is_err());
    }

    #[test]
    fn lesson_tags_parse_and_infer() {
        for t in LessonTag::ALL {
            assert_eq!(t.as_str().parse::<LessonTag>().unwrap(), t);
        }
        assert_eq!(
            LessonTag::infer_from_text("The apple was occluded by a can."),
            LessonTag::PushObstructionFirst
        );
        assert_eq!(
            LessonTag::infer_from_text("The egg cracked when grasped."),
            LessonTag::PushFragileInsteadOfPick
        );
        assert_eq!(LessonTag::infer_from_text("Placed the cup."), LessonTag::None);
    }
}
