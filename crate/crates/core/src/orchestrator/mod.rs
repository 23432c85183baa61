//! The plan, execute, verify loop around the backends, plus suites and
//! episode logs built on top of it.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::Embedder;
use crate::memory::{MemoryError, MemoryStore, ScenarioKey};
use crate::remote::BackendError;
use crate::vlm::{ContextEntry, RetrievalMode, RetrievedContext, VlmBackend};
use crate::world::{Observation, WorldError};

mod episode;
mod fillers;
mod log;
mod suite;

pub use episode::{plan_only, run_episode, Episode, EpisodeResult, PlanOutcome, StepRecord, RESET_NOTE};
pub use fillers::{filler_entries, seed_fillers, FILLER_OBJECTS, FILLER_PLACES};
pub use log::{read_log, replay, write_log, EpisodeLog, LogHeader, ReplayReport};
pub use suite::{
    build_reference_store, run_suite, Condition, SuiteCell, SuitePreset, SuiteRow, SuiteTable, LTM_SCENARIOS,
    STM_SCENARIOS,
};

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("backend: {0}")]
    Backend(#[from] BackendError),
    #[error("world: {0}")]
    World(#[from] WorldError),
    #[error("memory: {0}")]
    Memory(#[from] MemoryError),
    #[error("log: {0}")]
    Log(String),
    #[error("log belongs to a different scenario: {0}")]
    ScenarioMismatch(String),
    #[error("replay diverged at step {step}: {detail}")]
    Divergence { step: usize, detail: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = OrchestratorError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemoryMode {
    None,
    StmOnly,
    StmAndLtm,
}

impl MemoryMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            MemoryMode::None => "none",
            MemoryMode::StmOnly => "stm",
            MemoryMode::StmAndLtm => "stm+ltm",
        }
    }
}

impl fmt::Display for MemoryMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MemoryMode {
    type Err = OrchestratorError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(MemoryMode::None),
            "stm" | "stm_only" => Ok(MemoryMode::StmOnly),
            "stm+ltm" | "stm_and_ltm" => Ok(MemoryMode::StmAndLtm),
            other => Err(OrchestratorError::InvalidInput(format!("unknown memory mode {other:?}"))),
        }
    }
}

impl FromStr for RetrievalMode {
    type Err = OrchestratorError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rag" => Ok(RetrievalMode::Rag),
            "random" | "random_k" => Ok(RetrievalMode::RandomK),
            "all" => Ok(RetrievalMode::All),
            "none" => Ok(RetrievalMode::None),
            other => Err(OrchestratorError::InvalidInput(format!("unknown retrieval mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub memory_mode: MemoryMode,
    pub retrieval_mode: RetrievalMode,
    pub k: usize,
    pub context_cap: usize,
    pub max_steps: usize,
    /// Overrides the scenario's own budget when set.
    pub attempts_allowed: Option<u32>,
    pub seed: u64,
    pub write_back: bool,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            memory_mode: MemoryMode::StmOnly,
            retrieval_mode: RetrievalMode::Rag,
            k: 5,
            context_cap: 5,
            max_steps: 12,
            attempts_allowed: None,
            seed: 0,
            write_back: false,
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_steps == 0 {
            return Err(OrchestratorError::InvalidInput("max_steps must be at least 1".into()));
        }
        if self.retrieval_mode == RetrievalMode::Rag && self.k > self.context_cap {
            return Err(OrchestratorError::InvalidInput(format!(
                "k ({}) exceeds the context cap ({})",
                self.k, self.context_cap
            )));
        }
        if self.attempts_allowed == Some(0) {
            return Err(OrchestratorError::InvalidInput("attempts_allowed must be at least 1".into()));
        }
        Ok(())
    }
}

/// The model roles and embedder an episode talks to.
#[derive(Clone, Copy)]
pub struct Backends<'a> {
    pub vlm: &'a dyn VlmBackend,
    pub embedder: &'a dyn Embedder,
}

/// Pairs the instruction with the backend's description of the first scene.
pub fn build_key(instruction: &str, initial: &Observation, vlm: &dyn VlmBackend) -> Result<ScenarioKey> {
    if instruction.trim().is_empty() {
        return Err(OrchestratorError::InvalidInput("instruction is empty".into()));
    }
    let scene = vlm.describe_scene(instruction, initial)?;
    Ok(ScenarioKey::new(instruction, scene)?)
}

/// Context for the planner, truncated to `context_cap` entries whatever
/// the mode yields.
pub fn retrieve_context(store: &MemoryStore, query: &[f64], config: &EpisodeConfig) -> Result<RetrievedContext> {
    let records = match config.retrieval_mode {
        RetrievalMode::None => Vec::new(),
        RetrievalMode::Rag => store
            .retrieve_top_k(query, config.k)?
            .into_iter()
            .map(|r| r.record)
            .collect(),
        RetrievalMode::RandomK => store.retrieve_random_k(config.k, config.seed),
        RetrievalMode::All => store.retrieve_all(),
    };
    let entries = records
        .into_iter()
        .take(config.context_cap)
        .map(|r| ContextEntry {
            record_id: r.id,
            key: r.key,
            summary: r.summary,
            lesson: r.lesson,
        })
        .collect();
    Ok(RetrievedContext {
        entries,
        mode: config.retrieval_mode,
    })
}

/// Stable 64-bit seed for one trial of one suite cell.
pub fn trial_seed(base: u64, scenario: &str, condition: &str, trial: usize) -> u64 {
    let text = format!("{scenario}\u{1f}{condition}\u{1f}{trial}");
    crate::embedding::fnv1a(base, text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::LocalEmbedder;
    use crate::memory::NewRecord;
    use crate::vlm::{Policy, ScriptedVlm};
    use crate::world::{observe, Scenario};

    fn store_of(n: usize) -> (MemoryStore, LocalEmbedder) {
        let e = LocalEmbedder::default();
        let mut s = MemoryStore::new();
        for i in 0..n {
            let key = ScenarioKey::new(format!("Pick up the item {i}."), format!("scene {i}")).unwrap();
            let v = e.embed(&key.key_text()).unwrap();
            s.append_record(NewRecord::new(key, format!("summary {i}"), v)).unwrap();
        }
        (s, e)
    }

    #[test]
    fn keys_are_deterministic_and_scene_dependent() {
        let vlm = ScriptedVlm::new(Policy::Naive);
        let a = Scenario::builtin("stm-egg").unwrap();
        let b = Scenario::builtin("ltm-grape").unwrap();
        let ka = build_key(&a.instruction, &observe(&a.reset()), &vlm).unwrap();
        assert_eq!(ka, build_key(&a.instruction, &observe(&a.reset()), &vlm).unwrap());
        let kb = build_key(&a.instruction, &observe(&b.reset()), &vlm).unwrap();
        assert_eq!(ka.instruction, kb.instruction);
        assert_ne!(ka.key_text(), kb.key_text());
        assert!(build_key(" ", &observe(&a.reset()), &vlm).is_err());
    }

    #[test]
    fn all_mode_truncates_in_insertion_order() {
        let (store, e) = store_of(100);
        let q = e.embed("Pick up the item 42.").unwrap();
        let config = EpisodeConfig { retrieval_mode: RetrievalMode::All, ..Default::default() };
        let ctx = retrieve_context(&store, &q, &config).unwrap();
        assert_eq!(ctx.entries.iter().map(|e| e.record_id).collect::<Vec<_>>(), vec![0, 1, 2, 3, 4]);
        let none = EpisodeConfig { retrieval_mode: RetrievalMode::None, ..Default::default() };
        assert!(retrieve_context(&store, &q, &none).unwrap().entries.is_empty());
    }

    #[test]
    fn rag_and_random_respect_cap() {
        let (store, e) = store_of(30);
        let q = e.embed("Pick up the item 7.\nscene 7").unwrap();
        let rag = EpisodeConfig { k: 3, context_cap: 5, ..Default::default() };
        let ctx = retrieve_context(&store, &q, &rag).unwrap();
        assert_eq!(ctx.entries.len(), 3);
        assert_eq!(ctx.entries[0].record_id, 7);
        let random = EpisodeConfig { retrieval_mode: RetrievalMode::RandomK, k: 8, context_cap: 5, ..Default::default() };
        let a = retrieve_context(&store, &q, &random).unwrap();
        assert_eq!(a.entries.len(), 5);
        assert_eq!(a, retrieve_context(&store, &q, &random).unwrap());
    }

    #[test]
    fn config_checks() {
        assert!(EpisodeConfig::default().validate().is_ok());
        assert!(EpisodeConfig { max_steps: 0, ..Default::default() }.validate().is_err());
        assert!(EpisodeConfig { k: 6, ..Default::default() }.validate().is_err());
        assert!(EpisodeConfig { k: 6, retrieval_mode: RetrievalMode::All, ..Default::default() }.validate().is_ok());
        assert_eq!("stm+ltm".parse::<MemoryMode>().unwrap(), MemoryMode::StmAndLtm);
        assert_eq!("random".parse::<RetrievalMode>().unwrap(), RetrievalMode::RandomK);
        assert!("most".parse::<RetrievalMode>().is_err());
    }

    #[test]
    fn trial_seeds_differ() {
        assert_ne!(trial_seed(1, "a", "rag", 0), trial_seed(1, "a", "rag", 1));
        assert_eq!(trial_seed(1, "a", "rag", 0), trial_seed(1, "a", "rag", 0));
    }
}
