use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{
    plan_only, run_episode, seed_fillers, trial_seed, Backends, EpisodeConfig, MemoryMode, OrchestratorError, Result,
};
use crate::embedding::Embedder;
use crate::memory::MemoryStore;
use crate::vlm::{Policy, RetrievalMode, VlmBackend};
use crate::world::Scenario;

pub const STM_SCENARIOS: [&str; 4] = ["stm-apple-container", "stm-candy-sponge", "stm-egg", "stm-bowl-apple"];

pub const LTM_SCENARIOS: [&str; 12] = [
    "ltm-apple-container",
    "ltm-tennis-ball-mug",
    "ltm-orange-fan",
    "ltm-candy-towel",
    "ltm-paper-brush",
    "ltm-screw-towel",
    "ltm-egg",
    "ltm-sushi",
    "ltm-grape",
    "ltm-bowl-apple",
    "ltm-box-apple",
    "ltm-towel-orange",
];

/// Fillers written after each seeding episode, so the finished store holds
/// 4 + 4 * 24 = 100 records.
const FILLERS_PER_EPISODE: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SuitePreset {
    Stm,
    Ltm,
    Ablation,
}

impl SuitePreset {
    pub fn as_str(&self) -> &'static str {
        match self {
            SuitePreset::Stm => "stm",
            SuitePreset::Ltm => "ltm",
            SuitePreset::Ablation => "ablation",
        }
    }

    pub fn title(&self) -> &'static str {
        match self {
            SuitePreset::Stm => "Short-term memory: success per scenario",
            SuitePreset::Ltm => "Long-term memory: success per scenario, single trial",
            SuitePreset::Ablation => "Retrieval ablation: correct first plan, planning only",
        }
    }

    pub fn scenarios(&self) -> Vec<Scenario> {
        let names: &[&str] = match self {
            SuitePreset::Stm => &STM_SCENARIOS,
            SuitePreset::Ltm | SuitePreset::Ablation => &LTM_SCENARIOS,
        };
        names
            .iter()
            .map(|n| Scenario::builtin(n).expect("preset scenarios are built in"))
            .collect()
    }

    pub fn trials(&self) -> usize {
        match self {
            SuitePreset::Ablation => 20,
            _ => 1,
        }
    }

    pub fn needs_store(&self) -> bool {
        !matches!(self, SuitePreset::Stm)
    }

    /// Conditions compared by the preset; `base` supplies k, cap, seed and
    /// the step bound.
    pub fn conditions(&self, base: &EpisodeConfig) -> Vec<Condition> {
        let with = |memory_mode, retrieval_mode| EpisodeConfig {
            memory_mode,
            retrieval_mode,
            attempts_allowed: None,
            write_back: false,
            ..base.clone()
        };
        match self {
            SuitePreset::Stm => vec![
                Condition::new("naive", Policy::Naive, with(MemoryMode::StmOnly, RetrievalMode::None)),
                Condition::new("reflective", Policy::Reflective, with(MemoryMode::StmOnly, RetrievalMode::None)),
            ],
            SuitePreset::Ltm => vec![
                Condition::new("no-ltm", Policy::Reflective, with(MemoryMode::None, RetrievalMode::None)),
                Condition::new("stm+ltm", Policy::MemoryAware, with(MemoryMode::StmAndLtm, RetrievalMode::Rag)),
            ],
            SuitePreset::Ablation => [("all", RetrievalMode::All), ("random", RetrievalMode::RandomK), ("rag", RetrievalMode::Rag)]
                .into_iter()
                .map(|(name, mode)| {
                    let mut c = Condition::new(name, Policy::MemoryAware, with(MemoryMode::StmAndLtm, mode));
                    c.planning_only = true;
                    c
                })
                .collect(),
        }
    }
}

impl fmt::Display for SuitePreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SuitePreset {
    type Err = OrchestratorError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stm" | "stm-suite" => Ok(SuitePreset::Stm),
            "ltm" | "ltm-suite" => Ok(SuitePreset::Ltm),
            "ablation" => Ok(SuitePreset::Ablation),
            other => Err(OrchestratorError::InvalidInput(format!("unknown suite preset {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub name: String,
    pub policy: Policy,
    pub config: EpisodeConfig,
    /// Judge only the first planned action; nothing is executed.
    pub planning_only: bool,
}

impl Condition {
    pub fn new(name: &str, policy: Policy, config: EpisodeConfig) -> Self {
        Self {
            name: name.to_string(),
            policy,
            config,
            planning_only: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SuiteCell {
    pub successes: usize,
    pub trials: usize,
}

impl SuiteCell {
    pub fn rate(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.successes as f64 / self.trials as f64
        }
    }
}

impl fmt::Display for SuiteCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.successes, self.trials)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteRow {
    pub scenario: String,
    pub cells: Vec<SuiteCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteTable {
    pub title: String,
    pub conditions: Vec<String>,
    pub rows: Vec<SuiteRow>,
}

impl SuiteTable {
    pub fn totals(&self) -> Vec<SuiteCell> {
        (0..self.conditions.len())
            .map(|c| {
                self.rows.iter().fold(SuiteCell::default(), |acc, r| SuiteCell {
                    successes: acc.successes + r.cells[c].successes,
                    trials: acc.trials + r.cells[c].trials,
                })
            })
            .collect()
    }

    pub fn total_for(&self, condition: &str) -> Option<SuiteCell> {
        let i = self.conditions.iter().position(|c| c == condition)?;
        Some(self.totals()[i])
    }

    /// Aligned text table with a totals row.
    pub fn render(&self) -> String {
        let mut rows: Vec<Vec<String>> = vec![std::iter::once("scenario".to_string())
            .chain(self.conditions.iter().cloned())
            .collect()];
        for r in &self.rows {
            rows.push(std::iter::once(r.scenario.clone()).chain(r.cells.iter().map(|c| c.to_string())).collect());
        }
        rows.push(
            std::iter::once("total".to_string())
                .chain(self.totals().iter().map(|c| format!("{c} ({:.0}%)", 100.0 * c.rate())))
                .collect(),
        );
        let widths: Vec<usize> = (0..rows[0].len())
            .map(|i| rows.iter().map(|r| r[i].len()).max().unwrap_or(0))
            .collect();
        let mut out = format!("{}\n", self.title);
        for r in rows {
            let line = r
                .iter()
                .zip(&widths)
                .map(|(cell, w)| format!("{cell:<w$}"))
                .collect::<Vec<_>>()
                .join("  ");
            out.push_str(line.trim_end());
            out.push('\n');
        }
        out
    }
}

/// Runs every (scenario, condition) cell for `trials` trials. Episodes
/// that use long-term memory each get a private copy of `store`, so cells
/// never see each other's write-back.
pub fn run_suite(
    title: &str,
    scenarios: &[Scenario],
    conditions: &[Condition],
    trials: usize,
    store: Option<&MemoryStore>,
    vlm_for: &dyn Fn(Policy) -> Box<dyn VlmBackend>,
    embedder: &dyn Embedder,
) -> Result<SuiteTable> {
    let vlms: Vec<Box<dyn VlmBackend>> = conditions.iter().map(|c| vlm_for(c.policy)).collect();
    let mut rows = Vec::with_capacity(scenarios.len());
    for s in scenarios {
        let mut cells = Vec::with_capacity(conditions.len());
        for (cond, vlm) in conditions.iter().zip(&vlms) {
            let backends = Backends { vlm: vlm.as_ref(), embedder };
            let needs_store = cond.config.memory_mode == MemoryMode::StmAndLtm;
            if needs_store && store.is_none() {
                return Err(OrchestratorError::InvalidInput(format!("condition {} needs a memory store", cond.name)));
            }
            let mut cell = SuiteCell::default();
            for t in 0..trials {
                let config = EpisodeConfig {
                    seed: trial_seed(cond.config.seed, &s.name, &cond.name, t),
                    ..cond.config.clone()
                };
                let ok = if cond.planning_only {
                    plan_only(s, &config, store.filter(|_| needs_store), backends)?.correct
                } else if needs_store {
                    let mut copy = store.cloned().expect("checked above");
                    run_episode(s, &config, Some(&mut copy), backends)?.completed
                } else {
                    run_episode(s, &config, None, backends)?.completed
                };
                cell.trials += 1;
                cell.successes += usize::from(ok);
            }
            cells.push(cell);
        }
        rows.push(SuiteRow {
            scenario: s.name.clone(),
            cells,
        });
    }
    Ok(SuiteTable {
        title: title.to_string(),
        conditions: conditions.iter().map(|c| c.name.clone()).collect(),
        rows,
    })
}

/// The 100-record store the long-term suites run against: each
/// short-term scenario is solved with write-back, followed by a batch of
/// unrelated filler experiences.
pub fn build_reference_store(
    vlm_for: &dyn Fn(Policy) -> Box<dyn VlmBackend>,
    embedder: &dyn Embedder,
    seed: u64,
) -> Result<MemoryStore> {
    let vlm = vlm_for(Policy::Reflective);
    let mut store = MemoryStore::new();
    let config = EpisodeConfig {
        memory_mode: MemoryMode::StmAndLtm,
        retrieval_mode: RetrievalMode::Rag,
        write_back: true,
        seed,
        ..Default::default()
    };
    for (i, name) in STM_SCENARIOS.iter().enumerate() {
        let s = Scenario::builtin(name).expect("built in");
        let r = run_episode(&s, &config, Some(&mut store), Backends { vlm: vlm.as_ref(), embedder })?;
        if !r.completed {
            tracing::warn!(scenario = %name, "seeding episode did not complete; no experience stored");
        }
        seed_fillers(&mut store, embedder, FILLERS_PER_EPISODE, seed.wrapping_add(i as u64))?;
    }
    Ok(store)
}
