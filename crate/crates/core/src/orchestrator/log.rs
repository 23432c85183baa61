use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::episode::{exec_label, world_digest};
use super::{EpisodeConfig, EpisodeResult, OrchestratorError, Result, StepRecord};
use crate::memory::ScenarioKey;
use crate::stm::OperatorNote;
use crate::world::{execute, Scenario};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub scenario: String,
    pub fingerprint: String,
    pub instruction: String,
    pub backend: String,
    pub config: EpisodeConfig,
    pub key: Option<ScenarioKey>,
    pub context_ids: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogFooter {
    pub completed: bool,
    pub steps_taken: usize,
    pub attempts_used: u32,
    pub stop_reason: String,
    pub operator_notes: Vec<OperatorNote>,
    pub summary: Option<String>,
    pub record_id: Option<u64>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Line {
    Header(LogHeader),
    Step(StepRecord),
    Result(LogFooter),
}

/// An episode as written to disk: header line, one line per step, and a
/// closing result line.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub header: LogHeader,
    pub steps: Vec<StepRecord>,
    pub footer: Option<LogFooter>,
}

impl EpisodeLog {
    pub fn new(scenario: &Scenario, config: &EpisodeConfig, backend: &str, result: &EpisodeResult) -> Self {
        Self {
            header: LogHeader {
                scenario: scenario.name.clone(),
                fingerprint: scenario.fingerprint(),
                instruction: scenario.instruction.clone(),
                backend: backend.to_string(),
                config: config.clone(),
                key: result.key.clone(),
                context_ids: result.context_ids.clone(),
            },
            steps: result.steps.clone(),
            footer: Some(LogFooter {
                completed: result.completed,
                steps_taken: result.steps_taken,
                attempts_used: result.attempts_used,
                stop_reason: result.stop_reason.clone(),
                operator_notes: result.stm.operator_notes().to_vec(),
                summary: result.summary.clone(),
                record_id: result.record_id,
            }),
        }
    }
}

fn to_line(line: &Line) -> String {
    serde_json::to_string(line).expect("log lines serialize")
}

pub fn write_log(mut out: impl Write, log: &EpisodeLog) -> Result<()> {
    writeln!(out, "{}", to_line(&Line::Header(log.header.clone())))?;
    for s in &log.steps {
        writeln!(out, "{}", to_line(&Line::Step(s.clone())))?;
    }
    if let Some(f) = &log.footer {
        writeln!(out, "{}", to_line(&Line::Result(f.clone())))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_log(input: impl BufRead) -> Result<EpisodeLog> {
    let mut header = None;
    let mut steps = Vec::new();
    let mut footer = None;
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: Line =
            serde_json::from_str(&line).map_err(|e| OrchestratorError::Log(format!("line {}: {e}", n + 1)))?;
        match parsed {
            Line::Header(h) if header.is_none() && n == 0 => header = Some(h),
            Line::Header(_) => return Err(OrchestratorError::Log(format!("line {}: unexpected header", n + 1))),
            Line::Step(s) if header.is_some() && footer.is_none() => steps.push(s),
            Line::Result(f) if header.is_some() && footer.is_none() => footer = Some(f),
            _ => return Err(OrchestratorError::Log(format!("line {}: out of order", n + 1))),
        }
    }
    let header = header.ok_or_else(|| OrchestratorError::Log("missing header line".into()))?;
    Ok(EpisodeLog { header, steps, footer })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayReport {
    pub scenario: String,
    pub steps_checked: usize,
}

/// Re-executes the logged actions from the scenario's initial world and
/// checks every effect and resulting world against the log.
pub fn replay(log: &EpisodeLog, scenario: &Scenario) -> Result<ReplayReport> {
    if log.header.scenario != scenario.name || log.header.fingerprint != scenario.fingerprint() {
        return Err(OrchestratorError::ScenarioMismatch(format!(
            "log is for {} ({}), scenario is {} ({})",
            log.header.scenario,
            log.header.fingerprint,
            scenario.name,
            scenario.fingerprint()
        )));
    }
    let mut world = scenario.reset();
    for (i, s) in log.steps.iter().enumerate() {
        let diverged = |detail: String| OrchestratorError::Divergence { step: s.step, detail };
        if s.step != i {
            return Err(diverged(format!("expected step index {i}")));
        }
        let (after, effect) = execute(&world, &s.action, exec_label(&s.action, s.label))
            .map_err(|e| diverged(format!("action no longer executes: {e}")))?;
        if effect != s.effect {
            return Err(diverged(format!(
                "effect {} ({}) but the log has {} ({})",
                effect.kind.as_str(),
                effect.detail,
                s.effect.kind.as_str(),
                s.effect.detail
            )));
        }
        if world_digest(&after) != s.world_digest {
            return Err(diverged("resulting world differs from the log".into()));
        }
        world = if s.reset_after { scenario.reset() } else { after };
    }
    Ok(ReplayReport {
        scenario: scenario.name.clone(),
        steps_checked: log.steps.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::LocalEmbedder;
    use crate::orchestrator::{run_episode, Backends};
    use crate::vlm::{Policy, ScriptedVlm};

    fn logged(name: &str) -> (Scenario, EpisodeLog) {
        let s = Scenario::builtin(name).unwrap();
        let vlm = ScriptedVlm::new(Policy::Reflective);
        let config = EpisodeConfig::default();
        let r = run_episode(&s, &config, None, Backends { vlm: &vlm, embedder: &LocalEmbedder::default() }).unwrap();
        let log = EpisodeLog::new(&s, &config, "scripted-reflective", &r);
        (s, log)
    }

    #[test]
    fn round_trip_and_replay() {
        let (s, log) = logged("stm-apple-container");
        let mut buf = Vec::new();
        write_log(&mut buf, &log).unwrap();
        let back = read_log(buf.as_slice()).unwrap();
        assert_eq!(back, log);
        assert_eq!(replay(&back, &s).unwrap().steps_checked, 4);
    }

    #[test]
    fn tampering_detected() {
        let (s, mut log) = logged("stm-apple-container");
        log.steps[1].action.target_object = "plate".into();
        match replay(&log, &s) {
            Err(OrchestratorError::Divergence { step, .. }) => assert_eq!(step, 1),
            other => panic!("{other:?}"),
        }
        let other = Scenario::builtin("stm-egg").unwrap();
        assert!(matches!(replay(&logged("stm-apple-container").1, &other), Err(OrchestratorError::ScenarioMismatch(_))));
    }

    #[test]
    fn malformed_logs_rejected() {
        assert!(read_log("".as_bytes()).is_err());
        assert!(read_log("{\"type\":\"step\"}\n".as_bytes()).is_err());
        assert!(read_log("not json\n".as_bytes()).is_err());
    }
}
