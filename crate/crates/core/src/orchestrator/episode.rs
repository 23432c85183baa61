use serde::{Deserialize, Serialize};

use super::{build_key, retrieve_context, Backends, EpisodeConfig, MemoryMode, OrchestratorError, Result};
use crate::action::{Action, Skill};
use crate::embedding::fnv1a;
use crate::geometry::{annotate, select_grasp, AnnotatedView, CandidateSet, GraspHypothesis, RasterMask, ReachableWorkspace};
use crate::memory::{MemoryStore, NewRecord, ScenarioKey};
use crate::remote::BackendError;
use crate::stm::StmLedger;
use crate::vlm::{FeedbackRecord, FeedbackStatus, RetrievedContext};
use crate::world::{
    execute, grasp_candidates, observe, placement_candidates, push_candidates, Effect, GroundTruth, Observation, Scenario,
    WorldState,
};

/// Note added to short-term memory when a failed step forces a reset.
pub const RESET_NOTE: &str = "The operator reset the scene to its initial state.";

/// One pass through plan, execute and verify.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub attempt: u32,
    pub action: Action,
    /// Option the selector picked, when the action needed one.
    pub label: Option<u32>,
    pub grasp: Option<GraspHypothesis>,
    pub effect: Effect,
    pub feedback: FeedbackRecord,
    pub reset_after: bool,
    /// Digest of the world right after the action.
    pub world_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub scenario: String,
    pub completed: bool,
    pub steps_taken: usize,
    pub attempts_used: u32,
    pub stop_reason: String,
    pub stm: StmLedger,
    pub key: Option<ScenarioKey>,
    pub context_ids: Vec<u64>,
    pub summary: Option<String>,
    pub record_id: Option<u64>,
    pub steps: Vec<StepRecord>,
}

impl EpisodeResult {
    /// Human-readable step log.
    pub fn transcript(&self) -> String {
        let mut out = String::new();
        let mut notes = self.stm.operator_notes().iter().peekable();
        for s in &self.steps {
            while let Some(n) = notes.next_if(|n| n.step <= s.step) {
                out.push_str(&format!("  operator: {}\n", n.text));
            }
            let fb = &s.feedback;
            out.push_str(&format!("step {} (attempt {}): {}", s.step, s.attempt, s.action));
            if let Some(l) = s.label {
                out.push_str(&format!(" [option {l}]"));
            }
            out.push('\n');
            out.push_str(&format!("  effect: {}", s.effect.kind.as_str()));
            if !s.effect.detail.is_empty() {
                out.push_str(&format!(" ({})", s.effect.detail));
            }
            out.push('\n');
            out.push_str(&format!("  feedback: {}", fb.status.as_str()));
            if !fb.failure_cause.is_empty() {
                out.push_str(&format!("; cause: {}", fb.failure_cause));
            }
            if !fb.next_step_suggestion.is_empty() {
                out.push_str(&format!("; suggestion: {}", fb.next_step_suggestion));
            }
            out.push_str(&format!("; completed: {}\n", fb.completed));
            if s.reset_after {
                out.push_str("  scene reset\n");
            }
        }
        for n in notes {
            out.push_str(&format!("  operator: {}\n", n.text));
        }
        out.push_str(&format!(
            "{}: {} after {} step(s), {} attempt(s) ({})\n",
            self.scenario,
            if self.completed { "completed" } else { "failed" },
            self.steps_taken,
            self.attempts_used,
            self.stop_reason
        ));
        out
    }
}

pub(crate) fn world_digest(w: &WorldState) -> String {
    let bytes = serde_json::to_vec(w).expect("world serializes");
    format!("{:016x}", fnv1a(0, &bytes))
}

/// Whether the skill hands its selector label to the simulator.
pub(crate) fn exec_label(action: &Action, label: Option<u32>) -> Option<u32> {
    match action.skill {
        Skill::Pick => None,
        Skill::Place | Skill::Push => label,
    }
}

/// An episode in progress; [`run_episode`] drives it to the end.
pub struct Episode<'a> {
    scenario: &'a Scenario,
    config: EpisodeConfig,
    backends: Backends<'a>,
    store: Option<&'a mut MemoryStore>,
    world: WorldState,
    last_effect: Option<Effect>,
    stm: StmLedger,
    key: Option<ScenarioKey>,
    key_embedding: Option<Vec<f64>>,
    context: RetrievedContext,
    attempts_allowed: u32,
    attempts_used: u32,
    notes_injected: Vec<bool>,
    steps: Vec<StepRecord>,
    completed: bool,
    stop_reason: Option<String>,
}

impl<'a> Episode<'a> {
    pub fn new(
        scenario: &'a Scenario,
        config: EpisodeConfig,
        store: Option<&'a mut MemoryStore>,
        backends: Backends<'a>,
    ) -> Result<Self> {
        config.validate()?;
        let with_ltm = config.memory_mode == MemoryMode::StmAndLtm;
        if with_ltm != store.is_some() {
            return Err(OrchestratorError::InvalidInput(
                "a memory store is required exactly when long-term memory is enabled".into(),
            ));
        }
        let world = scenario.reset();
        let mut ep = Self {
            scenario,
            attempts_allowed: config.attempts_allowed.unwrap_or(scenario.attempts_allowed),
            config,
            backends,
            store,
            world,
            last_effect: None,
            stm: StmLedger::new(),
            key: None,
            key_embedding: None,
            context: RetrievedContext::empty(),
            attempts_used: 1,
            notes_injected: vec![false; scenario.operator_notes.len()],
            steps: Vec::new(),
            completed: false,
            stop_reason: None,
        };
        if let Some(store) = ep.store.as_deref() {
            let obs = ep.observation();
            let key = build_key(&scenario.instruction, &obs, backends.vlm)?;
            let emb = backends.embedder.embed(&key.key_text())?;
            if let Some(d) = store.dimension() {
                if d != emb.len() {
                    return Err(OrchestratorError::InvalidInput(format!(
                        "store holds {d}-dimensional embeddings but the embedder produced {}",
                        emb.len()
                    )));
                }
            }
            ep.context = retrieve_context(store, &emb, &ep.config)?;
            ep.key = Some(key);
            ep.key_embedding = Some(emb);
        }
        Ok(ep)
    }

    pub fn is_finished(&self) -> bool {
        self.stop_reason.is_some()
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }

    pub fn stm(&self) -> &StmLedger {
        &self.stm
    }

    pub fn context(&self) -> &RetrievedContext {
        &self.context
    }

    /// Current observation, with the simulator facts scripted roles read.
    pub fn observation(&self) -> Observation {
        let goal = self.scenario.goal.clone();
        observe(&self.world).with_ground_truth(GroundTruth {
            goal_satisfied: self.world.goal_satisfied(&goal),
            goal,
            last_effect: self.last_effect.clone(),
        })
    }

    /// Adds human feedback, visible to the planner from the next step on.
    pub fn inject_operator_note(&mut self, text: &str) -> Result<()> {
        if self.is_finished() {
            return Err(OrchestratorError::InvalidInput("the episode has already finished".into()));
        }
        self.stm.add_note(text).map_err(OrchestratorError::InvalidInput)
    }

    fn inject_configured_notes(&mut self) -> Result<()> {
        let now = self.stm.next_step();
        for (i, note) in self.scenario.operator_notes.iter().enumerate() {
            if !self.notes_injected[i] && note.step <= now {
                self.notes_injected[i] = true;
                self.stm.add_note(note.text.clone()).map_err(OrchestratorError::InvalidInput)?;
            }
        }
        Ok(())
    }

    fn selector_label(
        &self,
        action: &Action,
        base: &RasterMask,
        set: &CandidateSet,
        obs: &Observation,
    ) -> Result<u32> {
        let view: AnnotatedView = annotate(base, set).map_err(|e| OrchestratorError::InvalidInput(e.to_string()))?;
        let vlm = self.backends.vlm;
        let label = match action.skill {
            Skill::Pick => vlm.choose_grasp_section(action, &view, obs)?,
            Skill::Place => vlm.choose_placement(action, &view, obs)?,
            Skill::Push => vlm.choose_push_spot(action, &view, obs)?,
        };
        if set.get(label).is_none() {
            return Err(BackendError::ProtocolViolation(format!("label {label} was not offered")).into());
        }
        Ok(label)
    }

    /// Runs the annotation sub-query an action asks for. Unresolvable
    /// targets are left for the simulator to reject.
    fn resolve(&self, action: &Action, obs: &Observation) -> Result<(Option<u32>, Option<GraspHypothesis>)> {
        let full = RasterMask::from_fn(obs.raster_width, obs.raster_height, |_, _| true);
        match action.skill {
            Skill::Pick => {
                let Some(target) = obs.object(&action.target_object) else {
                    return Ok((None, None));
                };
                let mut label = None;
                let mut chosen = None;
                if action.specific_grasp_required {
                    let set = grasp_candidates(&self.world, &target.name)?;
                    let l = self.selector_label(action, &target.mask, &set, obs)?;
                    chosen = set.get(l).map(|c| c.location);
                    label = Some(l);
                }
                let b = &self.world.bounds;
                let ws = ReachableWorkspace::new(b.min, b.max);
                let grasp = select_grasp(&target.grasps, |g| ws.is_feasible(g), chosen, b.diagonal())
                    .ok()
                    .map(|s| s.hypothesis);
                Ok((label, grasp))
            }
            Skill::Place => {
                if !action.precise_placement_spot_required {
                    return Ok((None, None));
                }
                let location = action.placement_location.as_deref().unwrap_or("table");
                let Ok(set) = placement_candidates(&self.world, location) else {
                    return Ok((None, None));
                };
                let base = obs.object(location).map_or(full, |o| o.mask.clone());
                Ok((Some(self.selector_label(action, &base, &set, obs)?), None))
            }
            Skill::Push => {
                let (Some(target), Some(dir)) = (obs.object(&action.target_object), action.push_direction) else {
                    return Ok((None, None));
                };
                let set = push_candidates(&self.world, &target.name, dir)?;
                Ok((Some(self.selector_label(action, &full, &set, obs)?), None))
            }
        }
    }

    pub fn step(&mut self) -> Result<&StepRecord> {
        if self.is_finished() {
            return Err(OrchestratorError::InvalidInput("the episode has already finished".into()));
        }
        self.inject_configured_notes()?;
        let vlm = self.backends.vlm;
        let instruction = &self.scenario.instruction;
        let obs = self.observation();
        let blank = StmLedger::new();
        let empty = RetrievedContext::empty();
        let (stm, context) = match self.config.memory_mode {
            MemoryMode::None => (&blank, &empty),
            _ => (&self.stm, &self.context),
        };
        let action = vlm.plan_action(instruction, &obs, stm, context)?;
        action.validate().map_err(BackendError::ProtocolViolation)?;
        let (label, grasp) = self.resolve(&action, &obs)?;

        let (after, effect) = execute(&self.world, &action, exec_label(&action, label))?;
        let perturbed = after != self.world;
        self.world = after;
        self.last_effect = Some(effect.clone());
        let feedback = vlm.evaluate_action(&action, &self.observation(), instruction)?;
        feedback.validate()?;
        let step = self.stm.push(action.clone(), feedback.clone());
        let world_digest = world_digest(&self.world);
        let attempt = self.attempts_used;

        let mut reset_after = false;
        if feedback.completed {
            self.completed = true;
            self.stop_reason = Some("completed".into());
        } else if feedback.status == FeedbackStatus::Failed && perturbed {
            if self.attempts_used < self.attempts_allowed {
                self.world = self.scenario.reset();
                self.last_effect = None;
                self.attempts_used += 1;
                self.stm.add_note(RESET_NOTE).map_err(OrchestratorError::InvalidInput)?;
                reset_after = true;
            } else {
                self.stop_reason = Some("attempts exhausted".into());
            }
        }
        if self.stop_reason.is_none() && self.stm.next_step() >= self.config.max_steps {
            self.stop_reason = Some("step limit reached".into());
        }
        self.steps.push(StepRecord {
            step,
            attempt,
            action,
            label,
            grasp,
            effect,
            feedback,
            reset_after,
            world_digest,
        });
        Ok(self.steps.last().expect("just pushed"))
    }

    /// Summarizes and stores a completed episode when write-back is on.
    pub fn finish(self) -> Result<EpisodeResult> {
        let mut summary = None;
        let mut record_id = None;
        if self.completed && self.config.write_back {
            if let (Some(store), Some(key), Some(emb)) = (self.store, self.key.clone(), self.key_embedding.clone()) {
                let s = self.backends.vlm.summarize_experience(&self.stm)?;
                let mut rec = NewRecord::new(key, s.text.clone(), emb)
                    .episode(format!("{}-{:016x}", self.scenario.name, self.config.seed));
                if let Some(lesson) = s.lesson {
                    rec = rec.lesson(lesson);
                }
                record_id = Some(store.append_record(rec)?);
                summary = Some(s.text);
            }
        }
        Ok(EpisodeResult {
            scenario: self.scenario.name.clone(),
            completed: self.completed,
            steps_taken: self.steps.len(),
            attempts_used: self.attempts_used,
            stop_reason: self.stop_reason.unwrap_or_else(|| "stopped".into()),
            context_ids: self.context.entries.iter().map(|e| e.record_id).collect(),
            stm: self.stm,
            key: self.key,
            summary,
            record_id,
            steps: self.steps,
        })
    }
}

pub fn run_episode(
    scenario: &Scenario,
    config: &EpisodeConfig,
    store: Option<&mut MemoryStore>,
    backends: Backends<'_>,
) -> Result<EpisodeResult> {
    if config.write_back && config.memory_mode != MemoryMode::StmAndLtm {
        return Err(OrchestratorError::InvalidInput("write-back needs long-term memory enabled".into()));
    }
    let mut ep = Episode::new(scenario, config.clone(), store, backends)?;
    while !ep.is_finished() {
        ep.step()?;
    }
    ep.finish()
}

/// The first action planned for a scenario, without executing anything.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanOutcome {
    pub action: Action,
    pub correct: bool,
    pub context_ids: Vec<u64>,
}

pub fn plan_only(
    scenario: &Scenario,
    config: &EpisodeConfig,
    store: Option<&MemoryStore>,
    backends: Backends<'_>,
) -> Result<PlanOutcome> {
    config.validate()?;
    let world = scenario.reset();
    let obs = observe(&world).with_ground_truth(GroundTruth {
        goal: scenario.goal.clone(),
        goal_satisfied: world.goal_satisfied(&scenario.goal),
        last_effect: None,
    });
    let context = match (config.memory_mode, store) {
        (MemoryMode::StmAndLtm, Some(store)) => {
            let key = build_key(&scenario.instruction, &obs, backends.vlm)?;
            let emb = backends.embedder.embed(&key.key_text())?;
            retrieve_context(store, &emb, config)?
        }
        (MemoryMode::StmAndLtm, None) => {
            return Err(OrchestratorError::InvalidInput("long-term memory needs a store".into()))
        }
        _ => RetrievedContext::empty(),
    };
    let action = backends.vlm.plan_action(&scenario.instruction, &obs, &StmLedger::new(), &context)?;
    let correct = scenario.expected_first_action.as_ref().is_some_and(|e| {
        e.skill == action.skill && e.object.eq_ignore_ascii_case(action.target_object.trim())
    });
    Ok(PlanOutcome {
        action,
        correct,
        context_ids: context.entries.iter().map(|e| e.record_id).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::LocalEmbedder;
    use crate::vlm::{Policy, ScriptedVlm};
    use crate::world::EffectKind;

    fn run(name: &str, policy: Policy, mode: MemoryMode) -> EpisodeResult {
        let s = Scenario::builtin(name).unwrap();
        let vlm = ScriptedVlm::new(policy);
        let emb = LocalEmbedder::default();
        let config = EpisodeConfig { memory_mode: mode, ..Default::default() };
        run_episode(&s, &config, None, Backends { vlm: &vlm, embedder: &emb }).unwrap()
    }

    fn trace(r: &EpisodeResult) -> Vec<String> {
        r.steps.iter().map(|s| format!("{}:{}", s.action, s.effect.kind.as_str())).collect()
    }

    #[test]
    fn naive_apple_fails_twice() {
        let r = run("stm-apple-container", Policy::Naive, MemoryMode::StmOnly);
        assert!(!r.completed);
        assert_eq!(r.attempts_used, 2);
        assert_eq!(trace(&r), ["pick(apple):grasp_blocked", "pick(apple):grasp_blocked"]);
        assert!(r.steps[0].reset_after);
    }

    #[test]
    fn reflective_apple_recovers() {
        let r = run("stm-apple-container", Policy::Reflective, MemoryMode::StmOnly);
        assert!(r.completed, "{}", r.transcript());
        assert_eq!(
            trace(&r),
            ["pick(apple):grasp_blocked", "push(container, right):ok", "pick(apple):ok", "place(apple, plate):ok"]
        );
        assert!(r.steps.last().unwrap().feedback.completed);
    }

    #[test]
    fn reflective_bowl_unloads_first() {
        let r = run("stm-bowl-apple", Policy::Reflective, MemoryMode::StmOnly);
        assert!(r.completed, "{}", r.transcript());
        assert_eq!(r.steps[0].effect.kind, EffectKind::ContentsDropped);
        assert_eq!(r.steps_taken, 4);
        assert!(r.stm.render().contains("Observation from human"));
    }

    #[test]
    fn memory_none_hides_stm() {
        let r = run("stm-apple-container", Policy::Reflective, MemoryMode::None);
        assert!(!r.completed);
        assert_eq!(trace(&r), ["pick(apple):grasp_blocked", "pick(apple):grasp_blocked"]);
    }

    #[test]
    fn notes_rejected_after_finish() {
        let s = Scenario::builtin("stm-egg").unwrap();
        let vlm = ScriptedVlm::new(Policy::Reflective);
        let emb = LocalEmbedder::default();
        let mut ep = Episode::new(&s, EpisodeConfig::default(), None, Backends { vlm: &vlm, embedder: &emb }).unwrap();
        assert!(ep.inject_operator_note("").is_err());
        ep.inject_operator_note("careful with the egg").unwrap();
        while !ep.is_finished() {
            ep.step().unwrap();
        }
        assert!(ep.inject_operator_note("too late").is_err());
        assert!(ep.step().is_err());
    }

    #[test]
    fn store_requirement_enforced() {
        let s = Scenario::builtin("stm-egg").unwrap();
        let vlm = ScriptedVlm::new(Policy::Reflective);
        let emb = LocalEmbedder::default();
        let b = Backends { vlm: &vlm, embedder: &emb };
        let ltm = EpisodeConfig { memory_mode: MemoryMode::StmAndLtm, ..Default::default() };
        assert!(run_episode(&s, &ltm, None, b).is_err());
        let mut store = MemoryStore::new();
        assert!(run_episode(&s, &EpisodeConfig::default(), Some(&mut store), b).is_err());
        let wb = EpisodeConfig { write_back: true, ..Default::default() };
        assert!(run_episode(&s, &wb, None, b).is_err());
    }
}
