use std::sync::Mutex;

use expmem::action::{Action, Skill};
use expmem::embedding::{Embedder, LocalEmbedder};
use expmem::geometry::AnnotatedView;
use expmem::memory::{MemoryStore, NewRecord, ScenarioKey};
use expmem::orchestrator::{
    build_reference_store, plan_only, run_episode, Backends, EpisodeConfig, EpisodeResult, MemoryMode,
    OrchestratorError,
};
use expmem::remote::BackendError;
use expmem::stm::StmLedger;
use expmem::vlm::{
    ExperienceSummary, FeedbackRecord, FeedbackStatus, Policy, RetrievalMode, RetrievedContext, ScriptedVlm, VlmBackend,
};
use expmem::world::{builtin_scenarios, Observation, Scenario};

/// Wraps a backend, recording what the planner saw and optionally
/// refusing the execution-side roles.
struct Probe {
    inner: ScriptedVlm,
    seen: Mutex<Vec<(bool, usize)>>,
    forbid_execution: bool,
    bad_label: bool,
}

impl Probe {
    fn new(policy: Policy) -> Self {
        Self { inner: ScriptedVlm::new(policy), seen: Mutex::new(Vec::new()), forbid_execution: false, bad_label: false }
    }

    fn guard(&self) {
        assert!(!self.forbid_execution, "execution-side role called in planning-only mode");
    }
}

impl VlmBackend for Probe {
    fn name(&self) -> &str {
        "probe"
    }
    fn describe_scene(&self, i: &str, o: &Observation) -> Result<String, BackendError> {
        self.inner.describe_scene(i, o)
    }
    fn plan_action(&self, i: &str, o: &Observation, stm: &StmLedger, ctx: &RetrievedContext) -> Result<Action, BackendError> {
        self.seen.lock().unwrap().push((stm.is_empty(), ctx.entries.len()));
        self.inner.plan_action(i, o, stm, ctx)
    }
    fn choose_grasp_section(&self, a: &Action, v: &AnnotatedView, o: &Observation) -> Result<u32, BackendError> {
        self.guard();
        self.inner.choose_grasp_section(a, v, o)
    }
    fn choose_placement(&self, a: &Action, v: &AnnotatedView, o: &Observation) -> Result<u32, BackendError> {
        self.guard();
        self.inner.choose_placement(a, v, o)
    }
    fn choose_push_spot(&self, a: &Action, v: &AnnotatedView, o: &Observation) -> Result<u32, BackendError> {
        self.guard();
        if self.bad_label {
            return Ok(999);
        }
        self.inner.choose_push_spot(a, v, o)
    }
    fn evaluate_action(&self, a: &Action, o: &Observation, i: &str) -> Result<FeedbackRecord, BackendError> {
        self.guard();
        self.inner.evaluate_action(a, o, i)
    }
    fn summarize_experience(&self, stm: &StmLedger) -> Result<ExperienceSummary, BackendError> {
        self.inner.summarize_experience(stm)
    }
}

fn scripted(p: Policy) -> Box<dyn VlmBackend> {
    Box::new(ScriptedVlm::new(p))
}

fn ltm_config() -> EpisodeConfig {
    EpisodeConfig { memory_mode: MemoryMode::StmAndLtm, retrieval_mode: RetrievalMode::Rag, ..Default::default() }
}

#[test]
fn retrieved_lesson_guides_first_trial() {
    let emb = LocalEmbedder::default();
    let mut store = build_reference_store(&scripted, &emb, 0).unwrap();
    let s = Scenario::builtin("ltm-apple-container").unwrap();
    assert_eq!(s.attempts_allowed, 1);
    let vlm = ScriptedVlm::new(Policy::MemoryAware);
    let r = run_episode(&s, &ltm_config(), Some(&mut store), Backends { vlm: &vlm, embedder: &emb }).unwrap();
    assert!(r.completed, "{}", r.transcript());
    assert_eq!((r.steps[0].action.skill, r.steps[0].action.target_object.as_str()), (Skill::Push, "container"));
    assert_eq!(r.attempts_used, 1);
    assert_eq!(r.context_ids[0], 0);
}

#[test]
fn write_back_appends_exactly_one_record() {
    let emb = LocalEmbedder::default();
    let mut store = build_reference_store(&scripted, &emb, 0).unwrap();
    let before = store.records().to_vec();
    let config = EpisodeConfig { write_back: true, ..ltm_config() };
    let vlm = ScriptedVlm::new(Policy::MemoryAware);
    for name in ["ltm-egg", "ltm-box-apple"] {
        let s = Scenario::builtin(name).unwrap();
        let n = store.len();
        let r = run_episode(&s, &config, Some(&mut store), Backends { vlm: &vlm, embedder: &emb }).unwrap();
        assert!(r.completed);
        assert_eq!(store.len(), n + 1);
        assert_eq!(r.record_id, Some(n as u64));
    }
    assert_eq!(&store.records()[..before.len()], before.as_slice());

    // a failed episode stores nothing
    let naive = ScriptedVlm::new(Policy::Naive);
    let empty_ctx = EpisodeConfig { retrieval_mode: RetrievalMode::None, ..config };
    let n = store.len();
    let r = run_episode(&Scenario::builtin("ltm-egg").unwrap(), &empty_ctx, Some(&mut store), Backends { vlm: &naive, embedder: &emb }).unwrap();
    assert!(!r.completed);
    assert_eq!(store.len(), n);
}

#[test]
fn memory_none_plans_blind() {
    let emb = LocalEmbedder::default();
    for s in builtin_scenarios() {
        let probe = Probe::new(Policy::Reflective);
        let config = EpisodeConfig { memory_mode: MemoryMode::None, ..Default::default() };
        let r = run_episode(&s, &config, None, Backends { vlm: &probe, embedder: &emb }).unwrap();
        let seen = probe.seen.lock().unwrap();
        assert_eq!(seen.len(), r.steps_taken);
        assert!(seen.iter().all(|&(stm_empty, ctx)| stm_empty && ctx == 0), "{}", s.name);
    }
}

#[test]
fn planning_only_never_executes() {
    let emb = LocalEmbedder::default();
    let store = build_reference_store(&scripted, &emb, 0).unwrap();
    let mut probe = Probe::new(Policy::MemoryAware);
    probe.forbid_execution = true;
    for s in builtin_scenarios() {
        let out = plan_only(&s, &ltm_config(), Some(&store), Backends { vlm: &probe, embedder: &emb }).unwrap();
        assert!(out.context_ids.len() <= 5);
    }
}

fn check_pairing(r: &EpisodeResult) {
    assert_eq!(r.stm.entries().len(), r.steps.len());
    for (i, (e, s)) in r.stm.entries().iter().zip(&r.steps).enumerate() {
        assert_eq!((e.step, s.step), (i, i));
        assert_eq!(e.action, s.action);
        assert_eq!(e.feedback, s.feedback);
    }
}

#[test]
fn episodes_keep_their_invariants() {
    let emb = LocalEmbedder::default();
    for s in builtin_scenarios() {
        for policy in [Policy::Naive, Policy::Reflective, Policy::MemoryAware] {
            let vlm = ScriptedVlm::new(policy);
            let b = Backends { vlm: &vlm, embedder: &emb };
            let config = EpisodeConfig { seed: 3, ..Default::default() };
            let r = run_episode(&s, &config, None, b).unwrap();
            check_pairing(&r);
            assert!(r.attempts_used <= s.attempts_allowed);
            assert!(r.steps_taken <= config.max_steps);
            if r.completed {
                assert!(r.steps.last().unwrap().feedback.completed);
            }
            for st in r.steps.iter().filter(|st| st.reset_after) {
                assert_eq!(st.feedback.status, FeedbackStatus::Failed);
            }
            assert_eq!(r.steps.iter().filter(|st| st.reset_after).count() as u32, r.attempts_used - 1);
            assert_eq!(r, run_episode(&s, &config, None, b).unwrap(), "{} is not deterministic", s.name);
        }
    }
}

#[test]
fn dimension_mismatch_is_invalid_input() {
    let mut store = MemoryStore::new();
    store.append_record(NewRecord::new(ScenarioKey::new("x", "y").unwrap(), "z", vec![1.0; 8])).unwrap();
    let vlm = ScriptedVlm::new(Policy::MemoryAware);
    let s = Scenario::builtin("ltm-egg").unwrap();
    let err = run_episode(&s, &ltm_config(), Some(&mut store), Backends { vlm: &vlm, embedder: &LocalEmbedder::default() }).unwrap_err();
    assert!(matches!(err, OrchestratorError::InvalidInput(_)), "{err:?}");
}

#[test]
fn protocol_violation_aborts() {
    let mut probe = Probe::new(Policy::Reflective);
    probe.bad_label = true;
    let s = Scenario::builtin("stm-egg").unwrap();
    let emb = LocalEmbedder::default();
    let err = run_episode(&s, &EpisodeConfig::default(), None, Backends { vlm: &probe, embedder: &emb }).unwrap_err();
    assert!(matches!(err, OrchestratorError::Backend(BackendError::ProtocolViolation(_))), "{err:?}");
}

#[test]
fn embedder_is_deterministic_across_instances() {
    let a = LocalEmbedder::default().embed("Put the apple on the plate.").unwrap();
    let b = LocalEmbedder::default().embed("Put the apple on the plate.").unwrap();
    assert_eq!(a, b);
}
