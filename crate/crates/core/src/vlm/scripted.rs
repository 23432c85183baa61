use super::{
    require_labels, ExperienceSummary, FeedbackRecord, FeedbackStatus, RetrievedContext, VlmBackend,
};
use crate::action::{Action, Skill};
use crate::geometry::{AnnotatedView, Point2, PushDirection};
use crate::memory::LessonTag;
use crate::remote::BackendError;
use crate::stm::StmLedger;
use crate::world::{EffectKind, Goal, GroundTruth, Observation, ObservedObject, CLEARANCE};

/// Which experimental condition the scripted planner plays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Policy {
    /// Plans from the current observation and instruction only.
    Naive,
    /// Also learns from failures recorded in short-term memory.
    Reflective,
    /// Reflective, and applies retrieved lessons that fit the scene.
    MemoryAware,
}

impl Policy {
    pub fn as_str(&self) -> &'static str {
        match self {
            Policy::Naive => "scripted-naive",
            Policy::Reflective => "scripted-reflective",
            Policy::MemoryAware => "scripted-memory-aware",
        }
    }
}

/// Deterministic stand-in for every model role, reading simulator ground
/// truth from the observation.
#[derive(Debug, Clone)]
pub struct ScriptedVlm {
    policy: Policy,
}

impl ScriptedVlm {
    pub fn new(policy: Policy) -> Self {
        Self { policy }
    }

    pub fn policy(&self) -> Policy {
        self.policy
    }
}

fn ground_truth(obs: &Observation) -> Result<&GroundTruth, BackendError> {
    obs.ground_truth
        .as_ref()
        .ok_or_else(|| BackendError::InvalidInput("scripted backend needs simulator ground truth".into()))
}

fn subject<'a>(goal: &Goal, obs: &'a Observation) -> Option<&'a ObservedObject> {
    obs.object(goal.subject())
}

/// The object crowding `s` closely enough to matter, if any.
fn crowding<'a>(obs: &'a Observation, s: &ObservedObject) -> Option<&'a ObservedObject> {
    obs.neighbors(&s.name)
        .into_iter()
        .next()
        .filter(|(_, gap)| *gap < CLEARANCE)
        .map(|(o, _)| o)
}

/// The trap this scene poses for the goal, judged from what is visible.
pub fn infer_trap(goal: &Goal, obs: &Observation) -> LessonTag {
    let Some(s) = subject(goal, obs) else {
        return LessonTag::None;
    };
    let flat_tool_around = obs.held_flat_tool || obs.objects.iter().any(|o| o.flat_tool_face && o.name != s.name);
    if !s.contents.is_empty() || s.supports.is_some() {
        LessonTag::UnloadContainerBeforeLift
    } else if s.tiny && flat_tool_around {
        LessonTag::UseFlatToolForTiny
    } else if s.fragile {
        LessonTag::PushFragileInsteadOfPick
    } else if crowding(obs, s).is_some() {
        LessonTag::PushObstructionFirst
    } else {
        LessonTag::None
    }
}

fn toward(from: &ObservedObject, to: Option<&ObservedObject>) -> PushDirection {
    PushDirection::toward(from.position.x, to.map_or(from.position.x, |t| t.position.x))
}

fn held_other(goal: &Goal, obs: &Observation) -> Option<String> {
    obs.held
        .clone()
        .filter(|h| !h.eq_ignore_ascii_case(goal.subject()))
}

fn set_aside(item: &str) -> Action {
    Action::place(item, "table").with_reasoning(format!("The {item} is in the way of the task, so set it down on the table."))
}

/// The action a lesson prescribes in the current state, or `None` once the
/// lesson no longer applies (for example after the obstruction was cleared).
pub fn corrective_action(lesson: LessonTag, goal: &Goal, obs: &Observation) -> Option<Action> {
    let target = goal.target().and_then(|t| obs.object(t));
    match lesson {
        LessonTag::PushObstructionFirst => {
            let s = subject(goal, obs)?;
            let x = crowding(obs, s)?;
            let dir = PushDirection::toward(s.position.x, x.position.x);
            Some(Action::push(&x.name, dir).with_reasoning(format!(
                "The {} sits too close to the {} for a reliable grasp; push it away first.",
                x.name, s.name
            )))
        }
        LessonTag::UseFlatToolForTiny => {
            let s = subject(goal, obs)?;
            if obs.held_flat_tool {
                return Some(Action::push(&s.name, toward(s, target)).with_reasoning(format!(
                    "Holding a flat tool, push the {} toward the goal.",
                    s.name
                )));
            }
            if obs.held.is_some() {
                return None;
            }
            let tool = obs
                .objects
                .iter()
                .filter(|o| o.flat_tool_face && o.name != s.name)
                .min_by(|a, b| {
                    a.position
                        .distance(&s.position)
                        .total_cmp(&b.position.distance(&s.position))
                })?;
            Some(Action::pick(&tool.name).with_reasoning(format!(
                "The {} is too small for the bare gripper; grasp the {} to push with it.",
                s.name, tool.name
            )))
        }
        LessonTag::PushFragileInsteadOfPick => {
            let s = subject(goal, obs)?;
            target?;
            Some(Action::push(&s.name, toward(s, target)).with_reasoning(format!(
                "The {} is fragile; pushing it avoids crushing it.",
                s.name
            )))
        }
        LessonTag::UnloadContainerBeforeLift => {
            if let Some(h) = held_other(goal, obs) {
                return Some(set_aside(&h));
            }
            let s = subject(goal, obs)?;
            let item = s.contents.first().or(s.supports.as_ref())?;
            Some(Action::pick(item).with_reasoning(format!(
                "The {item} would fall if the {} were lifted with it; take it out first.",
                s.name
            )))
        }
        LessonTag::None => None,
    }
}

fn naive_action(goal: &Goal, obs: &Observation) -> Action {
    let s_name = goal.subject();
    if let Some(h) = held_other(goal, obs) {
        return set_aside(&h);
    }
    match goal {
        Goal::Near { target, .. } => {
            if obs.is_held(s_name) {
                return Action::place(s_name, target)
                    .with_precise_spot(true)
                    .with_reasoning(format!("Holding the {s_name}; put it on the {target}."));
            }
            if let Some(s) = obs.object(s_name) {
                if s.tiny {
                    return Action::push(s_name, toward(s, obs.object(target)))
                        .with_reasoning(format!("The {s_name} is small; slide it toward the {target}."));
                }
            }
            pick_with_grasp(s_name, obs)
        }
        Goal::Held { .. } => pick_with_grasp(s_name, obs),
    }
}

fn pick_with_grasp(name: &str, obs: &Observation) -> Action {
    let handle = obs.object(name).and_then(|o| o.handle);
    Action::pick(name)
        .with_grasp(handle.map(|_| "handle"), handle.is_some())
        .with_reasoning(format!("Grasp the {name}."))
}

fn lesson_from_stm(stm: &StmLedger) -> LessonTag {
    let from_failures = stm.failures().rev().find_map(|e| {
        let text = format!("{} {}", e.feedback.failure_cause, e.feedback.next_step_suggestion);
        Some(LessonTag::infer_from_text(&text)).filter(|t| *t != LessonTag::None)
    });
    from_failures
        .or_else(|| {
            stm.operator_notes()
                .iter()
                .rev()
                .map(|n| LessonTag::infer_from_text(&n.text))
                .find(|t| *t != LessonTag::None)
        })
        .unwrap_or(LessonTag::None)
}

fn nearest_label(view: &AnnotatedView, to: Point2) -> u32 {
    let mut best = view.options[0].label;
    let mut best_d = f64::INFINITY;
    for o in &view.options {
        let d = o.location.distance(&to);
        if d < best_d {
            best = o.label;
            best_d = d;
        }
    }
    best
}

fn lesson_sentence(lesson: LessonTag, stm: &StmLedger) -> String {
    let entries = stm.entries();
    let first_fail = stm.failures().next();
    let failed_target = first_fail.map_or("object", |e| e.action.target_object.as_str());
    let after_fail = |skill: Skill| {
        let start = first_fail.map_or(0, |e| e.step + 1);
        entries[start.min(entries.len())..]
            .iter()
            .find(|e| e.action.skill == skill && e.feedback.status != FeedbackStatus::Failed)
            .map(|e| e.action.target_object.clone())
    };
    match lesson {
        LessonTag::PushObstructionFirst => {
            let moved = after_fail(Skill::Push).unwrap_or_else(|| "obstacle".into());
            format!(
                "Pushing the {moved} away before grasping the {failed_target} solved the problem, so an object crowding the target should be cleared first."
            )
        }
        LessonTag::UseFlatToolForTiny => {
            let tool = after_fail(Skill::Pick).unwrap_or_else(|| "flat object".into());
            format!(
                "Grasping the {tool} and pushing with it worked, so a tiny object should be pushed with a flat tool instead of the bare gripper."
            )
        }
        LessonTag::PushFragileInsteadOfPick => format!(
            "Pushing the {failed_target} instead of grasping it avoided damage, so fragile objects should be pushed rather than picked."
        ),
        LessonTag::UnloadContainerBeforeLift => {
            let item = after_fail(Skill::Place).unwrap_or_else(|| "item".into());
            format!(
                "It learned to remove the {item} from the {failed_target} and set it on the table before lifting the {failed_target}."
            )
        }
        LessonTag::None => "The task went as planned without corrections.".into(),
    }
}

fn entry_sentence(e: &crate::stm::StmEntry) -> String {
    let a = &e.action;
    let verb = match a.skill {
        Skill::Pick => format!("pick up the {}", a.target_object),
        Skill::Place => format!(
            "place the {} on the {}",
            a.target_object,
            a.placement_location.as_deref().unwrap_or("table")
        ),
        Skill::Push => format!(
            "push the {} {}",
            a.target_object,
            a.push_direction.map_or("", |d| d.as_str())
        ),
    };
    match e.feedback.status {
        FeedbackStatus::Failed => format!("At step {} it tried to {verb}, which failed ({}).", e.step, e.feedback.failure_cause),
        FeedbackStatus::Uncertain => format!("At step {} it tried to {verb} with an uncertain outcome.", e.step),
        FeedbackStatus::Successful => format!("At step {} it managed to {verb}.", e.step),
    }
}

impl VlmBackend for ScriptedVlm {
    fn name(&self) -> &str {
        self.policy.as_str()
    }

    fn describe_scene(&self, instruction: &str, obs: &Observation) -> Result<String, BackendError> {
        if instruction.trim().is_empty() {
            return Err(BackendError::InvalidInput("instruction is empty".into()));
        }
        Ok(obs.scene.clone())
    }

    fn plan_action(
        &self,
        instruction: &str,
        obs: &Observation,
        stm: &StmLedger,
        context: &RetrievedContext,
    ) -> Result<Action, BackendError> {
        if instruction.trim().is_empty() {
            return Err(BackendError::InvalidInput("instruction is empty".into()));
        }
        let goal = &ground_truth(obs)?.goal;
        let lesson = match self.policy {
            Policy::Naive => LessonTag::None,
            Policy::Reflective => lesson_from_stm(stm),
            Policy::MemoryAware => {
                let trap = infer_trap(goal, obs);
                if trap != LessonTag::None && context.entries.iter().any(|e| e.lesson_tag() == trap) {
                    trap
                } else {
                    lesson_from_stm(stm)
                }
            }
        };
        let action = corrective_action(lesson, goal, obs).unwrap_or_else(|| naive_action(goal, obs));
        Ok(action.with_scene(obs.scene.clone()))
    }

    fn choose_grasp_section(&self, action: &Action, view: &AnnotatedView, obs: &Observation) -> Result<u32, BackendError> {
        require_labels(view)?;
        let handle = obs.object(&action.target_object).and_then(|o| o.handle);
        Ok(handle.map_or(view.options[0].label, |h| nearest_label(view, h)))
    }

    fn choose_placement(&self, action: &Action, view: &AnnotatedView, obs: &Observation) -> Result<u32, BackendError> {
        require_labels(view)?;
        let location = action.placement_location.as_deref().unwrap_or("table");
        let others: Vec<&ObservedObject> = obs
            .objects
            .iter()
            .filter(|o| !o.name.eq_ignore_ascii_case(location) && !o.name.eq_ignore_ascii_case(&action.target_object))
            .collect();
        if others.is_empty() {
            return Ok(view.options[0].label);
        }
        let clearance = |p: Point2| {
            others
                .iter()
                .map(|o| p.distance(&o.position) - o.extent)
                .fold(f64::INFINITY, f64::min)
        };
        let mut best = view.options[0].label;
        let mut best_c = f64::NEG_INFINITY;
        for o in &view.options {
            let c = clearance(o.location);
            if c > best_c {
                best = o.label;
                best_c = c;
            }
        }
        Ok(best)
    }

    fn choose_push_spot(&self, action: &Action, view: &AnnotatedView, obs: &Observation) -> Result<u32, BackendError> {
        require_labels(view)?;
        let goal = &ground_truth(obs)?.goal;
        if let Goal::Near { subject, target, radius } = goal {
            if action.target_object.eq_ignore_ascii_case(subject) {
                let Some(t) = obs.object(target) else {
                    return Ok(view.options[0].label);
                };
                return Ok(view
                    .options
                    .iter()
                    .find(|o| o.location.distance(&t.position) <= *radius)
                    .map_or_else(|| nearest_label(view, t.position), |o| o.label));
            }
        }
        // clearing push: first spot leaving enough room around the subject
        let (Some(s), Some(x)) = (obs.object(goal.subject()), obs.object(&action.target_object)) else {
            return Ok(view.options[0].label);
        };
        let need = s.extent + x.extent + CLEARANCE;
        Ok(view
            .options
            .iter()
            .find(|o| o.location.distance(&s.position) >= need)
            .unwrap_or_else(|| view.options.last().expect("nonempty"))
            .label)
    }

    fn evaluate_action(&self, action: &Action, obs: &Observation, instruction: &str) -> Result<FeedbackRecord, BackendError> {
        if instruction.trim().is_empty() {
            return Err(BackendError::InvalidInput("instruction is empty".into()));
        }
        let gt = ground_truth(obs)?;
        let effect = gt
            .last_effect
            .as_ref()
            .ok_or_else(|| BackendError::InvalidInput("no executed action to evaluate".into()))?;
        let t = &action.target_object;
        let first = effect.involved.first().cloned().unwrap_or_default();
        let (cause, suggestion) = match effect.kind {
            EffectKind::Ok => {
                let (suggestion, reasoning) = if gt.goal_satisfied {
                    (String::new(), "The instruction is fulfilled.")
                } else {
                    ("continue with the next step of the instruction".to_string(), "The action worked but the instruction is not fulfilled yet.")
                };
                return Ok(FeedbackRecord {
                    status: FeedbackStatus::Successful,
                    failure_cause: String::new(),
                    next_step_suggestion: suggestion,
                    completed: gt.goal_satisfied,
                    reasoning: reasoning.into(),
                });
            }
            EffectKind::GraspBlocked if effect.detail.contains("occluded") => {
                (format!("target occluded by {first}"), format!("push the {first} away"))
            }
            EffectKind::GraspBlocked if effect.detail.contains("too small") => (
                "object too small, insufficient contact".to_string(),
                "use a flat object on the table as a tool to push it".to_string(),
            ),
            EffectKind::GraspBlocked if !first.is_empty() => {
                (format!("gripper already holding {first}"), format!("put the {first} down first"))
            }
            EffectKind::GraspBlocked => (format!("{t} is already held"), "continue with the instruction".to_string()),
            EffectKind::TooSmallContact => (
                "object too small, insufficient contact".to_string(),
                "use a flat object on the table as a tool to push it".to_string(),
            ),
            EffectKind::Cracked => (
                "object cracked while grasping".to_string(),
                format!("push the {t} instead of grasping it"),
            ),
            EffectKind::ContentsDropped => {
                let cause = effect
                    .involved
                    .iter()
                    .map(|i| format!("{i} dropped from {t}"))
                    .collect::<Vec<_>>()
                    .join("; ");
                (cause, format!("remove the {} before lifting the {t}", effect.involved.join(" and ")))
            }
            EffectKind::NotHolding => (format!("robot is not holding {t}"), format!("pick the {t} first")),
            EffectKind::UnknownObject => (
                format!("{} is not on the table", if first.is_empty() { t } else { &first }),
                "choose an object that is on the table".to_string(),
            ),
        };
        Ok(FeedbackRecord {
            status: FeedbackStatus::Failed,
            failure_cause: cause,
            next_step_suggestion: suggestion,
            completed: false,
            reasoning: effect.detail.clone(),
        })
    }

    fn summarize_experience(&self, stm: &StmLedger) -> Result<ExperienceSummary, BackendError> {
        if stm.entries().is_empty() {
            return Err(BackendError::InvalidInput("short-term memory is empty".into()));
        }
        if !stm.last_completed() {
            return Err(BackendError::InvalidInput("the task was not completed".into()));
        }
        let lesson = lesson_from_stm_first(stm);
        let mut parts: Vec<String> = Vec::new();
        let mut notes = stm.operator_notes().iter().peekable();
        for e in stm.entries() {
            while let Some(n) = notes.next_if(|n| n.step <= e.step) {
                parts.push(format!("The operator observed: {}", n.text.trim_end_matches('.')).to_string() + ".");
            }
            parts.push(entry_sentence(e));
        }
        parts.push(lesson_sentence(lesson, stm));
        Ok(ExperienceSummary {
            text: parts.join(" "),
            lesson: Some(lesson),
        })
    }
}

/// Lesson of the first failure, falling back to operator notes.
fn lesson_from_stm_first(stm: &StmLedger) -> LessonTag {
    stm.failures()
        .map(|e| LessonTag::infer_from_text(&format!("{} {}", e.feedback.failure_cause, e.feedback.next_step_suggestion)))
        .find(|t| *t != LessonTag::None)
        .or_else(|| {
            stm.operator_notes()
                .iter()
                .map(|n| LessonTag::infer_from_text(&n.text))
                .find(|t| *t != LessonTag::None)
        })
        .unwrap_or(LessonTag::None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{annotate, CandidateSet, RasterMask};
    use crate::world::{observe, Effect, Scenario};

    fn obs_for(s: &Scenario) -> Observation {
        let w = s.reset();
        observe(&w).with_ground_truth(GroundTruth {
            goal: s.goal.clone(),
            goal_satisfied: w.goal_satisfied(&s.goal),
            last_effect: None,
        })
    }

    fn failed(cause: &str) -> FeedbackRecord {
        FeedbackRecord {
            status: FeedbackStatus::Failed,
            failure_cause: cause.into(),
            next_step_suggestion: String::new(),
            completed: false,
            reasoning: String::new(),
        }
    }

    fn plan(policy: Policy, s: &Scenario, stm: &StmLedger, ctx: &RetrievedContext) -> Action {
        ScriptedVlm::new(policy)
            .plan_action(&s.instruction, &obs_for(s), stm, ctx)
            .unwrap()
    }

    #[test]
    fn naive_targets_the_subject() {
        let s = Scenario::builtin("stm-apple-container").unwrap();
        let a = plan(Policy::Naive, &s, &StmLedger::new(), &RetrievedContext::empty());
        assert_eq!((a.skill, a.target_object.as_str()), (Skill::Pick, "apple"));
    }

    #[test]
    fn reflective_pushes_the_occluder_away_from_the_target() {
        let s = Scenario::builtin("stm-apple-container").unwrap();
        let mut stm = StmLedger::new();
        stm.push(Action::pick("apple"), failed("target occluded by container"));
        let a = plan(Policy::Reflective, &s, &stm, &RetrievedContext::empty());
        assert_eq!(a, Action::push("container", PushDirection::Right).with_reasoning(a.reasoning.clone()).with_scene(a.scene_description.clone()));
    }

    #[test]
    fn reflective_fetches_a_tool_for_tiny_objects() {
        let s = Scenario::builtin("stm-candy-sponge").unwrap();
        let mut stm = StmLedger::new();
        stm.push(Action::push("candy", PushDirection::Right), failed("object too small, insufficient contact"));
        let a = plan(Policy::Reflective, &s, &stm, &RetrievedContext::empty());
        assert_eq!((a.skill, a.target_object.as_str()), (Skill::Pick, "sponge"));
        // once the sponge is held, push the candy
        let mut w = s.reset();
        w.held = w.find("sponge");
        let obs = observe(&w).with_ground_truth(GroundTruth { goal: s.goal.clone(), goal_satisfied: false, last_effect: None });
        let a = ScriptedVlm::new(Policy::Reflective)
            .plan_action(&s.instruction, &obs, &stm, &RetrievedContext::empty())
            .unwrap();
        assert_eq!((a.skill, a.target_object.as_str(), a.push_direction), (Skill::Push, "candy", Some(PushDirection::Right)));
    }

    #[test]
    fn operator_note_switches_bowl_strategy() {
        let s = Scenario::builtin("stm-bowl-apple").unwrap();
        let mut stm = StmLedger::new();
        stm.push(Action::pick("bowl"), FeedbackRecord { status: FeedbackStatus::Uncertain, ..failed("") });
        stm.add_note(&s.operator_notes[0].text).unwrap();
        let a = plan(Policy::Reflective, &s, &stm, &RetrievedContext::empty());
        assert_eq!((a.skill, a.target_object.as_str()), (Skill::Pick, "apple"));
        let naive = plan(Policy::Naive, &s, &stm, &RetrievedContext::empty());
        assert_eq!(naive.target_object, "bowl");
    }

    #[test]
    fn traps_inferred_for_every_builtin() {
        for s in crate::world::builtin_scenarios() {
            assert_eq!(infer_trap(&s.goal, &obs_for(&s)), s.trap, "{}", s.name);
            let a = corrective_action(s.trap, &s.goal, &obs_for(&s)).unwrap();
            let e = s.expected_first_action.as_ref().unwrap();
            assert_eq!((a.skill, a.target_object.as_str()), (e.skill, e.object.as_str()), "{}", s.name);
        }
    }

    #[test]
    fn detector_renders_canonical_causes() {
        let s = Scenario::builtin("stm-apple-container").unwrap();
        let mut obs = obs_for(&s);
        let vlm = ScriptedVlm::new(Policy::Naive);
        let mut check = |effect: Effect, action: Action, done: bool| {
            let gt = obs.ground_truth.as_mut().unwrap();
            gt.last_effect = Some(effect);
            gt.goal_satisfied = done;
            vlm.evaluate_action(&action, &obs, &s.instruction).unwrap()
        };
        let blocked = Effect { kind: EffectKind::GraspBlocked, detail: "apple occluded by container".into(), involved: vec!["container".into()] };
        let fb = check(blocked, Action::pick("apple"), false);
        assert_eq!((fb.status, fb.failure_cause.as_str(), fb.next_step_suggestion.as_str(), fb.completed),
            (FeedbackStatus::Failed, "target occluded by container", "push the container away", false));
        let ok = Effect { kind: EffectKind::Ok, detail: String::new(), involved: vec![] };
        let fb = check(ok, Action::pick("apple"), true);
        assert_eq!((fb.status, fb.failure_cause.as_str(), fb.next_step_suggestion.as_str(), fb.completed),
            (FeedbackStatus::Successful, "", "", true));
        let dropped = Effect { kind: EffectKind::ContentsDropped, detail: String::new(), involved: vec!["apple".into()] };
        let fb = check(dropped, Action::pick("bowl"), false);
        assert_eq!(fb.failure_cause, "apple dropped from bowl");
        assert!(!fb.completed);
        for (kind, cause) in [
            (EffectKind::TooSmallContact, "object too small, insufficient contact"),
            (EffectKind::Cracked, "object cracked while grasping"),
        ] {
            let fb = check(Effect { kind, detail: String::new(), involved: vec![] }, Action::pick("egg"), false);
            assert_eq!(fb.failure_cause, cause);
        }
    }

    #[test]
    fn summaries_carry_lessons() {
        let vlm = ScriptedVlm::new(Policy::Reflective);
        let ok = |done| FeedbackRecord { status: FeedbackStatus::Successful, failure_cause: String::new(), next_step_suggestion: String::new(), completed: done, reasoning: String::new() };
        let mut stm = StmLedger::new();
        stm.push(Action::pick("apple"), failed("target occluded by container"));
        stm.push(Action::push("container", PushDirection::Right), ok(false));
        stm.push(Action::pick("apple"), ok(false));
        stm.push(Action::place("apple", "plate"), ok(true));
        assert_eq!(vlm.summarize_experience(&stm).unwrap().lesson, Some(LessonTag::PushObstructionFirst));

        let mut plain = StmLedger::new();
        plain.push(Action::pick("cup"), ok(true));
        assert_eq!(vlm.summarize_experience(&plain).unwrap().lesson, Some(LessonTag::None));
        assert!(vlm.summarize_experience(&StmLedger::new()).is_err());

        let mut bowl = StmLedger::new();
        bowl.push(Action::pick("bowl"), failed("apple dropped from bowl"));
        bowl.push(Action::pick("apple"), ok(false));
        bowl.push(Action::place("apple", "table"), ok(false));
        bowl.push(Action::pick("bowl"), ok(true));
        let s = vlm.summarize_experience(&bowl).unwrap();
        assert_eq!(s.lesson, Some(LessonTag::UnloadContainerBeforeLift));
        assert!(s.text.contains("remove the apple from the bowl and set it on the table before lifting the bowl"), "{}", s.text);
    }

    #[test]
    fn selectors_follow_geometry() {
        let s = Scenario::builtin("stm-egg").unwrap();
        let vlm = ScriptedVlm::new(Policy::Naive);
        let mut obs = obs_for(&s);
        // goal two cells right of the egg, step one
        let egg = obs.object("egg").unwrap().position;
        obs.objects[1].position = Point2::new(egg.x + 2.0, egg.y);
        obs.ground_truth.as_mut().unwrap().goal = Goal::Near { subject: "egg".into(), target: "banana".into(), radius: 0.5 };
        let set = CandidateSet::from_locations((1..=3).map(|i| Point2::new(egg.x + i as f64, egg.y)));
        let view = annotate(&RasterMask::new(1, 1), &set).unwrap();
        assert_eq!(vlm.choose_push_spot(&Action::push("egg", PushDirection::Right), &view, &obs).unwrap(), 2);

        let single = annotate(&RasterMask::new(1, 1), &CandidateSet::from_locations([egg])).unwrap();
        assert_eq!(vlm.choose_grasp_section(&Action::pick("egg"), &single, &obs).unwrap(), 1);
        assert_eq!(vlm.choose_placement(&Action::place("egg", "table"), &single, &obs).unwrap(), 1);
        let empty = annotate(&RasterMask::new(1, 1), &CandidateSet::default()).unwrap();
        assert!(vlm.choose_grasp_section(&Action::pick("egg"), &empty, &obs).is_err());
    }

    #[test]
    fn outputs_validate_against_schemas() {
        use super::super::wire::{action_to_call, feedback_to_args, schema_value, validate_arguments};
        for s in crate::world::builtin_scenarios() {
            for policy in [Policy::Naive, Policy::Reflective, Policy::MemoryAware] {
                let a = plan(policy, &s, &StmLedger::new(), &RetrievedContext::empty());
                let (name, args) = action_to_call(&a);
                validate_arguments(&schema_value(name, &[]).unwrap(), &args).unwrap();
            }
        }
        let fb = failed("object cracked while grasping");
        validate_arguments(&schema_value("evaluate_action_status_and_issues", &[]).unwrap(), &feedback_to_args(&fb)).unwrap();
    }
}
