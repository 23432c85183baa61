use std::sync::Arc;

use serde_json::Value;

use super::wire::{self, DescribeArgs, LocationArgs, PositionArgs, SectionArgs, SummaryArgs};
use super::{require_labels, ExperienceSummary, FeedbackRecord, RetrievedContext, VlmBackend};
use crate::action::Action;
use crate::geometry::AnnotatedView;
use crate::remote::{endpoint, post_with_retry, BackendError, HttpTransport, RetryPolicy};
use crate::stm::StmLedger;
use crate::world::Observation;

/// Chat-completions client that drives every role through forced tool calls.
///
/// The simulator has no camera, so the text rendering of the observation
/// stands in for the image and is appended to each prompt.
pub struct RemoteVlm {
    transport: Arc<dyn HttpTransport>,
    base_url: String,
    model: String,
    api_key: Option<String>,
    policy: RetryPolicy,
}

impl RemoteVlm {
    pub fn new(
        transport: Arc<dyn HttpTransport>,
        base_url: impl Into<String>,
        model: impl Into<String>,
        api_key: Option<String>,
    ) -> Self {
        Self {
            transport,
            base_url: base_url.into(),
            model: model.into(),
            api_key,
            policy: RetryPolicy::default(),
        }
    }

    pub fn with_policy(mut self, policy: RetryPolicy) -> Self {
        self.policy = policy;
        self
    }

    /// Sends one prompt offering `tools` and returns the validated call.
    fn call(&self, content: &str, tools: &[&str], labels: &[u32]) -> Result<(String, Value), BackendError> {
        let schemas = tools
            .iter()
            .map(|t| wire::schema_value(t, labels))
            .collect::<Result<Vec<_>, _>>()?;
        let body = wire::chat_request(&self.model, content, schemas.clone());
        let reply = post_with_retry(
            self.transport.as_ref(),
            &endpoint(&self.base_url, "/v1/chat/completions"),
            self.api_key.as_deref(),
            &body,
            &self.policy,
        )?;
        let (name, args) = wire::extract_tool_call(&reply, tools)?;
        let schema = schemas
            .iter()
            .find(|s| s["function"]["name"] == name.as_str())
            .expect("allowed tool has a schema");
        wire::validate_arguments(schema, &args).map_err(|e| BackendError::ProtocolViolation(format!("{name}: {e}")))?;
        Ok((name, args))
    }

    fn select(&self, role: &str, tool: &str, action: &Action, view: &AnnotatedView, obs: &Observation) -> Result<Value, BackendError> {
        require_labels(view)?;
        let prompt = wire::fill(template(role)?, &[("action", &action_text(action))]);
        let content = format!("{prompt}\n\nObservation:\n{}\n\nNumbered options:\n{}", obs.render(), view.describe());
        Ok(self.call(&content, &[tool], &view.labels())?.1)
    }
}

fn template(role: &str) -> Result<&'static str, BackendError> {
    wire::prompt_template(role).ok_or_else(|| BackendError::InvalidInput(format!("no prompt for {role}")))
}

fn action_text(a: &Action) -> String {
    if a.action_description.trim().is_empty() {
        a.to_string()
    } else {
        format!("{} ({a})", a.action_description)
    }
}

fn check_label(label: u32, view: &AnnotatedView) -> Result<u32, BackendError> {
    if view.labels().contains(&label) {
        Ok(label)
    } else {
        Err(BackendError::ProtocolViolation(format!("label {label} was not offered")))
    }
}

fn nonempty(what: &str, s: &str) -> Result<(), BackendError> {
    if s.trim().is_empty() {
        Err(BackendError::InvalidInput(format!("{what} is empty")))
    } else {
        Ok(())
    }
}

impl VlmBackend for RemoteVlm {
    fn name(&self) -> &str {
        &self.model
    }

    fn describe_scene(&self, instruction: &str, obs: &Observation) -> Result<String, BackendError> {
        nonempty("instruction", instruction)?;
        let prompt = wire::fill(template("describe_scene")?, &[("instruction", instruction)]);
        let (name, args) = self.call(&format!("{prompt}\n\nObservation:\n{}", obs.render()), &["describe_scene"], &[])?;
        let d: DescribeArgs = wire::decode_args(&name, args)?;
        Ok(d.scene_description)
    }

    fn plan_action(
        &self,
        instruction: &str,
        obs: &Observation,
        stm: &StmLedger,
        context: &RetrievedContext,
    ) -> Result<Action, BackendError> {
        nonempty("instruction", instruction)?;
        let prompt = wire::fill(
            template("planner")?,
            &[
                ("instruction", instruction),
                ("short_term_memory", &stm.render()),
                ("long_term_memory", &context.render()),
            ],
        );
        let content = format!("{prompt}\n\nObservation:\n{}", obs.render());
        let (name, args) = self.call(&content, &wire::PLANNER_TOOLS, &[])?;
        wire::action_from_call(&name, args)
    }

    fn choose_grasp_section(&self, action: &Action, view: &AnnotatedView, obs: &Observation) -> Result<u32, BackendError> {
        let args = self.select("choose_section", "choose_section", action, view, obs)?;
        let a: SectionArgs = wire::decode_args("choose_section", args)?;
        check_label(a.grasp_section_number, view)
    }

    fn choose_placement(&self, action: &Action, view: &AnnotatedView, obs: &Observation) -> Result<u32, BackendError> {
        let args = self.select("choose_location", "choose_location", action, view, obs)?;
        let a: LocationArgs = wire::decode_args("choose_location", args)?;
        check_label(a.best_placement_location, view)
    }

    fn choose_push_spot(&self, action: &Action, view: &AnnotatedView, obs: &Observation) -> Result<u32, BackendError> {
        let args = self.select("select_position", "select_position", action, view, obs)?;
        let a: PositionArgs = wire::decode_args("select_position", args)?;
        check_label(a.gripper_position_number, view)
    }

    fn evaluate_action(&self, action: &Action, obs: &Observation, instruction: &str) -> Result<FeedbackRecord, BackendError> {
        nonempty("instruction", instruction)?;
        let prompt = wire::fill(
            template("evaluate_action")?,
            &[("action", &action_text(action)), ("instruction", instruction)],
        );
        let tool = "evaluate_action_status_and_issues";
        let (_, args) = self.call(&format!("{prompt}\n\nObservation after the action:\n{}", obs.render()), &[tool], &[])?;
        wire::feedback_from_args(args)
    }

    fn summarize_experience(&self, stm: &StmLedger) -> Result<ExperienceSummary, BackendError> {
        if stm.entries().is_empty() {
            return Err(BackendError::InvalidInput("short-term memory is empty".into()));
        }
        let prompt = wire::fill(template("summarize_experience")?, &[("short_term_memory", &stm.render())]);
        let (name, args) = self.call(&prompt, &["summarize_robot_experience"], &[])?;
        let s: SummaryArgs = wire::decode_args(&name, args)?;
        nonempty("summary", &s.summary).map_err(|_| BackendError::ProtocolViolation("empty summary".into()))?;
        Ok(ExperienceSummary { text: s.summary, lesson: None })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{annotate, CandidateSet, Point2, RasterMask};
    use crate::remote::{FixtureResponse, FixtureTransport};
    use crate::world::{observe, Scenario};
    use serde_json::json;

    fn vlm(responses: Vec<Value>) -> (Arc<FixtureTransport>, RemoteVlm) {
        let t = Arc::new(FixtureTransport::new(
            responses.into_iter().map(|body| FixtureResponse::Http { status: 200, body }),
        ));
        let v = RemoteVlm::new(t.clone(), "http://fixture", "test-model", None)
            .with_policy(RetryPolicy::default().without_backoff());
        (t, v)
    }

    fn view(n: usize) -> AnnotatedView {
        let set = CandidateSet::from_locations((0..n).map(|i| Point2::new(i as f64, 0.0)));
        annotate(&RasterMask::new(4, 4), &set).unwrap()
    }

    #[test]
    fn section_choice_round_trip() {
        let args = json!({"reasoning": "r", "object_part_description": "d", "grasp_section_number": 3});
        let (t, v) = vlm(vec![wire::tool_call_reply("choose_section", &args)]);
        let obs = observe(&Scenario::builtin("stm-egg").unwrap().reset());
        assert_eq!(v.choose_grasp_section(&Action::pick("egg"), &view(5), &obs).unwrap(), 3);
        let req = &t.requests()[0];
        assert!(req.url.ends_with("/v1/chat/completions"));
        assert_eq!(req.body["tools"][0]["function"]["parameters"]["properties"]["grasp_section_number"]["enum"], json!([1, 2, 3, 4, 5]));
        assert_eq!(req.body["tool_choice"], "required");
    }

    #[test]
    fn label_outside_enum_is_rejected() {
        let args = json!({"reasoning": "r", "object_part_description": "d", "grasp_section_number": 9});
        let (_, v) = vlm(vec![wire::tool_call_reply("choose_section", &args)]);
        let obs = observe(&Scenario::builtin("stm-egg").unwrap().reset());
        let err = v.choose_grasp_section(&Action::pick("egg"), &view(3), &obs).unwrap_err();
        assert!(matches!(err, BackendError::ProtocolViolation(_)));
    }

    #[test]
    fn planner_prompt_carries_memories() {
        let a = Action::pick("apple").with_reasoning("grasp it").with_scene("s");
        let (name, args) = wire::action_to_call(&a);
        let (t, v) = vlm(vec![wire::tool_call_reply(name, &args)]);
        let s = Scenario::builtin("stm-apple-container").unwrap();
        let got = v.plan_action(&s.instruction, &observe(&s.reset()), &StmLedger::new(), &RetrievedContext::empty()).unwrap();
        assert_eq!(got, a);
        let body = &t.requests()[0].body;
        let content = body["messages"][0]["content"].as_str().unwrap();
        assert!(content.contains(&s.instruction));
        assert!(!content.contains("{short_term_memory}"));
        assert_eq!(body["tools"].as_array().unwrap().len(), 3);
    }

    #[test]
    fn wrong_tool_is_a_violation() {
        let (_, v) = vlm(vec![wire::tool_call_reply("summarize_robot_experience", &json!({"summary": "x"}))]);
        let s = Scenario::builtin("stm-egg").unwrap();
        let err = v.describe_scene(&s.instruction, &observe(&s.reset())).unwrap_err();
        assert!(matches!(err, BackendError::ProtocolViolation(_)));
    }

    #[test]
    fn empty_inputs_rejected_before_network() {
        let (t, v) = vlm(vec![]);
        let obs = observe(&Scenario::builtin("stm-egg").unwrap().reset());
        assert!(matches!(v.describe_scene(" ", &obs), Err(BackendError::InvalidInput(_))));
        assert!(matches!(v.summarize_experience(&StmLedger::new()), Err(BackendError::InvalidInput(_))));
        assert!(v.choose_placement(&Action::place("egg", "table"), &view(0), &obs).is_err());
        assert_eq!(t.calls(), 0);
    }
}
