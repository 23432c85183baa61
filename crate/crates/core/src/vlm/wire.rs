//! Function-calling schemas, prompt templates, and tool-call codecs.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::{FeedbackRecord, FeedbackStatus};
use crate::action::{Action, Skill};
use crate::geometry::PushDirection;
use crate::remote::BackendError;

/// Placeholder in selector schemas for the list of offered labels.
const OPTION_NUMBERS: &str = "\"__OPTION_NUMBERS__\"";

pub const TOOL_NAMES: [&str; 9] = [
    "describe_scene",
    "pick_object",
    "place_object",
    "push_object",
    "choose_section",
    "choose_location",
    "select_position",
    "evaluate_action_status_and_issues",
    "summarize_robot_experience",
];

pub const PLANNER_TOOLS: [&str; 3] = ["pick_object", "place_object", "push_object"];

pub fn schema_text(name: &str) -> Option<&'static str> {
    Some(match name {
        "describe_scene" => include_str!("../../schemas/describe_scene.json"),
        "pick_object" => include_str!("../../schemas/pick_object.json"),
        "place_object" => include_str!("../../schemas/place_object.json"),
        "push_object" => include_str!("../../schemas/push_object.json"),
        "choose_section" => include_str!("../../schemas/choose_section.json"),
        "choose_location" => include_str!("../../schemas/choose_location.json"),
        "select_position" => include_str!("../../schemas/select_position.json"),
        "evaluate_action_status_and_issues" => include_str!("../../schemas/evaluate_action_status_and_issues.json"),
        "summarize_robot_experience" => include_str!("../../schemas/summarize_robot_experience.json"),
        _ => return None,
    })
}

/// Schema text as sent on the wire, with selector labels filled in.
pub fn render_schema(name: &str, labels: &[u32]) -> Result<String, BackendError> {
    let text = schema_text(name).ok_or_else(|| BackendError::InvalidInput(format!("unknown tool {name:?}")))?;
    if !text.contains(OPTION_NUMBERS) {
        return Ok(text.to_string());
    }
    if labels.is_empty() {
        return Err(BackendError::InvalidInput(format!("{name} needs at least one option")));
    }
    let list = labels.iter().map(u32::to_string).collect::<Vec<_>>().join(", ");
    Ok(text.replace(OPTION_NUMBERS, &format!("[{list}]")))
}

pub fn schema_value(name: &str, labels: &[u32]) -> Result<Value, BackendError> {
    serde_json::from_str(&render_schema(name, labels)?)
        .map_err(|e| BackendError::InvalidInput(format!("schema {name} is not JSON: {e}")))
}

pub fn prompt_template(role: &str) -> Option<&'static str> {
    Some(match role {
        "describe_scene" => include_str!("../../prompts/describe_scene.txt"),
        "planner" => include_str!("../../prompts/planner.txt"),
        "choose_section" => include_str!("../../prompts/choose_section.txt"),
        "choose_location" => include_str!("../../prompts/choose_location.txt"),
        "select_position" => include_str!("../../prompts/select_position.txt"),
        "evaluate_action" => include_str!("../../prompts/evaluate_action.txt"),
        "summarize_experience" => include_str!("../../prompts/summarize_experience.txt"),
        _ => return None,
    })
}

/// Substitutes `{key}` placeholders in one pass, so inserted values are
/// never themselves rescanned.
pub fn fill(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    'scan: while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        for (k, v) in values {
            if after.starts_with(k) && after[k.len()..].starts_with('}') {
                out.push_str(v);
                rest = &after[k.len() + 1..];
                continue 'scan;
            }
        }
        out.push('{');
        rest = after;
    }
    out.push_str(rest);
    out
}

/// Minimal strict-mode check of tool arguments against a schema: object
/// shape, required keys, no extras, primitive types and enums.
pub fn validate_arguments(schema: &Value, args: &Value) -> Result<(), String> {
    let params = schema
        .pointer("/function/parameters")
        .ok_or("schema has no parameters")?;
    let obj = args.as_object().ok_or("arguments are not an object")?;
    let props = params["properties"].as_object().ok_or("schema has no properties")?;
    for req in params["required"].as_array().into_iter().flatten() {
        let key = req.as_str().unwrap_or_default();
        if !obj.contains_key(key) {
            return Err(format!("missing required field {key:?}"));
        }
    }
    for (key, value) in obj {
        let prop = props.get(key).ok_or_else(|| format!("unexpected field {key:?}"))?;
        let ok = match prop["type"].as_str() {
            Some("string") => value.is_string(),
            Some("integer") => value.is_u64() || value.is_i64(),
            Some("boolean") => value.is_boolean(),
            _ => true,
        };
        if !ok {
            return Err(format!("field {key:?} has the wrong type"));
        }
        if let Some(options) = prop["enum"].as_array() {
            if !options.contains(value) {
                return Err(format!("field {key:?} value {value} is not among the options"));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PickArgs {
    pub scene_description: String,
    pub reasoning: String,
    pub target_object: String,
    pub grasp_part: String,
    pub specific_grasp_required: bool,
    pub action_description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlaceArgs {
    pub scene_description: String,
    pub reasoning: String,
    pub target_object: String,
    pub placement_location: String,
    pub precise_placement_spot_required: bool,
    pub action_description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PushArgs {
    pub scene_description: String,
    pub reasoning: String,
    pub object_to_push: String,
    pub push_direction: PushDirection,
    pub action_description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DescribeArgs {
    pub reasoning: String,
    pub scene_description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SectionArgs {
    pub reasoning: String,
    pub object_part_description: String,
    pub grasp_section_number: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocationArgs {
    pub reasoning: String,
    pub placement_spot_description: String,
    pub best_placement_location: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PositionArgs {
    pub reasoning: String,
    pub gripper_position_description: String,
    pub gripper_position_number: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateArgs {
    pub reasoning: String,
    pub action_status: FeedbackStatus,
    pub failure_cause: String,
    pub next_step_suggestions: String,
    pub is_task_completed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SummaryArgs {
    pub summary: String,
}

pub fn decode_args<T: DeserializeOwned>(tool: &str, args: Value) -> Result<T, BackendError> {
    serde_json::from_value(args).map_err(|e| BackendError::ProtocolViolation(format!("{tool} arguments: {e}")))
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("wire structs serialize")
}

/// Tool name and arguments for an action.
pub fn action_to_call(a: &Action) -> (&'static str, Value) {
    match a.skill {
        Skill::Pick => (
            "pick_object",
            to_value(&PickArgs {
                scene_description: a.scene_description.clone(),
                reasoning: a.reasoning.clone(),
                target_object: a.target_object.clone(),
                grasp_part: a.grasp_part.clone().unwrap_or_default(),
                specific_grasp_required: a.specific_grasp_required,
                action_description: a.action_description.clone(),
            }),
        ),
        Skill::Place => (
            "place_object",
            to_value(&PlaceArgs {
                scene_description: a.scene_description.clone(),
                reasoning: a.reasoning.clone(),
                target_object: a.target_object.clone(),
                placement_location: a.placement_location.clone().unwrap_or_default(),
                precise_placement_spot_required: a.precise_placement_spot_required,
                action_description: a.action_description.clone(),
            }),
        ),
        Skill::Push => (
            "push_object",
            to_value(&PushArgs {
                scene_description: a.scene_description.clone(),
                reasoning: a.reasoning.clone(),
                object_to_push: a.target_object.clone(),
                push_direction: a.push_direction.unwrap_or(PushDirection::Right),
                action_description: a.action_description.clone(),
            }),
        ),
    }
}

pub fn action_from_call(tool: &str, args: Value) -> Result<Action, BackendError> {
    let action = match tool {
        "pick_object" => {
            let p: PickArgs = decode_args(tool, args)?;
            Action {
                skill: Skill::Pick,
                target_object: p.target_object,
                grasp_part: Some(p.grasp_part).filter(|g| !g.trim().is_empty()),
                specific_grasp_required: p.specific_grasp_required,
                placement_location: None,
                precise_placement_spot_required: false,
                push_direction: None,
                action_description: p.action_description,
                scene_description: p.scene_description,
                reasoning: p.reasoning,
            }
        }
        "place_object" => {
            let p: PlaceArgs = decode_args(tool, args)?;
            Action {
                skill: Skill::Place,
                target_object: p.target_object,
                grasp_part: None,
                specific_grasp_required: false,
                placement_location: Some(p.placement_location),
                precise_placement_spot_required: p.precise_placement_spot_required,
                push_direction: None,
                action_description: p.action_description,
                scene_description: p.scene_description,
                reasoning: p.reasoning,
            }
        }
        "push_object" => {
            let p: PushArgs = decode_args(tool, args)?;
            Action {
                skill: Skill::Push,
                target_object: p.object_to_push,
                grasp_part: None,
                specific_grasp_required: false,
                placement_location: None,
                precise_placement_spot_required: false,
                push_direction: Some(p.push_direction),
                action_description: p.action_description,
                scene_description: p.scene_description,
                reasoning: p.reasoning,
            }
        }
        other => return Err(BackendError::ProtocolViolation(format!("{other:?} is not a planner tool"))),
    };
    action.validate().map_err(BackendError::ProtocolViolation)?;
    Ok(action)
}

pub fn feedback_to_args(fb: &FeedbackRecord) -> Value {
    to_value(&EvaluateArgs {
        reasoning: fb.reasoning.clone(),
        action_status: fb.status,
        failure_cause: fb.failure_cause.clone(),
        next_step_suggestions: fb.next_step_suggestion.clone(),
        is_task_completed: fb.completed,
    })
}

pub fn feedback_from_args(args: Value) -> Result<FeedbackRecord, BackendError> {
    let e: EvaluateArgs = decode_args("evaluate_action_status_and_issues", args)?;
    let fb = FeedbackRecord {
        status: e.action_status,
        failure_cause: e.failure_cause,
        next_step_suggestion: e.next_step_suggestions,
        completed: e.is_task_completed,
        reasoning: e.reasoning,
    };
    fb.validate()?;
    Ok(fb)
}

/// Chat-completions request body asking for one call among `tools`.
pub fn chat_request(model: &str, content: &str, tools: Vec<Value>) -> Value {
    json!({
        "model": model,
        "messages": [{"role": "user", "content": content}],
        "tools": tools,
        "tool_choice": "required",
    })
}

/// The single tool call in a chat-completions reply, as (name, arguments).
pub fn extract_tool_call(reply: &Value, allowed: &[&str]) -> Result<(String, Value), BackendError> {
    let calls = reply
        .pointer("/choices/0/message/tool_calls")
        .and_then(Value::as_array)
        .map(Vec::as_slice)
        .unwrap_or_default();
    let [call] = calls else {
        return Err(BackendError::ProtocolViolation(format!(
            "expected exactly one tool call, got {}",
            calls.len()
        )));
    };
    let name = call
        .pointer("/function/name")
        .and_then(Value::as_str)
        .ok_or_else(|| BackendError::ProtocolViolation("tool call has no function name".into()))?;
    if !allowed.contains(&name) {
        return Err(BackendError::ProtocolViolation(format!("unexpected tool {name:?}")));
    }
    let args = match call.pointer("/function/arguments") {
        Some(Value::String(s)) => serde_json::from_str(s)
            .map_err(|e| BackendError::ProtocolViolation(format!("{name} arguments are not JSON: {e}")))?,
        Some(v @ Value::Object(_)) => v.clone(),
        _ => return Err(BackendError::ProtocolViolation(format!("{name} call has no arguments"))),
    };
    Ok((name.to_string(), args))
}

/// Wraps arguments as a chat-completions reply, for fixtures and tests.
pub fn tool_call_reply(name: &str, args: &Value) -> Value {
    let mut call = Map::new();
    call.insert("id".into(), json!("call_0"));
    call.insert("type".into(), json!("function"));
    call.insert("function".into(), json!({"name": name, "arguments": args.to_string()}));
    json!({
        "object": "chat.completion",
        "choices": [{"index": 0, "message": {"role": "assistant", "content": null, "tool_calls": [call]}, "finish_reason": "tool_calls"}],
    })
}
