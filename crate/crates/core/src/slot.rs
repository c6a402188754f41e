//! Slot filling agent: per-domain prompt, completion parsing into
//! parameters (constraints) and information (requested attributes), and
//! history inheritance.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::intent::labeled_line;
use crate::model::{short_name, Domain, ModelError, Normalizer, SlotMap, SlotSchema, DONTCARE};
use crate::template::{fill, SLOT_TEMPLATE};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SlotError {
    #[error("schema is for {schema} but the prompt targets {requested}")]
    SchemaDomainMismatch { schema: Domain, requested: Domain },
    #[error("completion is missing the `{0}` line")]
    MissingField(&'static str),
    #[error("Parameters is not a JSON object: {0}")]
    ParametersNotJson(String),
    #[error("Information is not a list of strings: {0}")]
    InformationNotList(String),
    #[error("empty completion")]
    EmptyCompletion,
}

#[derive(Debug, Clone)]
pub struct SlotPromptInputs<'a> {
    pub question: String,
    pub domain: Domain,
    pub schema: &'a SlotSchema,
    pub history_slots: BTreeMap<Domain, SlotMap>,
    pub include_history: bool,
}

pub fn build_slot_prompt(inputs: &SlotPromptInputs<'_>) -> Result<String, SlotError> {
    if inputs.schema.domain != inputs.domain || inputs.domain == Domain::Other {
        return Err(SlotError::SchemaDomainMismatch {
            schema: inputs.schema.domain,
            requested: inputs.domain,
        });
    }
    let domain = inputs.domain.as_str();
    let parameters = inputs
        .schema
        .informable
        .iter()
        .map(|s| s.prompt_line())
        .collect::<Vec<_>>()
        .join("\n");
    let information = inputs
        .schema
        .requestable
        .iter()
        .map(|r| format!("{}: {}", r.name, r.description))
        .collect::<Vec<_>>()
        .join("\n");
    // only the active domain's block is rendered
    let history = match inputs.history_slots.get(&inputs.domain) {
        Some(m) if inputs.include_history => m.to_prompt_json(),
        _ => "{}".to_string(),
    };
    let history = format!("{domain}:\n{history}");

    Ok(fill(
        SLOT_TEMPLATE,
        &[
            ("domain", domain),
            ("tool_parameters", &parameters),
            ("tool_information", &information),
            ("history", &history),
            ("question", &inputs.question),
        ],
    ))
}

/// Renders a gold slot-stage completion.
pub fn render_slot_target(parameters: &SlotMap, information: &[String]) -> String {
    let info = information
        .iter()
        .map(|i| crate::model::json_str(i))
        .collect::<Vec<_>>()
        .join(", ");
    format!(
        "Parameters: {}\nInformation: [{}]\nFinish!",
        parameters.to_qualified_json(),
        info
    )
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SlotResult {
    pub action_echo: Option<String>,
    pub parameters: SlotMap,
    pub information: Vec<String>,
    /// Slots the completion explicitly cleared (null, empty or "dontcare").
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dropped: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Text after `label` up to the next labeled line, allowing multi-line JSON.
fn labeled_block(text: &str, label: &str, stops: &[&str]) -> Option<String> {
    let mut lines = text.lines();
    let mut block = None;
    for line in lines.by_ref() {
        if let Some(rest) = line.trim().strip_prefix(label) {
            block = Some(rest.trim().to_string());
            break;
        }
    }
    let mut block = block?;
    for line in lines {
        let t = line.trim();
        if stops.iter().any(|s| t.starts_with(s)) {
            break;
        }
        block.push('\n');
        block.push_str(t);
    }
    let trimmed = block.trim();
    Some(
        trimmed
            .strip_suffix("Finish!")
            .map_or(trimmed, str::trim_end)
            .to_string(),
    )
}

fn value_strings(v: &Value) -> Option<Vec<String>> {
    match v {
        Value::Null => Some(vec![]),
        Value::String(s) => Some(vec![s.clone()]),
        Value::Number(n) => Some(vec![n.to_string()]),
        Value::Bool(b) => Some(vec![b.to_string()]),
        Value::Array(items) => items
            .iter()
            .map(|i| match i {
                Value::String(s) => Some(s.clone()),
                Value::Number(n) => Some(n.to_string()),
                _ => None,
            })
            .collect(),
        Value::Object(_) => None,
    }
}

pub fn parse_slot_completion(text: &str, schema: &SlotSchema) -> Result<SlotResult, SlotError> {
    parse_slot_completion_with(text, schema, Normalizer::bundled())
}

pub fn parse_slot_completion_with(
    text: &str,
    schema: &SlotSchema,
    norm: &Normalizer,
) -> Result<SlotResult, SlotError> {
    if text.trim().is_empty() {
        return Err(SlotError::EmptyCompletion);
    }
    let mut result = SlotResult::default();
    let (action, _) = labeled_line(text, "Action:");
    result.action_echo = action.map(str::to_string);

    let stops = ["Information:", "Finish!", "Question:", "Action:"];
    let params = labeled_block(text, "Parameters:", &stops)
        .ok_or(SlotError::MissingField("Parameters"))?;
    let params: Value =
        serde_json::from_str(&params).map_err(|_| SlotError::ParametersNotJson(params.clone()))?;
    let Value::Object(obj) = params else {
        return Err(SlotError::ParametersNotJson(params.to_string()));
    };

    for (name, value) in &obj {
        let Some(spec) = schema.resolve(name.trim()) else {
            result.warnings.push(format!("unknown slot `{name}` dropped"));
            continue;
        };
        let Some(raw) = value_strings(value) else {
            result.warnings.push(format!("slot `{name}` has a non-scalar value"));
            continue;
        };
        let mut values = Vec::new();
        let mut cleared = raw.iter().all(|r| r.trim().is_empty());
        for r in raw.iter().filter(|r| !r.trim().is_empty()) {
            match norm.normalize_value(spec, r) {
                Ok(v) if v == DONTCARE => cleared = true,
                Ok(v) => {
                    if !values.contains(&v) {
                        values.push(v);
                    }
                }
                Err(ModelError::ValueNotInClosedSet { value, .. }) => result
                    .warnings
                    .push(format!("value `{value}` rejected for {}", spec.name)),
                Err(e) => result.warnings.push(e.to_string()),
            }
        }
        if !values.is_empty() {
            result.parameters.insert(spec.name.clone(), values);
        } else if cleared && !result.dropped.contains(&spec.name) {
            result.dropped.push(spec.name.clone());
        }
    }

    let info = labeled_block(text, "Information:", &["Finish!", "Question:", "Action:", "Parameters:"])
        .ok_or(SlotError::MissingField("Information"))?;
    let items: Value = serde_json::from_str(&info)
        .or_else(|_| serde_json::from_str(&info.replace('\'', "\"")))
        .map_err(|_| SlotError::InformationNotList(info.clone()))?;
    let Value::Array(items) = items else {
        return Err(SlotError::InformationNotList(info));
    };
    for item in items {
        let Value::String(s) = item else {
            return Err(SlotError::InformationNotList(info));
        };
        let s = s.trim().to_lowercase();
        let name = match s.split_once('-') {
            Some((d, rest)) if d == schema.domain.as_str() => rest.to_string(),
            _ => s,
        };
        if !schema.has_requestable(&name) {
            result.warnings.push(format!("unknown information `{name}` dropped"));
            continue;
        }
        let also_param = result.parameters.keys().any(|k| short_name(k) == name);
        if also_param {
            result
                .warnings
                .push(format!("`{name}` is both a parameter and information; kept as parameter"));
            continue;
        }
        if !result.information.contains(&name) {
            result.information.push(name);
        }
    }
    Ok(result)
}

/// History overridden by `current`, then `dropped` removed. Existing slots
/// keep their history position; new slots are appended.
pub fn merge_history(current: &SlotMap, history: &SlotMap, dropped: &[String]) -> SlotMap {
    let mut merged = history.clone();
    for (k, v) in current.iter() {
        merged.insert(k.to_string(), v.to_vec());
    }
    for d in dropped {
        merged.remove(d);
    }
    merged
}
