//! Intent classification agent: prompt construction and ReAct-style
//! completion parsing.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Intent, Schemas};
use crate::template::{fill, INTENT_TEMPLATE};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntentError {
    #[error("last tool `{0}` is not in the catalog")]
    UnknownLastTool(String),
    #[error("completion is missing the `{0}` line")]
    MissingField(&'static str),
    #[error("action `{0}` is not a catalog tool")]
    UnknownAction(String),
    #[error("empty completion")]
    EmptyCompletion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tool {
    pub name: String,
    pub description: String,
}

const CATALOG: [(&str, &str); 12] = [
    ("find_hotel", "search for a hotel to stay in"),
    ("book_hotel", "book a hotel to stay in"),
    ("find_train", "search for trains that take you places"),
    ("book_train", "book train tickets"),
    ("find_attraction", "search for places to see for leisure"),
    ("find_restaurant", "search for places to wine and dine"),
    ("book_restaurant", "book a table at a restaurant"),
    ("find_hospital", "search for a medical facility or a doctor"),
    ("find_taxi", "find or book taxis to travel between places"),
    ("find_bus", "search for a bus"),
    ("find_police", "search for police station"),
    (
        "other",
        "This tool is used to handle problems that cannot be addressed by any other tools.",
    ),
];

/// The twelve tools offered to the intent agent.
pub fn default_catalog() -> Vec<Tool> {
    CATALOG
        .iter()
        .map(|(n, d)| Tool {
            name: n.to_string(),
            description: d.to_string(),
        })
        .collect()
}

pub const NO_TOOL: &str = "none";

#[derive(Debug, Clone, PartialEq)]
pub struct IntentPromptInputs {
    /// Current user utterance only; the intent agent never sees history.
    pub question: String,
    /// `"none"` on the first turn.
    pub last_tool: String,
    pub tool_catalog: Vec<Tool>,
}

impl IntentPromptInputs {
    pub fn new(question: impl Into<String>, last_tool: impl Into<String>) -> Self {
        IntentPromptInputs {
            question: question.into(),
            last_tool: last_tool.into(),
            tool_catalog: default_catalog(),
        }
    }
}

pub fn build_intent_prompt(
    inputs: &IntentPromptInputs,
    schemas: &Schemas,
) -> Result<String, IntentError> {
    let tool_apis = inputs
        .tool_catalog
        .iter()
        .map(|t| format!("{}: {}", t.name, t.description))
        .collect::<Vec<_>>()
        .join("\n");

    let task_logic = if inputs.last_tool == NO_TOOL {
        String::new()
    } else {
        if !inputs.tool_catalog.iter().any(|t| t.name == inputs.last_tool) {
            return Err(IntentError::UnknownLastTool(inputs.last_tool.clone()));
        }
        let mut block = format!(
            "## Task Logic\nIf last query is {}, the user can use the same tool for the following types of query:\n",
            inputs.last_tool
        );
        let domain = Intent::from_tool_name(&inputs.last_tool)
            .ok()
            .map(|i| i.domain());
        if let Some(schema) = domain.and_then(|d| schemas.get(&d)) {
            for slot in &schema.informable {
                block.push_str("  - ");
                block.push_str(&slot.prompt_line());
                block.push('\n');
            }
        }
        block.push('\n');
        block
    };

    Ok(fill(
        INTENT_TEMPLATE,
        &[
            ("tool_apis", &tool_apis),
            ("task_logic", &task_logic),
            ("last_tool", &inputs.last_tool),
            ("question", &inputs.question),
        ],
    ))
}

/// Renders the completion a perfectly trained model emits after the prompt.
pub fn render_intent_target(action: &str) -> String {
    format!("Action: {action}\nFinish!")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentCompletion {
    /// Echoed `Last Tool:` line, when the model restates it.
    pub last_tool: Option<String>,
    /// Echoed `Question:` line; informational only.
    pub question_echo: Option<String>,
    pub action: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Value of the first line starting with `label`, plus how many lines matched.
pub(crate) fn labeled_line<'a>(text: &'a str, label: &str) -> (Option<&'a str>, usize) {
    let mut first = None;
    let mut count = 0;
    for line in text.lines() {
        if let Some(rest) = line.trim().strip_prefix(label) {
            count += 1;
            if first.is_none() {
                let v = rest.trim();
                first = Some(v.strip_suffix("Finish!").map_or(v, str::trim_end));
            }
        }
    }
    (first, count)
}

/// Parses a ReAct-format completion. Only the `Action:` line is required.
pub fn parse_intent_completion(text: &str, catalog: &[Tool]) -> Result<IntentCompletion, IntentError> {
    if text.trim().is_empty() {
        return Err(IntentError::EmptyCompletion);
    }
    let mut warnings = Vec::new();
    let (action, n) = labeled_line(text, "Action:");
    let action = action.ok_or(IntentError::MissingField("Action"))?;
    if n > 1 {
        warnings.push(format!("{n} Action lines; using the first"));
    }
    if !catalog.iter().any(|t| t.name == action) {
        return Err(IntentError::UnknownAction(action.to_string()));
    }
    let (last_tool, _) = labeled_line(text, "Last Tool:");
    let (question, _) = labeled_line(text, "Question:");
    Ok(IntentCompletion {
        last_tool: last_tool.map(str::to_string),
        question_echo: question.map(str::to_string),
        action: action.to_string(),
        warnings,
    })
}

/// Maps a validated action to its intent. Catalog actions always map.
pub fn to_intent(completion: &IntentCompletion) -> Intent {
    Intent::from_tool_name(&completion.action).unwrap_or_else(|_| Intent::end())
}
