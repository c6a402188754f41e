//! Response agent: prompt construction over an observation and advisory
//! validation of the generated reply.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::db::Observation;
use crate::model::{Speaker, Turn};
use crate::template::{fill, RESPONSE_TEMPLATE};

pub const DEFAULT_MAX_WORDS: usize = 25;
pub const DEFAULT_HISTORY_TURNS: usize = 6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ResponseError {
    #[error("empty completion")]
    EmptyCompletion,
    #[error("max_words must be positive")]
    ZeroWordLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResponsePromptInputs {
    pub question: String,
    pub observation: Observation,
    /// Already windowed; rendered oldest first.
    pub history: Vec<Turn>,
    pub max_words: usize,
}

impl ResponsePromptInputs {
    pub fn new(question: impl Into<String>, observation: Observation) -> Self {
        ResponsePromptInputs {
            question: question.into(),
            observation,
            history: Vec::new(),
            max_words: DEFAULT_MAX_WORDS,
        }
    }

    pub fn with_history(mut self, history: Vec<Turn>) -> Self {
        self.history = history;
        self
    }
}

fn render_history(turns: &[Turn]) -> String {
    if turns.is_empty() {
        return String::new();
    }
    let mut s = String::from("## Conversation History\n\n");
    for t in turns {
        let who = match t.speaker {
            Speaker::User => "user",
            Speaker::System => "assistant",
        };
        let text = t.delex.as_deref().unwrap_or(&t.text);
        s.push_str(&format!("{who}: {text}\n"));
    }
    s.push('\n');
    s
}

pub fn build_response_prompt(inputs: &ResponsePromptInputs) -> Result<String, ResponseError> {
    if inputs.max_words == 0 {
        return Err(ResponseError::ZeroWordLimit);
    }
    Ok(fill(
        RESPONSE_TEMPLATE,
        &[
            ("question", &inputs.question),
            ("observation", &inputs.observation.render()),
            ("history", &render_history(&inputs.history)),
            ("max_words", &inputs.max_words.to_string()),
        ],
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponsePolicy {
    pub max_words: usize,
}

impl Default for ResponsePolicy {
    fn default() -> Self {
        ResponsePolicy {
            max_words: DEFAULT_MAX_WORDS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseDiagnostics {
    pub contains_count: bool,
    pub placeholders: Vec<String>,
    pub word_count: usize,
    pub over_limit: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidatedResponse {
    pub text: String,
    pub diagnostics: ResponseDiagnostics,
}

fn placeholder_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\[([a-z0-9_]+)\]").expect("static regex"))
}

/// Bracketed `[name]` tokens in order of appearance.
pub fn extract_placeholders(text: &str) -> Vec<String> {
    placeholder_re()
        .captures_iter(text)
        .map(|c| c[1].to_string())
        .collect()
}

/// Fills placeholders from the observation where it knows the value:
/// option counts, the single matching entity, value ranges and the booking
/// reference. Unknown placeholders are left in place.
pub fn lexicalize(text: &str, observation: &Observation) -> String {
    placeholder_re()
        .replace_all(text, |c: &regex::Captures<'_>| {
            let name = &c[1];
            let attr = name.split_once('_').map_or(name, |(_, a)| a).replace('_', "");
            let known = match attr.as_str() {
                "choice" => Some(observation.option_count.to_string()),
                "reference" | "ref" => observation.booking_reference.clone(),
                _ => observation
                    .single
                    .as_ref()
                    .and_then(|e| e.get(&attr).map(str::to_string))
                    .or_else(|| {
                        let s = observation.conclusions.get(&attr)?;
                        match (s.shown.first(), s.shown.last()) {
                            (Some(a), Some(b)) if a != b => Some(format!("{a} to {b}")),
                            (Some(a), _) => Some(a.clone()),
                            _ => None,
                        }
                    }),
            };
            known.unwrap_or_else(|| c[0].to_string())
        })
        .into_owned()
}

fn mentions_number(text: &str, n: usize) -> bool {
    let needle = n.to_string();
    text.split(|c: char| !c.is_ascii_digit())
        .any(|tok| tok == needle)
}

pub fn validate_response(
    text: &str,
    observation: &Observation,
    policy: &ResponsePolicy,
) -> Result<ValidatedResponse, ResponseError> {
    if text.trim().is_empty() {
        return Err(ResponseError::EmptyCompletion);
    }
    let word_count = text.split_whitespace().count();
    Ok(ValidatedResponse {
        text: text.to_string(),
        diagnostics: ResponseDiagnostics {
            contains_count: mentions_number(text, observation.option_count),
            placeholders: extract_placeholders(text),
            word_count,
            over_limit: word_count > policy.max_words,
        },
    })
}

#[cfg(test)]
mod tests {
    #[test]
    fn lexicalize_fills_known_placeholders() {
        let mut obs = Observation::empty(crate::model::Domain::Train);
        obs.option_count = 133;
        assert_eq!(
            super::lexicalize("there are [train_choice] trains to [train_destination].", &obs),
            "there are 133 trains to [train_destination]."
        );
        obs.single = Some([("trainid".to_string(), "tr1234".to_string())].into_iter().collect());
        obs.booking_reference = Some("abcd1234".into());
        assert_eq!(
            super::lexicalize("[train_trainid] is booked, ref [train_reference].", &obs),
            "tr1234 is booked, ref abcd1234."
        );
    }

    use super::*;
    use crate::db::ValueSummary;
    use crate::model::Domain;
    use proptest::prelude::*;

    fn train_obs() -> Observation {
        let mut o = Observation::empty(Domain::Train);
        o.option_count = 133;
        o.question_content = ["arriveby", "leaveat", "trainid", "day", "price"]
            .map(String::from)
            .to_vec();
        o.conclusions.insert(
            "leaveat".into(),
            ValueSummary::from_values(["05:16", "06:16"]),
        );
        o
    }

    #[test]
    fn prompt_embeds_observation() {
        let p = build_response_prompt(&ResponsePromptInputs::new(
            "I need train reservations from norwich to cambridge",
            train_obs(),
        ))
        .unwrap();
        assert!(p.starts_with("You act as an AI assistant to reponse user's question"));
        assert!(p.contains("The Question is: I need train reservations from norwich to cambridge\n"));
        assert!(p.contains("## Responce Rules"));
        assert!(p.contains("If there is only one options, you can make a conclusion"));
        assert!(p.contains("All the specific information in the response should be in this format: [type_name]"));
        assert!(p.contains("## Observation\n\ntrain information:\noption number: 133\n"));
        assert!(p.contains("no more than 25 words."));
        assert!(p.trim_end().ends_with("Your Response:"));
        assert!(!p.contains("## Conversation History"));
    }

    #[test]
    fn prompt_with_history_and_limit() {
        let mut inputs = ResponsePromptInputs::new("q", train_obs()).with_history(vec![
            Turn::user("hi"),
            Turn {
                speaker: Speaker::System,
                text: "hello there".into(),
                delex: Some("hello [name]".into()),
            },
        ]);
        inputs.max_words = 40;
        let p = build_response_prompt(&inputs).unwrap();
        assert!(p.contains("## Conversation History\n\nuser: hi\nassistant: hello [name]\n\n## Note"));
        assert!(p.contains("no more than 40 words."));
        assert_eq!(p, build_response_prompt(&inputs).unwrap());
        inputs.max_words = 0;
        assert_eq!(build_response_prompt(&inputs), Err(ResponseError::ZeroWordLimit));
    }

    #[test]
    fn validation() {
        let obs = train_obs();
        let v = validate_response(
            "I have 133 options matching your request. What time would you like to leave?",
            &obs,
            &ResponsePolicy::default(),
        )
        .unwrap();
        assert!(v.diagnostics.contains_count);
        assert!(!v.diagnostics.over_limit);

        let v = validate_response("I have 1330 trains.", &obs, &ResponsePolicy::default()).unwrap();
        assert!(!v.diagnostics.contains_count);

        let v = validate_response("The [restaurant_name] is at [address].", &obs, &ResponsePolicy { max_words: 3 })
            .unwrap();
        assert_eq!(v.diagnostics.placeholders, ["restaurant_name", "address"]);
        assert_eq!(v.diagnostics.word_count, 5);
        assert!(v.diagnostics.over_limit);

        assert_eq!(
            validate_response("", &obs, &ResponsePolicy::default()),
            Err(ResponseError::EmptyCompletion)
        );
    }

    #[test]
    fn ignores_non_placeholder_brackets() {
        assert_eq!(
            extract_placeholders("[Name] [a b] [] [ok_1] [x]y"),
            ["ok_1", "x"]
        );
    }

    proptest! {
        #[test]
        fn placeholder_round_trip(names in proptest::collection::vec("[a-z0-9_]{1,12}", 0..6), filler in "[A-Za-z ,.]{0,10}") {
            let text: String = names.iter().map(|n| format!("{filler}[{n}]")).collect();
            prop_assert_eq!(extract_placeholders(&text), names);
        }

        #[test]
        fn validation_never_alters_text(text in "\\PC{1,80}") {
            if let Ok(v) = validate_response(&text, &train_obs(), &ResponsePolicy::default()) {
                prop_assert_eq!(v.text, text);
            }
        }
    }
}
