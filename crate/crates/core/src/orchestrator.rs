//! Turn pipeline: intent, slots, database, response. Runs single turns,
//! whole dialogues and corpora.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{CompletionBackend, CompletionRequest, RequestContext, Stage};
use crate::dataset::Dialogue;
use crate::evaluation::{PredictedTurn, PredictionSet};
use crate::db::{booking_reference, build_observation, taxi_synthesize, Database, Entity, Observation};
use crate::intent::{
    build_intent_prompt, default_catalog, parse_intent_completion, to_intent, IntentPromptInputs, Tool,
    NO_TOOL,
};
use crate::model::{Action, DialogueState, Domain, Intent, Schemas, SlotMap, SlotSchema, Speaker, Turn};
use crate::response::{
    build_response_prompt, validate_response, ResponseDiagnostics, ResponsePolicy, ResponsePromptInputs,
    DEFAULT_HISTORY_TURNS, DEFAULT_MAX_WORDS,
};
use crate::slot::{build_slot_prompt, merge_history, parse_slot_completion, SlotPromptInputs, SlotResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PipelineStage {
    Intent,
    Slot,
    Database,
    Response,
}

impl fmt::Display for PipelineStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PipelineStage::Intent => "intent",
            PipelineStage::Slot => "slot",
            PipelineStage::Database => "database",
            PipelineStage::Response => "response",
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TurnTrace {
    pub turn_index: usize,
    pub user_text: String,
    pub last_tool: String,
    pub intent_prompt: Option<String>,
    pub intent_completion: Option<String>,
    pub intent: Option<Intent>,
    pub slot_prompt: Option<String>,
    pub slot_completion: Option<String>,
    pub slot_result: Option<SlotResult>,
    pub merged_slots: Option<SlotMap>,
    pub observation: Option<Observation>,
    pub response_prompt: Option<String>,
    pub response_completion: Option<String>,
    pub diagnostics: Option<ResponseDiagnostics>,
    pub final_response: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, Error, PartialEq)]
#[error("{stage} stage failed: {cause}")]
pub struct StageError {
    pub stage: PipelineStage,
    pub cause: String,
    pub trace: Box<TurnTrace>,
}

#[derive(Debug, Clone, Error, PartialEq)]
#[error("dialogue {dialogue_id}, turn {turn}: {error}")]
pub struct DialogueError {
    pub dialogue_id: String,
    pub turn: usize,
    pub error: StageError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOptions {
    pub max_words: usize,
    pub history_turns: usize,
    pub include_history: bool,
    /// Condition the intent agent on the annotated previous intent.
    pub gold_last_intent: bool,
    pub max_tokens: u32,
    pub model_id: String,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            max_words: DEFAULT_MAX_WORDS,
            history_turns: DEFAULT_HISTORY_TURNS,
            include_history: true,
            gold_last_intent: false,
            max_tokens: crate::backend::DEFAULT_MAX_TOKENS,
            model_id: String::new(),
        }
    }
}

/// Everything a turn needs besides the backend and the dialogue state.
pub struct Pipeline {
    pub schemas: Schemas,
    pub databases: BTreeMap<Domain, Database>,
    pub catalog: Vec<Tool>,
    pub options: PipelineOptions,
}

/// Addresses a turn for backends that need to know where they are.
#[derive(Debug, Clone, Default)]
pub struct TurnAddress {
    pub dialogue_id: String,
    pub turn_index: usize,
    pub last_tool_override: Option<String>,
}

impl Pipeline {
    pub fn new(schemas: Schemas, databases: BTreeMap<Domain, Database>) -> Self {
        Pipeline {
            schemas,
            databases,
            catalog: default_catalog(),
            options: PipelineOptions::default(),
        }
    }

    fn ask<B: CompletionBackend + ?Sized>(
        &self,
        backend: &B,
        prompt: &str,
        addr: &TurnAddress,
        stage: Stage,
        domain: Option<Domain>,
    ) -> Result<String, String> {
        let mut req = CompletionRequest::new(prompt).with_context(RequestContext {
            dialogue_id: addr.dialogue_id.clone(),
            turn_index: addr.turn_index,
            stage,
            domain,
        });
        req.max_tokens = self.options.max_tokens;
        req.model_id = self.options.model_id.clone();
        backend.complete(&req).map_err(|e| e.to_string())
    }

    fn lookup(&self, domain: Domain, slots: &SlotMap) -> Result<Vec<Entity>, String> {
        if domain == Domain::Taxi {
            return Ok(taxi_synthesize(slots).into_iter().collect());
        }
        match self.databases.get(&domain) {
            Some(db) => db
                .query(slots)
                .map(|hits| hits.into_iter().cloned().collect())
                .map_err(|e| e.to_string()),
            None => Ok(Vec::new()),
        }
    }

    /// Queries the domain's database and summarizes the hits; bookings get
    /// a deterministic reference.
    pub fn observe(&self, intent: Intent, schema: &SlotSchema, slots: &SlotMap) -> Result<Observation, String> {
        let domain = intent.domain();
        let results = self.lookup(domain, slots)?;
        let refs: Vec<&Entity> = results.iter().collect();
        let mut obs = build_observation(&refs, schema, slots);
        if intent.action() == Action::Book {
            if let Some(first) = results.first() {
                obs.booking_reference = Some(booking_reference(domain, first, slots));
            }
        }
        Ok(obs)
    }

    /// Runs one turn. On success the state gains a user and a system turn;
    /// on failure it is left untouched.
    pub fn run_turn<B: CompletionBackend + ?Sized>(
        &self,
        state: &mut DialogueState,
        user_text: &str,
        backend: &B,
        addr: &TurnAddress,
    ) -> Result<(String, TurnTrace), StageError> {
        let mut trace = TurnTrace {
            turn_index: addr.turn_index,
            user_text: user_text.to_string(),
            ..TurnTrace::default()
        };
        let fail = |stage, cause: String, mut trace: TurnTrace| {
            trace.errors.push(format!("{stage}: {cause}"));
            StageError {
                stage,
                cause,
                trace: Box::new(trace),
            }
        };
        if state.ended() {
            return Err(fail(PipelineStage::Intent, "dialogue already ended".into(), trace));
        }

        let last_tool = addr.last_tool_override.clone().unwrap_or_else(|| {
            state.last_intent().map_or(NO_TOOL.to_string(), |i| i.tool_name())
        });
        trace.last_tool = last_tool.clone();
        let inputs = IntentPromptInputs {
            question: user_text.to_string(),
            last_tool,
            tool_catalog: self.catalog.clone(),
        };
        let prompt = match build_intent_prompt(&inputs, &self.schemas) {
            Ok(p) => p,
            Err(e) => return Err(fail(PipelineStage::Intent, e.to_string(), trace)),
        };
        trace.intent_prompt = Some(prompt.clone());
        let completion = match self.ask(backend, &prompt, addr, Stage::Intent, None) {
            Ok(c) => c,
            Err(e) => return Err(fail(PipelineStage::Intent, e, trace)),
        };
        trace.intent_completion = Some(completion.clone());
        let intent = match parse_intent_completion(&completion, &self.catalog) {
            Ok(c) => {
                trace.errors.extend(c.warnings.iter().cloned());
                to_intent(&c)
            }
            Err(e) => return Err(fail(PipelineStage::Intent, e.to_string(), trace)),
        };
        trace.intent = Some(intent);

        let domain = intent.domain();
        let (merged, observation) = if intent.is_end() {
            (None, Observation::empty(Domain::Other))
        } else {
            let Some(schema) = self.schemas.get(&domain) else {
                return Err(fail(PipelineStage::Slot, format!("no schema for {domain}"), trace));
            };
            let slot_inputs = SlotPromptInputs {
                question: user_text.to_string(),
                domain,
                schema,
                history_slots: state.history_slots().clone(),
                include_history: self.options.include_history,
            };
            let prompt = match build_slot_prompt(&slot_inputs) {
                Ok(p) => p,
                Err(e) => return Err(fail(PipelineStage::Slot, e.to_string(), trace)),
            };
            trace.slot_prompt = Some(prompt.clone());
            let completion = match self.ask(backend, &prompt, addr, Stage::Slot, Some(domain)) {
                Ok(c) => c,
                Err(e) => return Err(fail(PipelineStage::Slot, e, trace)),
            };
            trace.slot_completion = Some(completion.clone());
            let result = match parse_slot_completion(&completion, schema) {
                Ok(r) => r,
                Err(e) => return Err(fail(PipelineStage::Slot, e.to_string(), trace)),
            };
            let merged = merge_history(&result.parameters, &state.slots_for(domain), &result.dropped);
            trace.slot_result = Some(result);
            trace.merged_slots = Some(merged.clone());

            let obs = match self.observe(intent, schema, &merged) {
                Ok(o) => o,
                Err(e) => return Err(fail(PipelineStage::Database, e, trace)),
            };
            (Some(merged), obs)
        };
        trace.observation = Some(observation.clone());

        let history = state.recent_turns(self.options.history_turns).to_vec();
        let mut inputs = ResponsePromptInputs::new(user_text, observation.clone()).with_history(history);
        inputs.max_words = self.options.max_words;
        let prompt = match build_response_prompt(&inputs) {
            Ok(p) => p,
            Err(e) => return Err(fail(PipelineStage::Response, e.to_string(), trace)),
        };
        trace.response_prompt = Some(prompt.clone());
        let completion = match self.ask(backend, &prompt, addr, Stage::Response, Some(domain)) {
            Ok(c) => c,
            Err(e) => return Err(fail(PipelineStage::Response, e, trace)),
        };
        trace.response_completion = Some(completion.clone());
        let policy = ResponsePolicy {
            max_words: self.options.max_words,
        };
        let validated = match validate_response(completion.trim(), &observation, &policy) {
            Ok(v) => v,
            Err(e) => return Err(fail(PipelineStage::Response, e.to_string(), trace)),
        };
        trace.diagnostics = Some(validated.diagnostics);
        let text = validated.text;
        trace.final_response = Some(text.clone());

        let mut next = state.clone();
        let commit = (|| {
            next.set_intent(intent)?;
            if let Some(m) = merged {
                next.set_slots(domain, m);
            }
            next.push_turn(Turn::user(user_text))?;
            next.push_turn(Turn {
                speaker: Speaker::System,
                text: text.clone(),
                delex: Some(text.clone()),
            })
        })();
        if let Err(e) = commit {
            return Err(fail(PipelineStage::Response, e.to_string(), trace));
        }
        *state = next;
        Ok((text, trace))
    }

    fn replay<B: CompletionBackend + ?Sized>(
        &self,
        dialogue: &Dialogue,
        backend: &B,
        strict: bool,
    ) -> Result<Transcript, DialogueError> {
        let mut state = DialogueState::new(&dialogue.id);
        let mut transcript = Transcript {
            dialogue_id: dialogue.id.clone(),
            ..Transcript::default()
        };
        for (i, turn) in dialogue.turns.iter().enumerate() {
            if state.ended() {
                transcript.responses.push(String::new());
                transcript.states.push(state.history_slots().clone());
                transcript.skipped += 1;
                continue;
            }
            let addr = TurnAddress {
                dialogue_id: dialogue.id.clone(),
                turn_index: i,
                last_tool_override: self.options.gold_last_intent.then(|| match i {
                    0 => NO_TOOL.to_string(),
                    _ => dialogue.turns[i - 1].intent.tool_name(),
                }),
            };
            match self.run_turn(&mut state, &turn.user, backend, &addr) {
                Ok((text, trace)) => {
                    transcript.responses.push(text);
                    transcript.traces.push(trace);
                }
                Err(error) if strict => {
                    return Err(DialogueError {
                        dialogue_id: dialogue.id.clone(),
                        turn: i,
                        error,
                    })
                }
                Err(error) => {
                    transcript.failures.push((i, error.to_string()));
                    transcript.traces.push(*error.trace);
                    transcript.responses.push(String::new());
                }
            }
            transcript.states.push(state.history_slots().clone());
        }
        Ok(transcript)
    }

    /// Replays the user side of `dialogue`, stopping at the first stage error.
    pub fn run_dialogue<B: CompletionBackend + ?Sized>(
        &self,
        dialogue: &Dialogue,
        backend: &B,
    ) -> Result<Transcript, DialogueError> {
        self.replay(dialogue, backend, true)
    }

    /// Runs every dialogue independently with at most `parallelism` sessions
    /// in flight. Failed turns yield empty responses.
    pub fn run_corpus<B: CompletionBackend + ?Sized>(
        &self,
        dialogues: &[Dialogue],
        backend: &B,
        parallelism: usize,
    ) -> CorpusRun {
        let run = |d: &Dialogue| {
            self.replay(d, backend, false)
                .expect("lenient replay never fails")
        };
        let transcripts: Vec<Transcript> = if parallelism <= 1 {
            dialogues.iter().map(run).collect()
        } else {
            match rayon::ThreadPoolBuilder::new().num_threads(parallelism).build() {
                Ok(pool) => pool.install(|| dialogues.par_iter().map(run).collect()),
                Err(e) => {
                    log::warn!("thread pool unavailable ({e}); running sequentially");
                    dialogues.iter().map(run).collect()
                }
            }
        };
        let predictions = transcripts
            .iter()
            .map(|t| (t.dialogue_id.clone(), t.responses.clone()))
            .collect();
        CorpusRun {
            predictions,
            transcripts,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub dialogue_id: String,
    pub traces: Vec<TurnTrace>,
    /// One entry per user turn; empty for failed or skipped turns.
    pub responses: Vec<String>,
    /// Tracked slots after each user turn, aligned with `responses`.
    #[serde(default)]
    pub states: Vec<BTreeMap<Domain, SlotMap>>,
    pub skipped: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<(usize, String)>,
}

/// Dialogue id to delexicalized responses, ordered by id.
pub type Predictions = BTreeMap<String, Vec<String>>;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorpusRun {
    pub predictions: Predictions,
    pub transcripts: Vec<Transcript>,
}

impl CorpusRun {
    /// Responses paired with the state tracked when each was produced.
    pub fn prediction_set(&self) -> PredictionSet {
        self.transcripts
            .iter()
            .map(|t| {
                let turns = t
                    .responses
                    .iter()
                    .zip(&t.states)
                    .map(|(r, s)| PredictedTurn {
                        response: r.clone(),
                        state: Some(s.clone()),
                    })
                    .collect();
                (t.dialogue_id.clone(), turns)
            })
            .collect()
    }

    pub fn failure_count(&self) -> usize {
        self.transcripts.iter().map(|t| t.failures.len()).sum()
    }
}
