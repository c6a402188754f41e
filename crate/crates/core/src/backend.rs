//! Completion backends: an HTTP chat-completion client, a scripted
//! backend for tests, a gold-annotation oracle, and a journaling wrapper.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::dataset::Dialogue;
use crate::intent::render_intent_target;
use crate::model::Domain;
use crate::slot::render_slot_target;

pub const DEFAULT_MAX_TOKENS: u32 = 256;
pub const DEFAULT_AUTH_ENV: &str = "TOD_API_KEY";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("request timed out")]
    Timeout,
    #[error("server answered HTTP {0}")]
    HttpStatus(u16),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed server reply: {0}")]
    BadReply(String),
    #[error("no script rule matches the prompt")]
    NoScriptMatch,
    #[error("no gold annotation for {0}")]
    OracleMissingAnnotation(String),
    #[error("environment variable {0} is not set")]
    MissingAuth(String),
    #[error("invalid backend configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Intent,
    Slot,
    Response,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stage::Intent => "intent",
            Stage::Slot => "slot",
            Stage::Response => "response",
        })
    }
}

/// Where a request comes from in the pipeline. Only the oracle reads it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestContext {
    pub dialogue_id: String,
    pub turn_index: usize,
    pub stage: Stage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<Domain>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub max_tokens: u32,
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop: Option<Vec<String>>,
    #[serde(default)]
    pub model_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<RequestContext>,
}

impl CompletionRequest {
    pub fn new(prompt: impl Into<String>) -> Self {
        CompletionRequest {
            prompt: prompt.into(),
            max_tokens: DEFAULT_MAX_TOKENS,
            temperature: 0.0,
            stop: None,
            model_id: String::new(),
            context: None,
        }
    }

    pub fn with_context(mut self, context: RequestContext) -> Self {
        self.context = Some(context);
        self
    }
}

pub trait CompletionBackend: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError>;
}

impl<B: CompletionBackend + ?Sized> CompletionBackend for Box<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        (**self).complete(request)
    }
}

impl<B: CompletionBackend + ?Sized> CompletionBackend for &B {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        (**self).complete(request)
    }
}

fn default_model() -> String {
    "default".into()
}
fn default_auth_env() -> String {
    DEFAULT_AUTH_ENV.into()
}
fn default_timeout_ms() -> u64 {
    60_000
}
fn default_retries() -> u32 {
    3
}
fn default_backoff_ms() -> u64 {
    250
}
fn default_in_flight() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpConfig {
    /// Base URL of the service; `/chat/completions` is appended.
    pub base_url: String,
    #[serde(default = "default_model")]
    pub model_id: String,
    /// Environment variable holding the bearer token; empty disables auth.
    #[serde(default = "default_auth_env")]
    pub auth_env: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
}

impl HttpConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        HttpConfig {
            base_url: base_url.into(),
            model_id: default_model(),
            auth_env: default_auth_env(),
            timeout_ms: default_timeout_ms(),
            max_retries: default_retries(),
            backoff_ms: default_backoff_ms(),
            max_in_flight: default_in_flight(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendDescriptor {
    Http(HttpConfig),
    Scripted { script: PathBuf },
    /// Gold answers from a dialogue file; defaults to the evaluated split.
    Oracle {
        #[serde(default)]
        dialogues: Option<PathBuf>,
    },
}

impl BackendDescriptor {
    pub fn validate(&self) -> Result<(), BackendError> {
        match self {
            BackendDescriptor::Http(c) if c.base_url.trim().is_empty() => {
                Err(BackendError::InvalidConfig("http backend needs a base_url".into()))
            }
            BackendDescriptor::Http(c) if c.max_in_flight == 0 => {
                Err(BackendError::InvalidConfig("max_in_flight must be positive".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Counting semaphore bounding concurrent requests.
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn new(n: usize) -> Self {
        Gate {
            free: Mutex::new(n),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

/// Client for an OpenAI-style `/chat/completions` endpoint.
pub struct HttpBackend {
    config: HttpConfig,
    token: Option<String>,
    agent: ureq::Agent,
    gate: Gate,
    retries: AtomicU64,
}

impl HttpBackend {
    /// Reads the auth token from the configured environment variable.
    pub fn new(config: HttpConfig) -> Result<Self, BackendError> {
        let token = if config.auth_env.is_empty() {
            None
        } else {
            Some(
                std::env::var(&config.auth_env)
                    .map_err(|_| BackendError::MissingAuth(config.auth_env.clone()))?,
            )
        };
        Self::with_token(config, token)
    }

    pub fn with_token(config: HttpConfig, token: Option<String>) -> Result<Self, BackendError> {
        BackendDescriptor::Http(config.clone()).validate()?;
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(HttpBackend {
            gate: Gate::new(config.max_in_flight),
            config,
            token,
            agent,
            retries: AtomicU64::new(0),
        })
    }

    /// Retries performed since construction.
    pub fn retries(&self) -> u64 {
        self.retries.load(Ordering::Relaxed)
    }

    fn url(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }

    fn attempt(&self, body: &Value) -> Result<String, BackendError> {
        let mut req = self.agent.post(self.url());
        if let Some(t) = &self.token {
            req = req.header("Authorization", format!("Bearer {t}"));
        }
        let mut resp = req.send_json(body).map_err(map_ureq)?;
        let status = resp.status().as_u16();
        if !(200..300).contains(&status) {
            return Err(BackendError::HttpStatus(status));
        }
        let reply: Value = resp.body_mut().read_json().map_err(map_ureq)?;
        let choice = &reply["choices"][0];
        choice["message"]["content"]
            .as_str()
            .or_else(|| choice["text"].as_str())
            .map(str::to_string)
            .ok_or_else(|| BackendError::BadReply("no choices[0].message.content".into()))
    }
}

fn map_ureq(e: ureq::Error) -> BackendError {
    match e {
        ureq::Error::Timeout(_) => BackendError::Timeout,
        ureq::Error::StatusCode(c) => BackendError::HttpStatus(c),
        ureq::Error::Json(e) => BackendError::BadReply(e.to_string()),
        other => BackendError::Transport(other.to_string()),
    }
}

fn is_transient(e: &BackendError) -> bool {
    match e {
        BackendError::Timeout | BackendError::Transport(_) => true,
        BackendError::HttpStatus(c) => *c == 429 || *c >= 500,
        _ => false,
    }
}

impl CompletionBackend for HttpBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        let model = if request.model_id.is_empty() {
            &self.config.model_id
        } else {
            &request.model_id
        };
        let mut body = json!({
            "model": model,
            "messages": [{"role": "user", "content": request.prompt}],
            "max_tokens": request.max_tokens,
            "temperature": request.temperature,
        });
        if let Some(stop) = &request.stop {
            body["stop"] = json!(stop);
        }
        let _permit = self.gate.acquire();
        let mut attempt = 0;
        loop {
            match self.attempt(&body) {
                Ok(text) => return Ok(text),
                Err(e) if is_transient(&e) && attempt < self.config.max_retries => {
                    let wait = self.config.backoff_ms.saturating_mul(1 << attempt.min(16));
                    attempt += 1;
                    self.retries.fetch_add(1, Ordering::Relaxed);
                    log::warn!("completion attempt {attempt} failed ({e}); retrying in {wait} ms");
                    std::thread::sleep(Duration::from_millis(wait));
                }
                Err(e) => return Err(e),
            }
        }
    }
}

#[derive(Debug, Clone)]
enum Predicate {
    Contains(String),
    Matches(Regex),
    Stage(Stage),
}

impl Predicate {
    fn holds(&self, req: &CompletionRequest) -> bool {
        match self {
            Predicate::Contains(s) => req.prompt.contains(s.as_str()),
            Predicate::Matches(r) => r.is_match(&req.prompt),
            Predicate::Stage(s) => req.context.as_ref().is_some_and(|c| c.stage == *s),
        }
    }
}

#[derive(Debug, Clone)]
struct Rule {
    predicates: Vec<Predicate>,
    response: String,
}

#[derive(Deserialize)]
struct RuleFile {
    #[serde(default)]
    contains: Option<String>,
    #[serde(default)]
    regex: Option<String>,
    #[serde(default)]
    stage: Option<Stage>,
    response: String,
}

/// Returns the response of the first rule whose predicates all hold.
#[derive(Debug, Clone, Default)]
pub struct ScriptedBackend {
    rules: Vec<Rule>,
}

impl ScriptedBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn when_contains(mut self, needle: impl Into<String>, response: impl Into<String>) -> Self {
        self.rules.push(Rule {
            predicates: vec![Predicate::Contains(needle.into())],
            response: response.into(),
        });
        self
    }

    pub fn when_matches(mut self, pattern: Regex, response: impl Into<String>) -> Self {
        self.rules.push(Rule {
            predicates: vec![Predicate::Matches(pattern)],
            response: response.into(),
        });
        self
    }

    pub fn otherwise(mut self, response: impl Into<String>) -> Self {
        self.rules.push(Rule {
            predicates: vec![],
            response: response.into(),
        });
        self
    }

    /// Parses `[{"contains"?, "regex"?, "stage"?, "response"}]`.
    pub fn from_json(text: &str) -> Result<Self, BackendError> {
        let raw: Vec<RuleFile> =
            serde_json::from_str(text).map_err(|e| BackendError::InvalidConfig(e.to_string()))?;
        let mut rules = Vec::with_capacity(raw.len());
        for r in raw {
            let mut predicates = Vec::new();
            if let Some(c) = r.contains {
                predicates.push(Predicate::Contains(c));
            }
            if let Some(p) = r.regex {
                let re = Regex::new(&p).map_err(|e| BackendError::InvalidConfig(e.to_string()))?;
                predicates.push(Predicate::Matches(re));
            }
            if let Some(s) = r.stage {
                predicates.push(Predicate::Stage(s));
            }
            rules.push(Rule {
                predicates,
                response: r.response,
            });
        }
        Ok(ScriptedBackend { rules })
    }

    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BackendError::InvalidConfig(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

impl CompletionBackend for ScriptedBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        self.rules
            .iter()
            .find(|r| r.predicates.iter().all(|p| p.holds(request)))
            .map(|r| r.response.clone())
            .ok_or(BackendError::NoScriptMatch)
    }
}

/// Answers every stage with the gold annotation of the addressed turn.
#[derive(Debug, Clone, Default)]
pub struct OracleBackend {
    dialogues: HashMap<String, Dialogue>,
}

impl OracleBackend {
    pub fn new(dialogues: &[Dialogue]) -> Self {
        OracleBackend {
            dialogues: dialogues.iter().map(|d| (d.id.clone(), d.clone())).collect(),
        }
    }
}

/// Gold slot-agent completion for `turn`, addressed to `domain`. Slots the
/// user abandoned since the previous turn are cleared with explicit nulls.
pub fn gold_slot_completion(d: &Dialogue, turn: usize, domain: Domain) -> String {
    let t = &d.turns[turn];
    let current = t.state.get(&domain).cloned().unwrap_or_default();
    let previous = turn
        .checked_sub(1)
        .and_then(|p| d.turns[p].state.get(&domain).cloned())
        .unwrap_or_default();
    let information: Vec<String> = if t.domain == domain {
        t.requested.clone()
    } else {
        vec![]
    };
    let removed: Vec<&str> = previous.keys().filter(|k| !current.contains(k)).collect();
    if removed.is_empty() {
        return render_slot_target(&current, &information);
    }
    let mut params = serde_json::Map::new();
    for (k, v) in current.iter() {
        params.insert(k.to_string(), json!(v));
    }
    for k in removed {
        params.insert(k.to_string(), Value::Null);
    }
    format!(
        "Parameters: {}\nInformation: {}\nFinish!",
        Value::Object(params),
        json!(information)
    )
}

impl CompletionBackend for OracleBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        let ctx = request
            .context
            .as_ref()
            .ok_or_else(|| BackendError::OracleMissingAnnotation("request without context".into()))?;
        let missing = || {
            BackendError::OracleMissingAnnotation(format!(
                "{} turn {} ({})",
                ctx.dialogue_id, ctx.turn_index, ctx.stage
            ))
        };
        let d = self.dialogues.get(&ctx.dialogue_id).ok_or_else(missing)?;
        let t = d.turns.get(ctx.turn_index).ok_or_else(missing)?;
        match ctx.stage {
            Stage::Intent => Ok(render_intent_target(&t.intent.tool_name())),
            Stage::Slot => {
                let domain = ctx.domain.unwrap_or(t.domain);
                Ok(gold_slot_completion(d, ctx.turn_index, domain))
            }
            Stage::Response if t.system_delex.trim().is_empty() => Err(missing()),
            Stage::Response => Ok(t.system_delex.clone()),
        }
    }
}

/// Appends `{request, response, latency_ms}` lines for every call.
pub struct JournaledBackend<B> {
    inner: B,
    sink: Mutex<BufWriter<File>>,
}

impl<B: CompletionBackend> JournaledBackend<B> {
    pub fn new(inner: B, path: &Path) -> std::io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(JournaledBackend {
            inner,
            sink: Mutex::new(BufWriter::new(file)),
        })
    }
}

impl<B: CompletionBackend> CompletionBackend for JournaledBackend<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        let start = Instant::now();
        let result = self.inner.complete(request);
        let line = json!({
            "request": request,
            "response": match &result {
                Ok(t) => json!(t),
                Err(e) => json!({"error": e.to_string()}),
            },
            "latency_ms": start.elapsed().as_millis() as u64,
        });
        let mut sink = self.sink.lock().unwrap_or_else(|e| e.into_inner());
        if let Err(e) = writeln!(sink, "{line}").and_then(|_| sink.flush()) {
            log::warn!("journal write failed: {e}");
        }
        result
    }
}
