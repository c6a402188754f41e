//! Shared domain vocabulary: domains, intents, the slot ontology, slot maps,
//! dialogue state and value normalization.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const BUNDLED_SCHEMA: &str = include_str!("../assets/schema.json");
const BUNDLED_SYNONYMS: &str = include_str!("../assets/synonyms.json");

/// Values meaning "no preference"; they never restrict a database query.
pub const DONTCARE: &str = "dontcare";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("unknown domain `{0}`")]
    UnknownDomain(String),
    #[error("unknown action `{0}`")]
    UnknownAction(String),
    #[error("invalid intent {domain}/{action}")]
    InvalidIntent { domain: Domain, action: Action },
    #[error("value is empty after trimming")]
    EmptyValue,
    #[error("value `{value}` is not allowed for slot {slot}")]
    ValueNotInClosedSet { slot: String, value: String },
    #[error("slot `{slot}` is not part of the {domain} schema")]
    UnknownSlot { domain: Domain, slot: String },
    #[error("slot `{0}` has an empty value list")]
    EmptyValueList(String),
    #[error("schema file missing: {0}")]
    SchemaFileMissing(String),
    #[error("schema file malformed: {0}")]
    SchemaFileMalformed(String),
    #[error("turns must alternate user/system starting with user")]
    TurnOrder,
    #[error("dialogue has ended")]
    DialogueEnded,
}

/// Closed set of dialogue domains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Restaurant,
    Hotel,
    Train,
    Attraction,
    Taxi,
    Hospital,
    Police,
    Bus,
    Other,
}

impl Domain {
    pub const ALL: [Domain; 9] = [
        Domain::Restaurant,
        Domain::Hotel,
        Domain::Train,
        Domain::Attraction,
        Domain::Taxi,
        Domain::Hospital,
        Domain::Police,
        Domain::Bus,
        Domain::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Restaurant => "restaurant",
            Domain::Hotel => "hotel",
            Domain::Train => "train",
            Domain::Attraction => "attraction",
            Domain::Taxi => "taxi",
            Domain::Hospital => "hospital",
            Domain::Police => "police",
            Domain::Bus => "bus",
            Domain::Other => "other",
        }
    }

    /// Domains with a `book_*` tool.
    pub fn is_bookable(self) -> bool {
        matches!(self, Domain::Restaurant | Domain::Hotel | Domain::Train)
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Domain {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Domain::ALL
            .iter()
            .copied()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| ModelError::UnknownDomain(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Find,
    Book,
    End,
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Action::Find => "find",
            Action::Book => "book",
            Action::End => "end",
        })
    }
}

/// A (domain, action) pair; `other/end` is the terminal intent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "IntentRepr", into = "IntentRepr")]
pub struct Intent {
    domain: Domain,
    action: Action,
}

#[derive(Serialize, Deserialize)]
struct IntentRepr {
    domain: Domain,
    action: Action,
}

impl TryFrom<IntentRepr> for Intent {
    type Error = ModelError;
    fn try_from(r: IntentRepr) -> Result<Self, Self::Error> {
        Intent::new(r.domain, r.action)
    }
}

impl From<Intent> for IntentRepr {
    fn from(i: Intent) -> Self {
        IntentRepr {
            domain: i.domain,
            action: i.action,
        }
    }
}

impl Intent {
    pub fn new(domain: Domain, action: Action) -> Result<Self, ModelError> {
        let valid = match action {
            Action::End => domain == Domain::Other,
            Action::Find => domain != Domain::Other,
            Action::Book => domain.is_bookable(),
        };
        if valid {
            Ok(Intent { domain, action })
        } else {
            Err(ModelError::InvalidIntent { domain, action })
        }
    }

    pub fn end() -> Self {
        Intent {
            domain: Domain::Other,
            action: Action::End,
        }
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn action(&self) -> Action {
        self.action
    }

    pub fn is_end(&self) -> bool {
        self.action == Action::End
    }

    /// Tool name as it appears in the intent catalog (`find_train`, `other`).
    pub fn tool_name(&self) -> String {
        match self.action {
            Action::End => "other".to_string(),
            a => format!("{}_{}", a, self.domain),
        }
    }

    pub fn from_tool_name(tool: &str) -> Result<Self, ModelError> {
        if tool == "other" {
            return Ok(Intent::end());
        }
        let (action, domain) = tool
            .split_once('_')
            .ok_or_else(|| ModelError::UnknownAction(tool.to_string()))?;
        let action = match action {
            "find" => Action::Find,
            "book" => Action::Book,
            _ => return Err(ModelError::UnknownAction(tool.to_string())),
        };
        Intent::new(domain.parse()?, action)
    }
}

impl fmt::Display for Intent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.domain, self.action)
    }
}

/// How a slot constraint is compared against a database attribute.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchRule {
    #[default]
    Equal,
    /// Entity value must be at or after the constraint (departure times).
    AtLeast,
    /// Entity value must be at or before the constraint (arrival times).
    AtMost,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotSpec {
    /// Fully qualified name, e.g. `restaurant-pricerange`.
    pub name: String,
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<String>>,
    /// Booking slots are carried in state but never filter the database.
    #[serde(default)]
    pub booking: bool,
    #[serde(default, rename = "match")]
    pub match_rule: MatchRule,
}

impl SlotSpec {
    pub fn short_name(&self) -> &str {
        short_name(&self.name)
    }

    /// One-line description used by the agent prompts.
    pub fn prompt_line(&self) -> String {
        match &self.values {
            Some(v) => format!(
                "{}: {} only allowed values: [{}]",
                self.name,
                self.description,
                v.join(", ")
            ),
            None => format!("{}: {}", self.name, self.description),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Requestable {
    pub name: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlotSchema {
    pub domain: Domain,
    /// Attribute that identifies an entity (`name`, `trainid`).
    pub identity: String,
    pub bookable: bool,
    pub informable: Vec<SlotSpec>,
    pub requestable: Vec<Requestable>,
    /// Attributes the response stage may ask the user about, in order.
    pub askable: Vec<String>,
    /// Attributes summarized as sorted value ranges in observations.
    pub ordered: Vec<String>,
}

#[derive(Deserialize)]
struct SchemaEntry {
    identity: String,
    #[serde(default)]
    bookable: bool,
    informable: Vec<SlotSpec>,
    requestable: Vec<Requestable>,
    #[serde(default)]
    askable: Vec<String>,
    #[serde(default)]
    ordered: Vec<String>,
}

#[derive(Deserialize)]
struct SchemaFile {
    domains: BTreeMap<String, SchemaEntry>,
}

impl SlotSchema {
    pub fn slot(&self, name: &str) -> Option<&SlotSpec> {
        self.informable.iter().find(|s| s.name == name)
    }

    /// Resolves either a qualified (`restaurant-area`) or short (`area`) name.
    pub fn resolve(&self, name: &str) -> Option<&SlotSpec> {
        self.slot(name).or_else(|| {
            let qualified = format!("{}-{}", self.domain, name);
            self.slot(&qualified)
        })
    }

    pub fn has_requestable(&self, name: &str) -> bool {
        self.requestable.iter().any(|r| r.name == name)
    }

    fn validate(&self) -> Result<(), ModelError> {
        let mut seen = std::collections::HashSet::new();
        for s in &self.informable {
            if !seen.insert(s.name.as_str()) {
                return Err(ModelError::SchemaFileMalformed(format!(
                    "duplicate slot {}",
                    s.name
                )));
            }
            if !s.name.starts_with(&format!("{}-", self.domain)) {
                return Err(ModelError::SchemaFileMalformed(format!(
                    "slot {} is not qualified by {}",
                    s.name, self.domain
                )));
            }
            if matches!(&s.values, Some(v) if v.is_empty()) {
                return Err(ModelError::SchemaFileMalformed(format!(
                    "empty closed value set for {}",
                    s.name
                )));
            }
        }
        Ok(())
    }
}

/// Per-domain ontology.
pub type Schemas = BTreeMap<Domain, SlotSchema>;

pub fn parse_schemas(text: &str) -> Result<Schemas, ModelError> {
    let file: SchemaFile =
        serde_json::from_str(text).map_err(|e| ModelError::SchemaFileMalformed(e.to_string()))?;
    let mut out = Schemas::new();
    for (name, entry) in file.domains {
        let domain: Domain = name
            .parse()
            .map_err(|_| ModelError::SchemaFileMalformed(format!("unknown domain {name}")))?;
        let schema = SlotSchema {
            domain,
            identity: entry.identity,
            bookable: entry.bookable,
            informable: entry.informable,
            requestable: entry.requestable,
            askable: entry.askable,
            ordered: entry.ordered,
        };
        schema.validate()?;
        out.insert(domain, schema);
    }
    Ok(out)
}

pub fn load_schemas(path: &Path) -> Result<Schemas, ModelError> {
    let text = std::fs::read_to_string(path)
        .map_err(|_| ModelError::SchemaFileMissing(path.display().to_string()))?;
    parse_schemas(&text)
}

/// The bundled MultiWOZ 2.2 ontology.
pub fn default_schemas() -> Result<Schemas, ModelError> {
    parse_schemas(BUNDLED_SCHEMA)
}

pub fn short_name(slot: &str) -> &str {
    slot.split_once('-').map_or(slot, |(_, s)| s)
}

/// Value normalizer backed by a synonym table.
#[derive(Debug, Clone, Default)]
pub struct Normalizer {
    synonyms: HashMap<String, String>,
}

#[derive(Deserialize)]
struct SynonymFile {
    synonyms: HashMap<String, String>,
}

impl Normalizer {
    pub fn new(synonyms: HashMap<String, String>) -> Self {
        Normalizer { synonyms }
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let file: SynonymFile = serde_json::from_str(text)
            .map_err(|e| ModelError::SchemaFileMalformed(format!("synonyms: {e}")))?;
        Ok(Normalizer::new(file.synonyms))
    }

    /// Normalizer using the bundled synonym table.
    pub fn bundled() -> &'static Normalizer {
        static CELL: OnceLock<Normalizer> = OnceLock::new();
        CELL.get_or_init(|| Normalizer::from_json(BUNDLED_SYNONYMS).expect("bundled synonyms"))
    }

    /// Lowercase, collapse whitespace, apply synonyms and canonicalize times.
    /// Returns an empty string for blank input.
    pub fn normalize_text(&self, raw: &str) -> String {
        let collapsed = raw
            .split_whitespace()
            .collect::<Vec<_>>()
            .join(" ")
            .to_lowercase();
        let mapped = match self.synonyms.get(&collapsed) {
            Some(s) => s.clone(),
            None => collapsed,
        };
        canonical_time(&mapped).unwrap_or(mapped)
    }

    pub fn normalize_value(&self, slot: &SlotSpec, raw: &str) -> Result<String, ModelError> {
        let value = self.normalize_text(raw);
        if value.is_empty() {
            return Err(ModelError::EmptyValue);
        }
        if let Some(allowed) = &slot.values {
            if value != DONTCARE && !allowed.contains(&value) {
                return Err(ModelError::ValueNotInClosedSet {
                    slot: slot.name.clone(),
                    value,
                });
            }
        }
        Ok(value)
    }
}

/// Normalizes with the bundled synonym table.
pub fn normalize_value(slot: &SlotSpec, raw: &str) -> Result<String, ModelError> {
    Normalizer::bundled().normalize_value(slot, raw)
}

/// `H:MM` / `HH:MM` to zero-padded `HH:MM`; hours up to 24 are accepted
/// because the train database contains post-midnight arrivals like `24:35`.
pub fn canonical_time(s: &str) -> Option<String> {
    let minutes = time_to_minutes(s)?;
    Some(format!("{:02}:{:02}", minutes / 60, minutes % 60))
}

pub fn time_to_minutes(s: &str) -> Option<u32> {
    let (h, m) = s.split_once(':')?;
    if h.is_empty() || h.len() > 2 || m.len() != 2 {
        return None;
    }
    if !h.bytes().all(|b| b.is_ascii_digit()) || !m.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let h: u32 = h.parse().ok()?;
    let m: u32 = m.parse().ok()?;
    if h > 24 || m > 59 {
        return None;
    }
    Some(h * 60 + m)
}

/// Ordered mapping from qualified slot name to its value list.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SlotMap {
    entries: IndexMap<String, Vec<String>>,
}

impl SlotMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a map, checking every slot against `schema` and normalizing
    /// values. Short names are qualified with the schema's domain.
    pub fn validated<I, K, V>(entries: I, schema: &SlotSchema) -> Result<Self, ModelError>
    where
        I: IntoIterator<Item = (K, Vec<V>)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let norm = Normalizer::bundled();
        let mut map = SlotMap::new();
        for (name, values) in entries {
            let spec = schema
                .resolve(name.as_ref())
                .ok_or_else(|| ModelError::UnknownSlot {
                    domain: schema.domain,
                    slot: name.as_ref().to_string(),
                })?;
            if values.is_empty() {
                return Err(ModelError::EmptyValueList(spec.name.clone()));
            }
            let values = values
                .iter()
                .map(|v| norm.normalize_value(spec, v.as_ref()))
                .collect::<Result<Vec<_>, _>>()?;
            map.insert(spec.name.clone(), values);
        }
        Ok(map)
    }

    /// Inserts without validation; `values` must be non-empty.
    pub fn insert(&mut self, slot: impl Into<String>, values: Vec<String>) {
        debug_assert!(!values.is_empty());
        self.entries.insert(slot.into(), values);
    }

    pub fn remove(&mut self, slot: &str) -> Option<Vec<String>> {
        self.entries.shift_remove(slot)
    }

    pub fn get(&self, slot: &str) -> Option<&[String]> {
        self.entries.get(slot).map(|v| v.as_slice())
    }

    pub fn contains(&self, slot: &str) -> bool {
        self.entries.contains_key(slot)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[String])> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|k| k.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Renders `{"area": ["centre"], "pricerange": ["expensive"]}` with
    /// short slot names, the layout used inside prompts.
    pub fn to_prompt_json(&self) -> String {
        let body = self
            .entries
            .iter()
            .map(|(k, vs)| {
                let vals = vs.iter().map(|v| json_str(v)).collect::<Vec<_>>().join(", ");
                format!("{}: [{}]", json_str(short_name(k)), vals)
            })
            .collect::<Vec<_>>()
            .join(", ");
        format!("{{{body}}}")
    }

    /// Same layout as [`to_prompt_json`](Self::to_prompt_json) with qualified names.
    pub fn to_qualified_json(&self) -> String {
        let body = self
            .entries
            .iter()
            .map(|(k, vs)| {
                let vals = vs.iter().map(|v| json_str(v)).collect::<Vec<_>>().join(", ");
                format!("{}: [{}]", json_str(k), vals)
            })
            .collect::<Vec<_>>()
            .join(", ");
        format!("{{{body}}}")
    }
}

impl FromIterator<(String, Vec<String>)> for SlotMap {
    fn from_iter<T: IntoIterator<Item = (String, Vec<String>)>>(iter: T) -> Self {
        SlotMap {
            entries: iter.into_iter().collect(),
        }
    }
}

pub(crate) fn json_str(s: &str) -> String {
    serde_json::to_string(s).expect("string serialization")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    User,
    System,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: Speaker,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delex: Option<String>,
}

impl Turn {
    pub fn user(text: impl Into<String>) -> Self {
        Turn {
            speaker: Speaker::User,
            text: text.into(),
            delex: None,
        }
    }

    pub fn system(text: impl Into<String>) -> Self {
        Turn {
            speaker: Speaker::System,
            text: text.into(),
            delex: None,
        }
    }
}

/// Per-conversation state, mutated only by its owning session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueState {
    pub dialogue_id: String,
    turns: Vec<Turn>,
    last_intent: Option<Intent>,
    history_slots: BTreeMap<Domain, SlotMap>,
    ended: bool,
}

impl DialogueState {
    pub fn new(dialogue_id: impl Into<String>) -> Self {
        DialogueState {
            dialogue_id: dialogue_id.into(),
            turns: Vec::new(),
            last_intent: None,
            history_slots: BTreeMap::new(),
            ended: false,
        }
    }

    pub fn turns(&self) -> &[Turn] {
        &self.turns
    }

    pub fn last_intent(&self) -> Option<Intent> {
        self.last_intent
    }

    pub fn history_slots(&self) -> &BTreeMap<Domain, SlotMap> {
        &self.history_slots
    }

    pub fn slots_for(&self, domain: Domain) -> SlotMap {
        self.history_slots.get(&domain).cloned().unwrap_or_default()
    }

    pub fn ended(&self) -> bool {
        self.ended
    }

    pub fn push_turn(&mut self, turn: Turn) -> Result<(), ModelError> {
        let expected = if self.turns.len().is_multiple_of(2) {
            Speaker::User
        } else {
            Speaker::System
        };
        if turn.speaker != expected {
            return Err(ModelError::TurnOrder);
        }
        self.turns.push(turn);
        Ok(())
    }

    /// Records the turn's intent; an end intent makes the state terminal.
    pub fn set_intent(&mut self, intent: Intent) -> Result<(), ModelError> {
        if self.ended {
            return Err(ModelError::DialogueEnded);
        }
        self.last_intent = Some(intent);
        if intent.is_end() {
            self.ended = true;
        }
        Ok(())
    }

    pub fn set_slots(&mut self, domain: Domain, slots: SlotMap) {
        self.history_slots.insert(domain, slots);
    }

    /// The last `n` turns.
    pub fn recent_turns(&self, n: usize) -> &[Turn] {
        let start = self.turns.len().saturating_sub(n);
        &self.turns[start..]
    }
}
