//! MultiWOZ 2.2 dialogue loading: gold turns, delexicalized references and
//! per-dialogue goals.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::model::{Action, Domain, Intent, Normalizer, Schemas, SlotMap, SlotSchema};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DatasetError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("malformed dialogue file {path}: {message}")]
    Malformed { path: String, message: String },
    #[error("dialogue {0}: turns must alternate starting with USER")]
    TurnOrder(String),
}

#[derive(Debug, Deserialize)]
struct RawDialogue {
    dialogue_id: String,
    #[serde(default)]
    services: Vec<String>,
    turns: Vec<RawTurn>,
}

#[derive(Debug, Deserialize)]
struct RawTurn {
    speaker: String,
    utterance: String,
    #[serde(default)]
    frames: Vec<RawFrame>,
}

#[derive(Debug, Deserialize)]
struct RawFrame {
    service: String,
    #[serde(default)]
    slots: Vec<RawSpan>,
    #[serde(default)]
    state: Option<RawState>,
}

#[derive(Debug, Deserialize)]
struct RawSpan {
    slot: String,
    #[serde(default)]
    start: Option<usize>,
    #[serde(default)]
    exclusive_end: Option<usize>,
}

#[derive(Debug, Deserialize)]
struct RawState {
    active_intent: String,
    #[serde(default)]
    requested_slots: Vec<String>,
    #[serde(default)]
    slot_values: BTreeMap<String, Vec<String>>,
}

/// One user utterance and the system reply that follows it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldTurn {
    pub index: usize,
    pub user: String,
    pub system: String,
    pub system_delex: String,
    pub domain: Domain,
    pub intent: Intent,
    /// Cumulative dialogue state after this user turn, per domain.
    pub state: BTreeMap<Domain, SlotMap>,
    /// Attributes requested in this turn for the active domain (short names).
    pub requested: Vec<String>,
}

impl GoldTurn {
    pub fn active_slots(&self) -> SlotMap {
        self.state.get(&self.domain).cloned().unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dialogue {
    pub id: String,
    pub services: Vec<String>,
    pub turns: Vec<GoldTurn>,
}

impl Dialogue {
    pub fn user_turns(&self) -> Vec<&str> {
        self.turns.iter().map(|t| t.user.as_str()).collect()
    }

    pub fn references(&self) -> Vec<&str> {
        self.turns.iter().map(|t| t.system_delex.as_str()).collect()
    }

    /// Domains in which the user expressed an intent, in first-seen order.
    pub fn domains(&self) -> Vec<Domain> {
        let mut out = Vec::new();
        for t in &self.turns {
            if t.domain != Domain::Other && !out.contains(&t.domain) {
                out.push(t.domain);
            }
        }
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DomainGoal {
    pub informable: SlotMap,
    pub requestable: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub booking: Option<SlotMap>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Goal {
    pub dialogue_id: String,
    pub domains: BTreeMap<Domain, DomainGoal>,
}

/// Maps an annotated intent onto the tool catalog; taxi booking is served
/// by the single taxi tool.
pub fn intent_from_label(label: &str) -> Option<Intent> {
    if label == "NONE" || label.is_empty() {
        return None;
    }
    match Intent::from_tool_name(label) {
        Ok(i) => Some(i),
        Err(_) => {
            let (_, d) = label.split_once('_')?;
            Intent::new(d.parse().ok()?, Action::Find).ok()
        }
    }
}

fn gold_slot_map(values: &BTreeMap<String, Vec<String>>, schema: &SlotSchema) -> SlotMap {
    let norm = Normalizer::bundled();
    let mut map = SlotMap::new();
    for (name, raw) in values {
        let Some(spec) = schema.resolve(name) else {
            continue;
        };
        let mut vals: Vec<String> = Vec::new();
        for v in raw {
            if let Ok(v) = norm.normalize_value(spec, v) {
                if !vals.contains(&v) {
                    vals.push(v);
                }
            }
        }
        if !vals.is_empty() {
            map.insert(spec.name.clone(), vals);
        }
    }
    map
}

/// Replaces annotated value spans with `[domain_slot]` placeholders.
/// Offsets are character positions; overlapping spans keep the earliest.
pub fn delexicalize(text: &str, spans: &[(usize, usize, String)]) -> String {
    let mut spans: Vec<&(usize, usize, String)> = spans.iter().filter(|s| s.0 < s.1).collect();
    spans.sort_by_key(|s| (s.0, std::cmp::Reverse(s.1)));
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len());
    let mut pos = 0;
    for (start, end, slot) in spans {
        if *start < pos || *end > chars.len() {
            continue;
        }
        out.extend(&chars[pos..*start]);
        out.push('[');
        out.push_str(&slot.replace('-', "_"));
        out.push(']');
        pos = *end;
    }
    out.extend(&chars[pos..]);
    out
}

fn choose_domain(frames: &[RawFrame], previous: &BTreeMap<Domain, SlotMap>, schemas: &Schemas) -> (Domain, Option<Intent>) {
    let mut fallback = None;
    for f in frames {
        let Some(state) = &f.state else { continue };
        let Some(intent) = intent_from_label(&state.active_intent) else {
            continue;
        };
        let domain = intent.domain();
        let changed = schemas
            .get(&domain)
            .map(|s| gold_slot_map(&state.slot_values, s))
            .is_some_and(|m| previous.get(&domain).map_or(!m.is_empty(), |p| *p != m));
        if changed || !state.requested_slots.is_empty() {
            return (domain, Some(intent));
        }
        fallback.get_or_insert((domain, Some(intent)));
    }
    fallback.unwrap_or((Domain::Other, None))
}

fn convert(raw: RawDialogue, schemas: &Schemas) -> Result<Dialogue, DatasetError> {
    let mut turns = Vec::new();
    let mut state: BTreeMap<Domain, SlotMap> = BTreeMap::new();
    let mut iter = raw.turns.into_iter();
    while let Some(user) = iter.next() {
        if user.speaker != "USER" {
            return Err(DatasetError::TurnOrder(raw.dialogue_id));
        }
        let system = iter.next();
        if system.as_ref().is_some_and(|s| s.speaker != "SYSTEM") {
            return Err(DatasetError::TurnOrder(raw.dialogue_id));
        }
        let (domain, intent) = choose_domain(&user.frames, &state, schemas);
        let mut requested = Vec::new();
        for f in &user.frames {
            let Some(st) = &f.state else { continue };
            let Ok(d) = f.service.parse::<Domain>() else { continue };
            let Some(schema) = schemas.get(&d) else { continue };
            let map = gold_slot_map(&st.slot_values, schema);
            if map.is_empty() {
                state.remove(&d);
            } else {
                state.insert(d, map);
            }
            if d == domain {
                for r in &st.requested_slots {
                    let short = crate::model::short_name(r).to_string();
                    if schema.has_requestable(&short) && !requested.contains(&short) {
                        requested.push(short);
                    }
                }
            }
        }
        let (system_text, system_delex) = match system {
            Some(s) => {
                let spans: Vec<(usize, usize, String)> = s
                    .frames
                    .iter()
                    .flat_map(|f| f.slots.iter())
                    .filter_map(|sp| Some((sp.start?, sp.exclusive_end?, sp.slot.clone())))
                    .collect();
                let delex = delexicalize(&s.utterance, &spans);
                (s.utterance, delex)
            }
            None => (String::new(), String::new()),
        };
        turns.push(GoldTurn {
            index: turns.len(),
            user: user.utterance,
            system: system_text,
            system_delex,
            domain,
            intent: intent.unwrap_or_else(Intent::end),
            state: state.clone(),
            requested,
        });
    }
    Ok(Dialogue {
        id: raw.dialogue_id,
        services: raw.services,
        turns,
    })
}

pub fn parse_dialogues(text: &str, schemas: &Schemas, origin: &str) -> Result<Vec<Dialogue>, DatasetError> {
    let malformed = |e: serde_json::Error| DatasetError::Malformed {
        path: origin.to_string(),
        message: e.to_string(),
    };
    let value: Value = serde_json::from_str(text).map_err(malformed)?;
    let raws: Vec<RawDialogue> = serde_json::from_value(value).map_err(malformed)?;
    raws.into_iter().map(|r| convert(r, schemas)).collect()
}

/// Loads a dialogue file, or every `*.json` file of a directory in name order.
pub fn load_dialogues(path: &Path, schemas: &Schemas) -> Result<Vec<Dialogue>, DatasetError> {
    let io = |e: std::io::Error| DatasetError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    if path.is_dir() {
        let mut files: Vec<_> = std::fs::read_dir(path)
            .map_err(io)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        files.sort();
        let mut out = Vec::new();
        for f in files {
            out.extend(load_dialogues(&f, schemas)?);
        }
        return Ok(out);
    }
    let text = std::fs::read_to_string(path).map_err(io)?;
    parse_dialogues(&text, schemas, &path.display().to_string())
}

/// Requestables tracked for success, the booking reference among them.
pub const REFERENCE: &str = "reference";

/// Derives the user goal from the annotations: final constraints per domain,
/// every requested tracked attribute, and a reference when a booking happened.
pub fn goal_of(dialogue: &Dialogue, schemas: &Schemas, tracked: &[String]) -> Goal {
    let mut domains: BTreeMap<Domain, DomainGoal> = BTreeMap::new();
    let mut booked: BTreeSet<Domain> = BTreeSet::new();
    for t in &dialogue.turns {
        if t.domain == Domain::Other {
            continue;
        }
        let g = domains.entry(t.domain).or_default();
        for r in &t.requested {
            if tracked.contains(r) && !g.requestable.contains(r) {
                g.requestable.push(r.clone());
            }
        }
        if t.intent.action() == Action::Book {
            booked.insert(t.domain);
        }
    }
    let final_state = dialogue.turns.last().map(|t| t.state.clone()).unwrap_or_default();
    for (d, g) in domains.iter_mut() {
        let Some(schema) = schemas.get(d) else { continue };
        let slots = final_state.get(d).cloned().unwrap_or_default();
        let mut informable = SlotMap::new();
        let mut booking = SlotMap::new();
        for (k, v) in slots.iter() {
            match schema.slot(k) {
                Some(spec) if spec.booking => booking.insert(k.to_string(), v.to_vec()),
                Some(_) => informable.insert(k.to_string(), v.to_vec()),
                None => {}
            }
        }
        g.informable = informable;
        if booked.contains(d) {
            g.booking = Some(booking);
            if tracked.iter().any(|t| t == REFERENCE) && !g.requestable.iter().any(|r| r == REFERENCE) {
                g.requestable.push(REFERENCE.to_string());
            }
        }
    }
    Goal {
        dialogue_id: dialogue.id.clone(),
        domains,
    }
}
