//! Training-data generation: per-agent SFT examples, DPO preference pairs
//! from validation bad cases, negative synthesis and rebalancing of the
//! preference set towards the SFT category distribution.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::gold_slot_completion;
use crate::dataset::Dialogue;
use crate::db::stable_hash;
use crate::evaluation::sentence_bleu;
use crate::intent::{
    build_intent_prompt, default_catalog, parse_intent_completion, render_intent_target, IntentPromptInputs,
    NO_TOOL,
};
use crate::model::{Domain, Schemas, SlotMap, Turn};
use crate::orchestrator::{Pipeline, Transcript};
use crate::response::{build_response_prompt, ResponsePromptInputs};
use crate::slot::{build_slot_prompt, parse_slot_completion, render_slot_target, SlotPromptInputs};

pub const DEFAULT_BLEU_THRESHOLD: f64 = 0.30;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DatagenError {
    #[error("dialogue {dialogue_id} has no annotated domain (turn {turn})")]
    MissingGoldState { dialogue_id: String, turn: usize },
    #[error("BLEU threshold {0} is outside [0, 1]")]
    ThresholdOutOfRange(f64),
    #[error("no corruption possible for this example")]
    NoCorruptionPossible,
    #[error("not enough gold examples to synthesize bad cases for `{0}`")]
    InsufficientPool(String),
    #[error("prompt construction failed: {0}")]
    Prompt(String),
    #[error("i/o error: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Intent,
    Slot,
    Response,
}

impl AgentKind {
    pub const ALL: [AgentKind; 3] = [AgentKind::Intent, AgentKind::Slot, AgentKind::Response];

    pub fn as_str(self) -> &'static str {
        match self {
            AgentKind::Intent => "intent",
            AgentKind::Slot => "slot",
            AgentKind::Response => "response",
        }
    }
}

impl std::str::FromStr for AgentKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "intent" => Ok(AgentKind::Intent),
            "slot" => Ok(AgentKind::Slot),
            "response" => Ok(AgentKind::Response),
            other => Err(format!("unknown agent `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SftExample {
    pub agent: AgentKind,
    pub domain: Domain,
    pub prompt: String,
    pub target: String,
    pub dialogue_id: String,
    pub turn_index: usize,
    /// Slot values seen anywhere in the dialogue, used for value swaps.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub context_values: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    ObservedBadCase,
    Synthesized,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub prompt: String,
    pub chosen: String,
    pub rejected: String,
    pub domain: Domain,
    pub agent: AgentKind,
    pub provenance: Provenance,
}

/// Anything carrying a domain label.
pub trait Labeled {
    fn domain(&self) -> Domain;
}

impl Labeled for SftExample {
    fn domain(&self) -> Domain {
        self.domain
    }
}

impl Labeled for PreferencePair {
    fn domain(&self) -> Domain {
        self.domain
    }
}

fn context_values(d: &Dialogue) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for t in &d.turns {
        for slots in t.state.values() {
            for (_, vs) in slots.iter() {
                for v in vs {
                    if !out.contains(v) {
                        out.push(v.clone());
                    }
                }
            }
        }
    }
    out
}

fn history_window(d: &Dialogue, upto: usize, n: usize) -> Vec<Turn> {
    let mut turns = Vec::new();
    for t in &d.turns[..upto] {
        turns.push(Turn::user(&t.user));
        let mut sys = Turn::system(&t.system);
        sys.delex = Some(t.system_delex.clone());
        turns.push(sys);
    }
    let start = turns.len().saturating_sub(n);
    turns.split_off(start)
}

/// Gold prompt/target pairs for one agent. Every user turn yields an intent
/// example; turns that close the dialogue have no slot example; turns
/// without a reference have no response example.
pub fn build_sft(
    dialogues: &[Dialogue],
    agent: AgentKind,
    pipeline: &Pipeline,
) -> Result<Vec<SftExample>, DatagenError> {
    let schemas = &pipeline.schemas;
    let catalog = default_catalog();
    let mut out = Vec::new();
    for d in dialogues {
        if d.turns.iter().all(|t| t.domain == Domain::Other) {
            return Err(DatagenError::MissingGoldState {
                dialogue_id: d.id.clone(),
                turn: 0,
            });
        }
        let context = context_values(d);
        for (i, t) in d.turns.iter().enumerate() {
            let example = |prompt: String, target: String| SftExample {
                agent,
                domain: t.domain,
                prompt,
                target,
                dialogue_id: d.id.clone(),
                turn_index: i,
                context_values: if agent == AgentKind::Slot { context.clone() } else { vec![] },
            };
            match agent {
                AgentKind::Intent => {
                    let last_tool = i.checked_sub(1).map_or(NO_TOOL.to_string(), |p| d.turns[p].intent.tool_name());
                    let inputs = IntentPromptInputs {
                        question: t.user.clone(),
                        last_tool,
                        tool_catalog: catalog.clone(),
                    };
                    let prompt = build_intent_prompt(&inputs, schemas).map_err(|e| DatagenError::Prompt(e.to_string()))?;
                    out.push(example(prompt, render_intent_target(&t.intent.tool_name())));
                }
                AgentKind::Slot => {
                    let Some(schema) = schemas.get(&t.domain).filter(|_| t.domain != Domain::Other) else {
                        continue;
                    };
                    let history = i.checked_sub(1).map(|p| d.turns[p].state.clone()).unwrap_or_default();
                    let prompt = build_slot_prompt(&SlotPromptInputs {
                        question: t.user.clone(),
                        domain: t.domain,
                        schema,
                        history_slots: history,
                        include_history: pipeline.options.include_history,
                    })
                    .map_err(|e| DatagenError::Prompt(e.to_string()))?;
                    out.push(example(prompt, gold_slot_completion(d, i, t.domain)));
                }
                AgentKind::Response => {
                    if t.system_delex.trim().is_empty() {
                        continue;
                    }
                    let observation = match schemas.get(&t.domain).filter(|_| t.domain != Domain::Other) {
                        Some(schema) => pipeline
                            .observe(t.intent, schema, &t.active_slots())
                            .map_err(DatagenError::Prompt)?,
                        None => crate::db::Observation::empty(Domain::Other),
                    };
                    let mut inputs = ResponsePromptInputs::new(&t.user, observation)
                        .with_history(history_window(d, i, pipeline.options.history_turns));
                    inputs.max_words = pipeline.options.max_words;
                    let prompt = build_response_prompt(&inputs).map_err(|e| DatagenError::Prompt(e.to_string()))?;
                    out.push(example(prompt, t.system_delex.clone()));
                }
            }
        }
    }
    Ok(out)
}

fn slot_view(text: &str, schemas: &Schemas, domain: Domain) -> Option<(SlotMap, Vec<String>, Vec<String>)> {
    let schema = schemas.get(&domain)?;
    let r = parse_slot_completion(text, schema).ok()?;
    let mut info = r.information;
    info.sort();
    let mut dropped = r.dropped;
    dropped.sort();
    Some((r.parameters, info, dropped))
}

/// Preference pairs from a validation run: wrong intents, wrong slots, and
/// responses whose sentence BLEU falls under `bleu_threshold`.
pub fn collect_bad_cases(
    transcripts: &[Transcript],
    gold: &[Dialogue],
    agent: AgentKind,
    bleu_threshold: f64,
    schemas: &Schemas,
) -> Result<Vec<PreferencePair>, DatagenError> {
    if !(0.0..=1.0).contains(&bleu_threshold) {
        return Err(DatagenError::ThresholdOutOfRange(bleu_threshold));
    }
    let by_id: BTreeMap<&str, &Dialogue> = gold.iter().map(|d| (d.id.as_str(), d)).collect();
    let mut out = Vec::new();
    for tr in transcripts {
        let Some(d) = by_id.get(tr.dialogue_id.as_str()) else { continue };
        for trace in &tr.traces {
            let Some(g) = d.turns.get(trace.turn_index) else { continue };
            let pair = |prompt: &Option<String>, chosen: String, rejected: &Option<String>| {
                let (prompt, rejected) = (prompt.clone()?, rejected.clone()?);
                (!rejected.trim().is_empty() && rejected.trim() != chosen.trim()).then_some(PreferencePair {
                    prompt,
                    chosen,
                    rejected,
                    domain: g.domain,
                    agent,
                    provenance: Provenance::ObservedBadCase,
                })
            };
            let made = match agent {
                AgentKind::Intent => {
                    let predicted = trace.intent_completion.as_deref().and_then(|c| {
                        parse_intent_completion(c, &default_catalog()).ok().map(|p| p.action)
                    });
                    let gold_tool = g.intent.tool_name();
                    if predicted.as_deref() == Some(gold_tool.as_str()) {
                        None
                    } else {
                        pair(&trace.intent_prompt, render_intent_target(&gold_tool), &trace.intent_completion)
                    }
                }
                AgentKind::Slot => {
                    if trace.intent.map(|i| i.domain()) != Some(g.domain) || g.domain == Domain::Other {
                        None
                    } else {
                        let chosen = gold_slot_completion(d, trace.turn_index, g.domain);
                        let same = match (&trace.slot_completion, slot_view(&chosen, schemas, g.domain)) {
                            (Some(c), Some(gv)) => slot_view(c, schemas, g.domain) == Some(gv),
                            _ => false,
                        };
                        if same {
                            None
                        } else {
                            pair(&trace.slot_prompt, chosen, &trace.slot_completion)
                        }
                    }
                }
                AgentKind::Response => {
                    let reference = g.system_delex.clone();
                    match &trace.final_response {
                        Some(r) if !reference.is_empty() && sentence_bleu(r, &reference) < bleu_threshold => {
                            pair(&trace.response_prompt, reference, &trace.final_response)
                        }
                        _ => None,
                    }
                }
            };
            out.extend(made);
        }
    }
    Ok(out)
}

fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let bytes = text.as_bytes();
    for (i, b) in bytes.iter().enumerate() {
        if matches!(b, b'.' | b'?' | b'!') && bytes.get(i + 1).is_none_or(|n| n.is_ascii_whitespace()) {
            out.push(text[start..=i].trim());
            start = i + 1;
        }
    }
    if start < text.len() && !text[start..].trim().is_empty() {
        out.push(text[start..].trim());
    }
    out
}

fn corrupt_response(target: &str, rng: &mut impl Rng) -> Option<String> {
    let re = regex::Regex::new(r"\[[a-z]+_choice\]|\b\d+\b").expect("static regex");
    let sentences = split_sentences(target);
    let wrong_count = re.find(target).map(|m| {
        let wrong = if m.as_str() == "1" { "2" } else { "1" };
        format!("{}{}{}", &target[..m.start()], wrong, &target[m.end()..])
    });
    let dropped_question = {
        let kept: Vec<&str> = sentences.iter().copied().filter(|s| !s.ends_with('?')).collect();
        (kept.len() < sentences.len() && !kept.is_empty()).then(|| kept.join(" "))
    };
    let mut options: Vec<String> = [wrong_count, dropped_question].into_iter().flatten().collect();
    if options.is_empty() {
        // placeholder rule violated: typed slots replaced by a vague word
        let stripped = regex::Regex::new(r"\[[a-z0-9_]+\]")
            .expect("static regex")
            .replace_all(target, "it")
            .into_owned();
        if stripped != target {
            options.push(stripped);
        }
    }
    if options.is_empty() {
        // a count nobody asked for, e.g. inside a farewell
        let n = rng.random_range(2..10);
        options.push(format!("There are {n} options. {}", target.trim()));
    }
    options.retain(|o| o.trim() != target.trim() && !o.trim().is_empty());
    if options.is_empty() {
        None
    } else {
        let i = rng.random_range(0..options.len());
        Some(options.swap_remove(i))
    }
}

fn corrupt_slots(example: &SftExample, schemas: &Schemas, rng: &mut impl Rng) -> Option<String> {
    let schema = schemas.get(&example.domain)?;
    let parsed = parse_slot_completion(&example.target, schema).ok()?;
    let params = parsed.parameters;
    if params.is_empty() {
        return None;
    }
    let slots: Vec<(String, Vec<String>)> = params.iter().map(|(k, v)| (k.to_string(), v.to_vec())).collect();

    let swap = |rng: &mut dyn rand::RngCore| -> Option<SlotMap> {
        let mut candidates = Vec::new();
        for (k, vs) in &slots {
            let spec = schema.slot(k)?;
            let mut pool: Vec<&String> = example.context_values.iter().filter(|v| !vs.contains(v)).collect();
            if let Some(closed) = &spec.values {
                pool.retain(|v| closed.contains(v));
                if pool.is_empty() {
                    pool = closed.iter().filter(|v| !vs.contains(v)).collect();
                }
            }
            if !pool.is_empty() {
                candidates.push((k.clone(), pool));
            }
        }
        if candidates.is_empty() {
            return None;
        }
        let (k, pool) = &candidates[rng.random_range(0..candidates.len())];
        let replacement = pool[rng.random_range(0..pool.len())].clone();
        let mut out = params.clone();
        let mut vs = out.get(k)?.to_vec();
        let idx = rng.random_range(0..vs.len());
        vs[idx] = replacement;
        vs.dedup();
        out.insert(k.clone(), vs);
        Some(out)
    };
    let remove = |rng: &mut dyn rand::RngCore| -> Option<SlotMap> {
        let multi: Vec<&(String, Vec<String>)> = slots.iter().filter(|(_, v)| v.len() > 1).collect();
        if multi.is_empty() {
            return None;
        }
        let (k, vs) = multi[rng.random_range(0..multi.len())];
        let mut vs = vs.clone();
        vs.remove(rng.random_range(0..vs.len()));
        let mut out = params.clone();
        out.insert(k.clone(), vs);
        Some(out)
    };
    let corrupted = if rng.random_bool(0.5) {
        swap(rng).or_else(|| remove(rng))
    } else {
        remove(rng).or_else(|| swap(rng))
    }?;
    Some(render_slot_target(&corrupted, &parsed.information))
}

/// Builds a preference pair whose rejected side is a well-formed but wrong
/// rewrite of the gold target.
pub fn synthesize_negative(
    example: &SftExample,
    schemas: &Schemas,
    rng: &mut impl Rng,
) -> Result<PreferencePair, DatagenError> {
    let rejected = match example.agent {
        AgentKind::Intent => {
            let catalog = default_catalog();
            let gold = parse_intent_completion(&example.target, &catalog)
                .map_err(|_| DatagenError::NoCorruptionPossible)?
                .action;
            let others: Vec<&str> = catalog.iter().map(|t| t.name.as_str()).filter(|n| *n != gold).collect();
            Some(render_intent_target(others[rng.random_range(0..others.len())]))
        }
        AgentKind::Slot => corrupt_slots(example, schemas, rng),
        AgentKind::Response => corrupt_response(&example.target, rng),
    }
    .ok_or(DatagenError::NoCorruptionPossible)?;
    if rejected == example.target {
        return Err(DatagenError::NoCorruptionPossible);
    }
    Ok(PreferencePair {
        prompt: example.prompt.clone(),
        chosen: example.target.clone(),
        rejected,
        domain: example.domain,
        agent: example.agent,
        provenance: Provenance::Synthesized,
    })
}

/// What the rebalancing groups by.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CategoryKey {
    #[default]
    Domain,
    /// First slot of the gold Parameters; falls back to the domain.
    SlotName,
}

fn first_slot(target: &str) -> Option<String> {
    let line = target.lines().find_map(|l| l.trim().strip_prefix("Parameters:"))?;
    let v: serde_json::Value = serde_json::from_str(line.trim()).ok()?;
    v.as_object()?.keys().next().cloned()
}

impl CategoryKey {
    pub fn of_pair(self, p: &PreferencePair) -> String {
        match self {
            CategoryKey::Domain => p.domain.as_str().to_string(),
            CategoryKey::SlotName => first_slot(&p.chosen).unwrap_or_else(|| p.domain.as_str().to_string()),
        }
    }

    pub fn of_example(self, e: &SftExample) -> String {
        match self {
            CategoryKey::Domain => e.domain.as_str().to_string(),
            CategoryKey::SlotName => first_slot(&e.target).unwrap_or_else(|| e.domain.as_str().to_string()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CategoryDistribution {
    pub counts: BTreeMap<String, usize>,
    pub weights: BTreeMap<String, f64>,
}

impl CategoryDistribution {
    pub fn from_labels<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Self {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for l in labels {
            *counts.entry(l.into()).or_insert(0) += 1;
        }
        Self::from_counts(counts)
    }

    pub fn from_counts(counts: BTreeMap<String, usize>) -> Self {
        let total: usize = counts.values().sum();
        let weights = counts
            .iter()
            .map(|(k, c)| (k.clone(), if total == 0 { 0.0 } else { *c as f64 / total as f64 }))
            .collect();
        CategoryDistribution { counts, weights }
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }
}

/// Splits `n` into integer parts proportional to `weights`, assigning the
/// leftover units to the largest fractional remainders (ties by key).
pub fn largest_remainder(n: usize, weights: &BTreeMap<String, f64>) -> BTreeMap<String, usize> {
    let sum: f64 = weights.values().sum();
    if sum <= 0.0 {
        return weights.keys().map(|k| (k.clone(), 0)).collect();
    }
    let mut parts: Vec<(String, usize, f64)> = weights
        .iter()
        .map(|(k, w)| {
            let exact = n as f64 * w / sum;
            (k.clone(), exact.floor() as usize, exact - exact.floor())
        })
        .collect();
    let assigned: usize = parts.iter().map(|p| p.1).sum();
    let mut order: Vec<usize> = (0..parts.len()).collect();
    order.sort_by(|&a, &b| parts[b].2.total_cmp(&parts[a].2).then_with(|| parts[a].0.cmp(&parts[b].0)));
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        parts[i].1 += 1;
    }
    parts.into_iter().map(|(k, c, _)| (k, c)).collect()
}

/// Smallest total covering every observed category at its target share.
fn target_total(observed: &BTreeMap<String, usize>, weights: &BTreeMap<String, f64>, at_least: usize) -> usize {
    let mut n = at_least;
    for (k, c) in observed {
        if let Some(w) = weights.get(k).filter(|w| **w > 0.0) {
            n = n.max(((*c as f64) / w - 1e-9).ceil() as usize);
        }
    }
    loop {
        let targets = largest_remainder(n, weights);
        let covered = observed
            .iter()
            .all(|(k, c)| weights.get(k).is_none_or(|w| *w == 0.0) || targets.get(k).copied().unwrap_or(0) >= *c);
        if covered {
            return n;
        }
        n += 1;
    }
}

/// Adds synthesized bad cases for under-represented categories so the pair
/// distribution follows `sft_dist`. Observed pairs are kept as they are.
pub fn adapt_distribution(
    pairs: &[PreferencePair],
    sft_dist: &CategoryDistribution,
    sft_pool: &[SftExample],
    schemas: &Schemas,
    seed: u64,
    key: CategoryKey,
) -> Result<Vec<PreferencePair>, DatagenError> {
    let observed: BTreeMap<String, usize> =
        CategoryDistribution::from_labels(pairs.iter().map(|p| key.of_pair(p))).counts;
    let n = target_total(&observed, &sft_dist.weights, pairs.len());
    let targets = largest_remainder(n, &sft_dist.weights);

    let mut out = pairs.to_vec();
    for (category, target) in &targets {
        let have = observed.get(category).copied().unwrap_or(0);
        if *target <= have {
            continue;
        }
        let mut need = target - have;
        let mut pool: Vec<&SftExample> = sft_pool.iter().filter(|e| key.of_example(e) == *category).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ stable_hash(category.as_bytes()));
        pool.shuffle(&mut rng);
        for example in pool {
            if need == 0 {
                break;
            }
            if let Ok(p) = synthesize_negative(example, schemas, &mut rng) {
                out.push(p);
                need -= 1;
            }
        }
        if need > 0 {
            return Err(DatagenError::InsufficientPool(category.clone()));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionReport {
    pub total: usize,
    pub counts: BTreeMap<String, usize>,
    pub weights: BTreeMap<String, f64>,
    pub sft_weights: BTreeMap<String, f64>,
    pub tv_distance: f64,
    #[serde(default)]
    pub synthesized: usize,
}

/// Half the L1 distance between two category distributions.
pub fn tv_distance(a: &BTreeMap<String, f64>, b: &BTreeMap<String, f64>) -> f64 {
    let keys: std::collections::BTreeSet<&String> = a.keys().chain(b.keys()).collect();
    0.5 * keys
        .into_iter()
        .map(|k| (a.get(k).unwrap_or(&0.0) - b.get(k).unwrap_or(&0.0)).abs())
        .sum::<f64>()
}

pub fn distribution_report(pairs: &[PreferencePair], sft_dist: &CategoryDistribution, key: CategoryKey) -> DistributionReport {
    let dist = CategoryDistribution::from_labels(pairs.iter().map(|p| key.of_pair(p)));
    DistributionReport {
        total: pairs.len(),
        tv_distance: tv_distance(&dist.weights, &sft_dist.weights),
        counts: dist.counts,
        weights: dist.weights,
        sft_weights: sft_dist.weights.clone(),
        synthesized: pairs.iter().filter(|p| p.provenance == Provenance::Synthesized).count(),
    }
}

/// Drops every item labeled `removed`, keeping the rest in order.
pub fn filter_domain<T: Labeled + Clone>(items: &[T], removed: Domain) -> Vec<T> {
    items.iter().filter(|i| i.domain() != removed).cloned().collect()
}

/// Filters JSONL text by its `domain` field, leaving kept lines byte-identical.
/// Returns the kept text and how many lines were removed.
pub fn filter_jsonl(text: &str, removed: Domain) -> (String, usize) {
    let mut kept = String::with_capacity(text.len());
    let mut dropped = 0;
    for line in text.split_inclusive('\n') {
        let domain = serde_json::from_str::<serde_json::Value>(line.trim_end())
            .ok()
            .and_then(|v| v.get("domain").and_then(|d| d.as_str()).map(str::to_string));
        if domain.as_deref() == Some(removed.as_str()) {
            dropped += 1;
        } else {
            kept.push_str(line);
        }
    }
    (kept, dropped)
}

/// Per-domain line counts of a JSONL file.
pub fn jsonl_domain_counts(text: &str) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let d = serde_json::from_str::<serde_json::Value>(line)
            .ok()
            .and_then(|v| v.get("domain").and_then(|d| d.as_str()).map(str::to_string))
            .unwrap_or_default();
        *out.entry(d).or_insert(0) += 1;
    }
    out
}

#[derive(Serialize)]
struct SftLine<'a> {
    prompt: &'a str,
    completion: &'a str,
    domain: Domain,
    agent: AgentKind,
}

fn write_lines<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<(), DatagenError> {
    let io = |e: std::io::Error| DatagenError::Io(format!("{}: {e}", path.display()));
    let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    for row in rows {
        let line = serde_json::to_string(&row).map_err(|e| DatagenError::Io(e.to_string()))?;
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)
}

/// One `{prompt, completion, domain, agent}` object per line.
pub fn write_sft_jsonl(path: &Path, examples: &[SftExample]) -> Result<(), DatagenError> {
    write_lines(
        path,
        examples.iter().map(|e| SftLine {
            prompt: &e.prompt,
            completion: &e.target,
            domain: e.domain,
            agent: e.agent,
        }),
    )
}

/// One `{prompt, chosen, rejected, domain, agent, provenance}` object per line.
pub fn write_dpo_jsonl(path: &Path, pairs: &[PreferencePair]) -> Result<(), DatagenError> {
    write_lines(path, pairs)
}
