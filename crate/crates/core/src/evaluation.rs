//! Corpus metrics: Inform, Success, BLEU, Combined, conditional bigram
//! entropy and lexical richness.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{goal_of, Dialogue, Goal};
use crate::db::Database;
use crate::model::{Domain, Schemas, SlotMap};
use crate::response::extract_placeholders;

const BUNDLED_PLACEHOLDERS: &str = include_str!("../assets/placeholders.json");

/// Numerator used for higher-order n-gram precisions with no match.
pub const BLEU_EPSILON: f64 = 0.1;

/// Conditional bigram entropy is reported in bits.
pub const ENTROPY_LOG_BASE: f64 = 2.0;

/// Dialogue counts per domain used to aggregate per-domain rates.
pub const DOMAIN_WEIGHTS: [(Domain, f64); 5] = [
    (Domain::Attraction, 396.0),
    (Domain::Hotel, 394.0),
    (Domain::Restaurant, 437.0),
    (Domain::Taxi, 195.0),
    (Domain::Train, 495.0),
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("no predictions for dialogue {0}")]
    MissingPrediction(String),
    #[error("dialogue {dialogue_id}: {predicted} predictions for {expected} references")]
    AlignmentMismatch {
        dialogue_id: String,
        predicted: usize,
        expected: usize,
    },
    #[error("corpus has no tokens")]
    EmptyCorpus,
    #[error("malformed placeholder vocabulary: {0}")]
    Vocabulary(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PlaceholderTarget {
    pub domain: Option<Domain>,
    pub attribute: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlaceholderVocab {
    pub tracked_requestables: Vec<String>,
    pub placeholders: HashMap<String, PlaceholderTarget>,
}

impl PlaceholderVocab {
    pub fn from_json(text: &str) -> Result<Self, EvalError> {
        serde_json::from_str(text).map_err(|e| EvalError::Vocabulary(e.to_string()))
    }

    pub fn bundled() -> &'static PlaceholderVocab {
        static CELL: OnceLock<PlaceholderVocab> = OnceLock::new();
        CELL.get_or_init(|| Self::from_json(BUNDLED_PLACEHOLDERS).expect("bundled placeholder vocabulary"))
    }

    /// `(domain, attribute)` mentions in `text`; bare placeholders take
    /// `default_domain`.
    pub fn mentions(&self, text: &str, default_domain: Domain) -> Vec<(Domain, String)> {
        extract_placeholders(text)
            .into_iter()
            .filter_map(|p| self.placeholders.get(&p))
            .map(|t| (t.domain.unwrap_or(default_domain), t.attribute.clone()))
            .collect()
    }
}

fn token_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\[[a-z0-9_]+\]|[a-z0-9]+|[^\sa-z0-9]").expect("static regex"))
}

/// Lowercases and splits off punctuation; `[placeholder]` tokens stay whole.
pub fn tokenize(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    token_re()
        .find_iter(&lower)
        .map(|m| m.as_str().to_string())
        .collect()
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut out = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *out.entry(w).or_insert(0) += 1;
        }
    }
    out
}

/// Sufficient statistics for BLEU-4.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct BleuStats {
    matches: [usize; 4],
    totals: [usize; 4],
    hyp_len: usize,
    ref_len: usize,
}

impl BleuStats {
    fn add(&mut self, hyp: &[String], reference: &[String]) {
        self.hyp_len += hyp.len();
        self.ref_len += reference.len();
        for n in 1..=4 {
            let h = ngram_counts(hyp, n);
            let r = ngram_counts(reference, n);
            self.totals[n - 1] += h.values().sum::<usize>();
            self.matches[n - 1] += h
                .iter()
                .map(|(g, c)| (*c).min(r.get(g).copied().unwrap_or(0)))
                .sum::<usize>();
        }
    }

    /// Score in `[0, 1]`.
    fn score(&self) -> f64 {
        if self.matches[0] == 0 || self.hyp_len == 0 {
            return 0.0;
        }
        let log_sum: f64 = (0..4)
            .map(|i| {
                let total = self.totals[i].max(1) as f64;
                let m = if self.matches[i] == 0 {
                    BLEU_EPSILON
                } else {
                    self.matches[i] as f64
                };
                (m / total).ln()
            })
            .sum();
        let bp = if self.hyp_len > self.ref_len {
            1.0
        } else {
            (1.0 - self.ref_len as f64 / self.hyp_len as f64).exp()
        };
        bp * (log_sum / 4.0).exp()
    }
}

/// Corpus BLEU-4 on a 0–100 scale over aligned (hypothesis, reference) pairs.
pub fn corpus_bleu<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> f64 {
    let mut stats = BleuStats::default();
    for (h, r) in pairs {
        stats.add(&tokenize(h), &tokenize(r));
    }
    100.0 * stats.score()
}

/// Sentence-level BLEU-4 in `[0, 1]`.
pub fn sentence_bleu(hypothesis: &str, reference: &str) -> f64 {
    let mut stats = BleuStats::default();
    stats.add(&tokenize(hypothesis), &tokenize(reference));
    stats.score()
}

/// A predicted system turn, optionally with the tracked state behind it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PredictedTurn {
    pub response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<BTreeMap<Domain, SlotMap>>,
}

impl From<String> for PredictedTurn {
    fn from(response: String) -> Self {
        PredictedTurn { response, state: None }
    }
}

/// Accepts either plain response strings or `{response, state}` objects.
#[derive(Deserialize)]
#[serde(untagged)]
enum PredictionEntry {
    Text(String),
    Full(PredictedTurn),
}

pub type PredictionSet = BTreeMap<String, Vec<PredictedTurn>>;

pub fn parse_predictions(text: &str) -> Result<PredictionSet, serde_json::Error> {
    let raw: BTreeMap<String, Vec<PredictionEntry>> = serde_json::from_str(text)?;
    Ok(raw
        .into_iter()
        .map(|(k, v)| {
            let turns = v
                .into_iter()
                .map(|e| match e {
                    PredictionEntry::Text(t) => t.into(),
                    PredictionEntry::Full(p) => p,
                })
                .collect();
            (k, turns)
        })
        .collect())
}

fn predictions_for<'a>(
    predictions: &'a PredictionSet,
    dialogue: &Dialogue,
) -> Result<&'a [PredictedTurn], EvalError> {
    let p = predictions
        .get(&dialogue.id)
        .ok_or_else(|| EvalError::MissingPrediction(dialogue.id.clone()))?;
    if p.len() != dialogue.turns.len() {
        return Err(EvalError::AlignmentMismatch {
            dialogue_id: dialogue.id.clone(),
            predicted: p.len(),
            expected: dialogue.turns.len(),
        });
    }
    Ok(p)
}

/// BLEU over every turn with a non-empty reference.
pub fn compute_bleu(predictions: &PredictionSet, dialogues: &[Dialogue]) -> Result<f64, EvalError> {
    let mut pairs = Vec::new();
    for d in dialogues {
        let p = predictions_for(predictions, d)?;
        for (pred, gold) in p.iter().zip(&d.turns) {
            if !gold.system_delex.trim().is_empty() {
                pairs.push((pred.response.as_str(), gold.system_delex.as_str()));
            }
        }
    }
    Ok(corpus_bleu(pairs))
}

/// Per-dialogue, per-domain outcome.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DomainOutcome {
    pub informed: bool,
    pub success: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DialogueOutcome {
    pub dialogue_id: String,
    pub inform: bool,
    pub success: bool,
    pub domains: BTreeMap<Domain, DomainOutcome>,
}

/// Domains whose answers have no entity identity to verify.
fn is_identityless(d: Domain) -> bool {
    matches!(d, Domain::Taxi | Domain::Police | Domain::Hospital | Domain::Bus)
}

const OFFER_ATTRIBUTES: [&str; 3] = ["name", "trainid", "reference"];

/// Entities matching `constraints`, keyed by identity.
fn venue_ids(db: &Database, constraints: &SlotMap) -> Vec<String> {
    db.query(constraints)
        .map(|hits| {
            hits.into_iter()
                .filter_map(|e| e.get(&db.identity).map(str::to_string))
                .collect()
        })
        .unwrap_or_default()
}

/// Inform and success for one dialogue against its goal.
pub fn score_dialogue(
    turns: &[PredictedTurn],
    dialogue: &Dialogue,
    goal: &Goal,
    databases: &BTreeMap<Domain, Database>,
    vocab: &PlaceholderVocab,
) -> DialogueOutcome {
    let mut offered: BTreeMap<Domain, Option<SlotMap>> = BTreeMap::new();
    let mut provided: HashSet<(Domain, String)> = HashSet::new();
    for (pred, gold) in turns.iter().zip(&dialogue.turns) {
        for (domain, attr) in vocab.mentions(&pred.response, gold.domain) {
            if !goal.domains.contains_key(&domain) {
                continue;
            }
            if OFFER_ATTRIBUTES.contains(&attr.as_str()) || is_identityless(domain) {
                let constraints = pred
                    .state
                    .as_ref()
                    .map(|s| s.get(&domain).cloned().unwrap_or_default());
                offered.insert(domain, constraints);
            }
            provided.insert((domain, attr));
        }
    }

    let mut outcome = DialogueOutcome {
        dialogue_id: dialogue.id.clone(),
        ..DialogueOutcome::default()
    };
    for (domain, g) in &goal.domains {
        let informed = match offered.get(domain) {
            None => false,
            Some(_) if is_identityless(*domain) => true,
            Some(constraints) => match databases.get(domain) {
                None => true,
                Some(db) => {
                    let goal_venues = venue_ids(db, &g.informable);
                    let predicted = constraints.as_ref().unwrap_or(&g.informable);
                    venue_ids(db, predicted)
                        .first()
                        .is_some_and(|v| goal_venues.contains(v))
                }
            },
        };
        let success = informed
            && g.requestable
                .iter()
                .all(|r| provided.contains(&(*domain, r.clone())) || ref_alias(&provided, *domain, r));
        outcome.domains.insert(*domain, DomainOutcome { informed, success });
    }
    outcome.inform = !outcome.domains.is_empty() && outcome.domains.values().all(|o| o.informed);
    outcome.success = outcome.inform && outcome.domains.values().all(|o| o.success);
    outcome
}

fn ref_alias(provided: &HashSet<(Domain, String)>, domain: Domain, requested: &str) -> bool {
    requested == "reference" && provided.contains(&(domain, "ref".to_string()))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DomainMetrics {
    pub dialogues: usize,
    pub turns: usize,
    pub inform: f64,
    pub success: f64,
    pub bleu: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub dialogues: usize,
    pub turns: usize,
    pub inform: f64,
    pub success: f64,
    pub bleu: f64,
    pub combined: f64,
    pub cbe: f64,
    pub uniq_words: usize,
    pub uniq_trigrams: usize,
    pub per_domain: BTreeMap<Domain, DomainMetrics>,
    /// Per-domain rates aggregated with [`DOMAIN_WEIGHTS`].
    pub weighted_inform: f64,
    pub weighted_success: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub outcomes: Vec<DialogueOutcome>,
}

/// `(inform + success) / 2 + bleu`, unrounded.
pub fn compute_combined(inform: f64, success: f64, bleu: f64) -> f64 {
    (inform + success) / 2.0 + bleu
}

/// Rounds half-up to one decimal; values a hair below a tie due to binary
/// representation (97.65 stored as 97.6499…) round up.
pub fn round1(x: f64) -> f64 {
    ((x * 10.0) + 0.5 + 1e-9).floor() / 10.0
}

/// Conditional bigram entropy `H(w2 | w1)` over per-response token streams.
pub fn compute_cbe<S: AsRef<str>>(responses: &[S]) -> Result<f64, EvalError> {
    let mut bigrams: BTreeMap<(String, String), usize> = BTreeMap::new();
    let mut firsts: BTreeMap<String, usize> = BTreeMap::new();
    let mut tokens_seen = 0;
    for r in responses {
        let toks = tokenize(r.as_ref());
        tokens_seen += toks.len();
        for w in toks.windows(2) {
            *bigrams.entry((w[0].clone(), w[1].clone())).or_insert(0) += 1;
            *firsts.entry(w[0].clone()).or_insert(0) += 1;
        }
    }
    if tokens_seen == 0 {
        return Err(EvalError::EmptyCorpus);
    }
    let total: usize = bigrams.values().sum();
    if total == 0 {
        return Ok(0.0);
    }
    let mut h = 0.0;
    for ((w1, _), c) in &bigrams {
        let joint = *c as f64 / total as f64;
        let cond = *c as f64 / firsts[w1] as f64;
        h -= joint * cond.log(ENTROPY_LOG_BASE);
    }
    Ok(h.max(0.0))
}

/// Distinct tokens and distinct token trigrams.
pub fn lexical_richness<S: AsRef<str>>(responses: &[S]) -> (usize, usize) {
    let mut words = HashSet::new();
    let mut trigrams = HashSet::new();
    for r in responses {
        let toks = tokenize(r.as_ref());
        for w in toks.windows(3) {
            trigrams.insert(w.to_vec());
        }
        words.extend(toks);
    }
    (words.len(), trigrams.len())
}

/// Rates aggregated over domains by dialogue-count weights; domains absent
/// from `rates` are skipped.
pub fn weighted_rate(rates: &BTreeMap<Domain, f64>, weights: &[(Domain, f64)]) -> f64 {
    let (num, den) = weights
        .iter()
        .filter_map(|(d, w)| rates.get(d).map(|r| (r * w, *w)))
        .fold((0.0, 0.0), |(n, d), (a, b)| (n + a, d + b));
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

fn pct(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        100.0 * n as f64 / d as f64
    }
}

/// Scores `predictions` against the annotated dialogues.
pub fn evaluate(
    predictions: &PredictionSet,
    dialogues: &[Dialogue],
    schemas: &Schemas,
    databases: &BTreeMap<Domain, Database>,
    vocab: &PlaceholderVocab,
) -> Result<MetricsReport, EvalError> {
    let mut report = MetricsReport {
        dialogues: dialogues.len(),
        ..MetricsReport::default()
    };
    let mut all_responses = Vec::new();
    let mut per_domain_pairs: BTreeMap<Domain, Vec<(&str, &str)>> = BTreeMap::new();
    let mut per_domain_counts: BTreeMap<Domain, (usize, usize, usize)> = BTreeMap::new();
    let (mut informed, mut succeeded) = (0, 0);
    for d in dialogues {
        let turns = predictions_for(predictions, d)?;
        let goal = goal_of(d, schemas, &vocab.tracked_requestables);
        let outcome = score_dialogue(turns, d, &goal, databases, vocab);
        informed += usize::from(outcome.inform);
        succeeded += usize::from(outcome.success);
        for (dom, o) in &outcome.domains {
            let c = per_domain_counts.entry(*dom).or_default();
            c.0 += 1;
            c.1 += usize::from(o.informed);
            c.2 += usize::from(o.success);
        }
        for (p, g) in turns.iter().zip(&d.turns) {
            if g.system_delex.trim().is_empty() {
                continue;
            }
            report.turns += 1;
            per_domain_pairs
                .entry(g.domain)
                .or_default()
                .push((p.response.as_str(), g.system_delex.as_str()));
            if !p.response.trim().is_empty() {
                all_responses.push(p.response.as_str());
            }
        }
        report.outcomes.push(outcome);
    }
    report.inform = pct(informed, dialogues.len());
    report.success = pct(succeeded, dialogues.len());
    report.bleu = corpus_bleu(per_domain_pairs.values().flatten().copied());
    report.combined = compute_combined(report.inform, report.success, report.bleu);
    report.cbe = compute_cbe(&all_responses).unwrap_or(0.0);
    (report.uniq_words, report.uniq_trigrams) = lexical_richness(&all_responses);

    for (dom, (n, i, s)) in &per_domain_counts {
        let pairs = per_domain_pairs.get(dom).cloned().unwrap_or_default();
        report.per_domain.insert(
            *dom,
            DomainMetrics {
                dialogues: *n,
                turns: pairs.len(),
                inform: pct(*i, *n),
                success: pct(*s, *n),
                bleu: corpus_bleu(pairs),
            },
        );
    }
    let rates = |f: fn(&DomainMetrics) -> f64| {
        report
            .per_domain
            .iter()
            .map(|(d, m)| (*d, f(m)))
            .collect::<BTreeMap<_, _>>()
    };
    report.weighted_inform = weighted_rate(&rates(|m| m.inform), &DOMAIN_WEIGHTS);
    report.weighted_success = weighted_rate(&rates(|m| m.success), &DOMAIN_WEIGHTS);
    Ok(report)
}

impl MetricsReport {
    /// Human-readable summary: overall row plus per-domain breakdown.
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:>8} {:>8} {:>8} {:>9} {:>6} {:>11} {:>13}",
            "BLEU", "Inform", "Success", "Combined", "CBE", "#uniq words", "#uniq 3-grams"
        );
        let _ = writeln!(
            s,
            "{:>8.1} {:>8.1} {:>8.1} {:>9.1} {:>6.2} {:>11} {:>13}",
            round1(self.bleu),
            round1(self.inform),
            round1(self.success),
            round1(self.combined),
            self.cbe,
            self.uniq_words,
            self.uniq_trigrams
        );
        if !self.per_domain.is_empty() {
            let _ = writeln!(s);
            let _ = writeln!(s, "{:<12} {:>9} {:>8} {:>8} {:>8}", "Domain", "Dialogues", "BLEU", "Inform", "Success");
            for (d, m) in &self.per_domain {
                let _ = writeln!(
                    s,
                    "{:<12} {:>9} {:>8.1} {:>8.1} {:>8.1}",
                    d.as_str(),
                    m.dialogues,
                    round1(m.bleu),
                    round1(m.inform),
                    round1(m.success)
                );
            }
        }
        s
    }
}
