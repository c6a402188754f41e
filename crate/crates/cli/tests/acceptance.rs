//! Acceptance suite: one PASS/FAIL line per criterion, with timings.
//!
//! Run with `cargo test -p tod-cli --test acceptance -- --nocapture`.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tod_cli::commands::eval::{cmd_eval, EvalOptions};
use tod_cli::config::RunConfig;
use tod_core::backend::{BackendDescriptor, HttpConfig, OracleBackend};
use tod_core::datagen::{
    adapt_distribution, distribution_report, filter_domain, filter_jsonl, write_dpo_jsonl, AgentKind,
    CategoryDistribution, CategoryKey, PreferencePair, Provenance, SftExample,
};
use tod_core::dataset::load_dialogues;
use tod_core::db::{build_observation, load_database, load_databases, Database, Entity};
use tod_core::evaluation::{compute_cbe, compute_combined, corpus_bleu, evaluate, round1, MetricsReport, PlaceholderVocab};
use tod_core::intent::{default_catalog, parse_intent_completion, render_intent_target};
use tod_core::model::{default_schemas, time_to_minutes, MatchRule, Normalizer, DONTCARE};
use tod_core::orchestrator::Pipeline;
use tod_core::slot::{parse_slot_completion, render_slot_target};
use tod_core::{Domain, SlotMap, SlotSchema};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

struct Outcome {
    id: u32,
    name: &'static str,
    failures: Vec<String>,
    elapsed: Duration,
    budget: Duration,
    note: String,
}

impl Outcome {
    fn passed(&self) -> bool {
        self.failures.is_empty() && self.elapsed <= self.budget
    }

    fn line(&self) -> String {
        let status = if self.passed() { "PASS" } else { "FAIL" };
        let mut s = format!(
            "criterion {} [{}] {status} ({:.1} ms, budget {} ms)",
            self.id,
            self.name,
            self.elapsed.as_secs_f64() * 1e3,
            self.budget.as_millis()
        );
        if !self.note.is_empty() {
            s.push_str(&format!(" {}", self.note));
        }
        for f in &self.failures {
            s.push_str(&format!("\n    - {f}"));
        }
        if self.elapsed > self.budget {
            s.push_str("\n    - over the runtime budget");
        }
        s
    }
}

/// Collects failed checks without stopping at the first one.
#[derive(Default)]
struct Checks(Vec<String>);

impl Checks {
    fn check(&mut self, ok: bool, what: impl Into<String>) {
        if !ok {
            self.0.push(what.into());
        }
    }
}

fn timed(id: u32, name: &'static str, budget_ms: u64, f: impl FnOnce(&mut Checks) -> String) -> Outcome {
    let mut checks = Checks::default();
    let start = Instant::now();
    let note = f(&mut checks);
    Outcome {
        id,
        name,
        failures: checks.0,
        elapsed: start.elapsed(),
        budget: Duration::from_millis(budget_ms),
        note,
    }
}

fn criterion_1() -> Outcome {
    timed(1, "combined formula", 1, |c| {
        let rows = [((92.4, 82.8, 18.7), 106.3), ((90.3, 75.4, 14.8), 97.7)];
        for ((i, s, b), want) in rows {
            let got = round1(compute_combined(i, s, b));
            c.check(got == want, format!("({i}, {s}, {b}) gave {got}, expected {want}"));
        }
        String::new()
    })
}

fn criterion_2() -> Outcome {
    let schemas = default_schemas().unwrap();
    let schema = &schemas[&Domain::Train];
    let load = Instant::now();
    let db = load_database(&root().join("data/db/train_db.json"), schema).unwrap();
    let load_ms = load.elapsed().as_secs_f64() * 1e3;
    timed(2, "db fidelity", 100, |c| {
        let filled: SlotMap = [
            ("train-departure".to_string(), vec!["norwich".to_string()]),
            ("train-destination".to_string(), vec!["cambridge".to_string()]),
        ]
        .into_iter()
        .collect();
        let hits = db.query(&filled).unwrap();
        c.check(hits.len() == 133, format!("{} entities instead of 133", hits.len()));
        let obs = build_observation(&hits, schema, &filled);
        let leave = obs.conclusions.get("leaveat").map(|s| s.shown.join(", ")).unwrap_or_default();
        c.check(
            leave == "05:16, 06:16, 07:16, 08:16, 20:16, 21:16, 22:16, 23:16",
            format!("leaveat summary was `{leave}`"),
        );
        format!("(table load {load_ms:.0} ms, not counted)")
    })
}

fn criterion_3() -> Outcome {
    timed(3, "oracle upper bound", 30_000, |c| {
        let schemas = default_schemas().unwrap();
        let dbs = load_databases(&root().join("data/db"), &schemas).unwrap();
        let dialogues = load_dialogues(&root().join("data/fixtures/test50.json"), &schemas).unwrap();
        c.check(dialogues.len() == 50, format!("fixture has {} dialogues", dialogues.len()));
        let pipeline = Pipeline::new(schemas, dbs);
        let oracle = OracleBackend::new(&dialogues);
        let run = pipeline.run_corpus(&dialogues, &oracle, 4);
        let report = evaluate(
            &run.prediction_set(),
            &dialogues,
            &pipeline.schemas,
            &pipeline.databases,
            PlaceholderVocab::bundled(),
        )
        .unwrap();
        c.check(report.inform >= 95.0, format!("inform {}", report.inform));
        c.check(report.success >= 90.0, format!("success {}", report.success));
        for o in &report.outcomes {
            c.check(!o.success || o.inform, format!("{}: success without inform", o.dialogue_id));
        }
        format!(
            "(inform {:.1}, success {:.1}, framework failures {})",
            report.inform,
            report.success,
            run.failure_count()
        )
    })
}

const FIVE: [Domain; 5] = [Domain::Attraction, Domain::Hotel, Domain::Restaurant, Domain::Taxi, Domain::Train];

fn gold_intent(domain: Domain, i: usize) -> SftExample {
    SftExample {
        agent: AgentKind::Intent,
        domain,
        prompt: format!("Question: request {i} about {domain}"),
        target: render_intent_target(&format!("find_{domain}")),
        dialogue_id: format!("{domain}-{i}"),
        turn_index: 0,
        context_values: vec![],
    }
}

fn criterion_4() -> Outcome {
    timed(4, "distribution adaptation", 5_000, |c| {
        let schemas = default_schemas().unwrap();
        let pool: Vec<SftExample> = FIVE.iter().flat_map(|d| (0..40).map(move |i| gold_intent(*d, i))).collect();
        let sft = CategoryDistribution::from_labels(pool.iter().map(|e| e.domain.as_str()));
        let observed: Vec<PreferencePair> = (0..10)
            .map(|i| PreferencePair {
                prompt: format!("Question: observed {i}"),
                chosen: render_intent_target("find_hotel"),
                rejected: render_intent_target("find_train"),
                domain: Domain::Hotel,
                agent: AgentKind::Intent,
                provenance: Provenance::ObservedBadCase,
            })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let mut bytes = Vec::new();
        let mut tv = f64::NAN;
        for run in 0..2 {
            let out = adapt_distribution(&observed, &sft, &pool, &schemas, 2024, CategoryKey::Domain).unwrap();
            c.check(
                observed.iter().all(|p| out.contains(p)),
                "an observed pair was dropped",
            );
            let mut counts: BTreeMap<Domain, usize> = BTreeMap::new();
            for p in &out {
                *counts.entry(p.domain).or_default() += 1;
            }
            c.check(out.len() == 50, format!("{} pairs instead of 50", out.len()));
            c.check(counts.values().all(|n| *n == 10), format!("per-domain counts {counts:?}"));
            tv = distribution_report(&out, &sft, CategoryKey::Domain).tv_distance;
            c.check(tv <= 0.02, format!("TV distance {tv}"));
            let path = dir.path().join(format!("run{run}.jsonl"));
            write_dpo_jsonl(&path, &out).unwrap();
            bytes.push(std::fs::read(path).unwrap());
        }
        c.check(bytes[0] == bytes[1], "two runs with one seed differ");
        format!("(TV {tv:.4})")
    })
}

fn hand_bleu() -> f64 {
    // clipped matches / candidate n-grams over both sentence pairs
    let p = [9.0 / 10.0, 5.0 / 8.0, 2.0 / 6.0, 0.1 / 4.0];
    let log_mean = p.iter().map(|x: &f64| x.ln()).sum::<f64>() / 4.0;
    let brevity = (1.0_f64 - 11.0 / 10.0).exp();
    100.0 * brevity * log_mean.exp()
}

fn criterion_5() -> Outcome {
    timed(5, "metric oracles", 1_000, |c| {
        let bleu = corpus_bleu([
            ("the cat sat on the mat", "the cat is on the mat"),
            ("there is a dog", "there is a big dog"),
        ]);
        c.check((bleu - hand_bleu()).abs() < 1e-6, format!("BLEU {bleu} vs hand {}", hand_bleu()));
        let cbe = compute_cbe(&["a b a c"]).unwrap();
        c.check(cbe == 1.0, format!("CBE of \"a b a c\" is {cbe}, expected exactly 1.0"));
        let same = corpus_bleu([("there is a big dog", "there is a big dog"), ("the cat is on the mat", "the cat is on the mat")]);
        c.check(same == 100.0, format!("identity BLEU {same}"));
        let disjoint = corpus_bleu([("alpha beta gamma delta", "one two three four")]);
        c.check(disjoint == 0.0, format!("disjoint BLEU {disjoint}"));
        format!("(BLEU {bleu:.6}, CBE {cbe:.6})")
    })
}

fn small_values(rule: MatchRule, closed: Option<&Vec<String>>) -> Vec<String> {
    match (rule, closed) {
        (MatchRule::AtLeast | MatchRule::AtMost, _) => {
            ["06:00", "09:30", "12:15", "17:45", "21:00"].map(str::to_string).to_vec()
        }
        (_, Some(vals)) => vals.iter().filter(|v| *v != DONTCARE).take(3).cloned().collect(),
        _ => ["v1", "v2", "v3"].map(str::to_string).to_vec(),
    }
}

/// Linear scan with the matching rules written out independently.
fn brute_force(entities: &[Entity], constraints: &[(String, Vec<String>)], schema: &SlotSchema) -> Vec<Entity> {
    entities
        .iter()
        .filter(|e| {
            constraints.iter().all(|(slot, wanted)| {
                let spec = schema.informable.iter().find(|s| s.name == *slot).unwrap();
                if spec.booking || wanted.iter().any(|w| w == DONTCARE) {
                    return true;
                }
                let attr = slot.split_once('-').unwrap().1;
                let Some(have) = e.get(attr) else { return false };
                wanted.iter().any(|w| match spec.match_rule {
                    MatchRule::Equal => have == w,
                    MatchRule::AtLeast => time_to_minutes(have).unwrap() >= time_to_minutes(w).unwrap(),
                    MatchRule::AtMost => time_to_minutes(have).unwrap() <= time_to_minutes(w).unwrap(),
                })
            })
        })
        .cloned()
        .collect()
}

fn criterion_6() -> Outcome {
    timed(6, "query oracle equivalence", 10_000, |c| {
        let schemas = default_schemas().unwrap();
        let domains = [Domain::Restaurant, Domain::Hotel, Domain::Attraction, Domain::Train];
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (mut samples, mut nonempty) = (0, 0);
        for case in 0..1000 {
            let schema = &schemas[domains.choose(&mut rng).unwrap()];
            let filters: Vec<_> = schema.informable.iter().filter(|s| !s.booking).collect();
            let n = rng.random_range(0..25);
            let entities: Vec<Entity> = (0..n)
                .map(|i| {
                    let mut e: Entity = [(schema.identity.clone(), format!("id{i}"))].into_iter().collect();
                    for spec in &filters {
                        if rng.random_bool(0.9) {
                            let vals = small_values(spec.match_rule, spec.values.as_ref());
                            e.insert(spec.short_name().to_string(), vals.choose(&mut rng).unwrap().clone());
                        }
                    }
                    e
                })
                .collect();
            let db = Database::from_entities(schema, entities.clone()).unwrap();
            let mut constraints: Vec<(String, Vec<String>)> = Vec::new();
            for spec in &schema.informable {
                if !rng.random_bool(0.35) {
                    continue;
                }
                let vals = small_values(spec.match_rule, spec.values.as_ref());
                let picked: Vec<String> = if rng.random_bool(0.1) {
                    vec![DONTCARE.to_string()]
                } else if vals.is_empty() {
                    vec!["2".to_string()]
                } else {
                    (0..rng.random_range(1..=2)).map(|_| vals.choose(&mut rng).unwrap().clone()).collect()
                };
                constraints.push((spec.name.clone(), picked));
            }
            let map: SlotMap = constraints.iter().cloned().collect();
            let got: Vec<Entity> = db.query(&map).unwrap().into_iter().cloned().collect();
            let want = brute_force(&entities, &constraints, schema);
            c.check(got == want, format!("case {case}: indexed {} vs scan {}", got.len(), want.len()));
            nonempty += usize::from(!want.is_empty());
            samples += 1;

            let unused: Vec<_> = filters.iter().filter(|s| !map.contains(&s.name)).collect();
            if let Some(spec) = unused.choose(&mut rng) {
                let vals = small_values(spec.match_rule, spec.values.as_ref());
                if let Some(v) = vals.choose(&mut rng) {
                    let mut more = map.clone();
                    more.insert(spec.name.clone(), vec![v.clone()]);
                    let narrowed = db.query(&more).unwrap().len();
                    c.check(narrowed <= got.len(), format!("case {case}: extra constraint grew {} -> {narrowed}", got.len()));
                }
            }
        }
        format!("({samples} databases, {nonempty} with hits)")
    })
}

fn random_text(rng: &mut impl Rng) -> String {
    const PIECES: [&str; 22] = [
        "Action:", "Parameters:", "Information:", "Finish!", "Question:", "Last Tool:", "{", "}", "[", "]", "\"",
        ":", ",", "\n", " ", "null", "find_hotel", "restaurant-area", "ü", "\u{0}", "'", "-",
    ];
    let n = rng.random_range(0..40);
    (0..n)
        .map(|_| {
            if rng.random_bool(0.2) {
                char::from_u32(rng.random_range(0..0x2FFF)).unwrap_or('?').to_string()
            } else {
                PIECES.choose(rng).unwrap().to_string()
            }
        })
        .collect()
}

fn mutate(text: &str, rng: &mut impl Rng) -> String {
    let mut chars: Vec<char> = text.chars().collect();
    for _ in 0..rng.random_range(1..4) {
        if chars.is_empty() {
            break;
        }
        let i = rng.random_range(0..chars.len());
        match rng.random_range(0..3) {
            0 => {
                chars.remove(i);
            }
            1 => chars.insert(i, ['"', '{', ']', '\n', 'x'][rng.random_range(0..5)]),
            _ => chars.truncate(i),
        }
    }
    chars.into_iter().collect()
}

fn open_value(rng: &mut impl Rng, norm: &Normalizer) -> String {
    loop {
        let len = rng.random_range(3..9);
        let word: String = (0..len).map(|_| char::from(b'a' + rng.random_range(0..26u8))).collect();
        let v = if rng.random_bool(0.3) { format!("{word} street") } else { word };
        if norm.normalize_text(&v) == v && v != DONTCARE {
            return v;
        }
    }
}

fn criterion_7() -> Outcome {
    timed(7, "parser totality", 10_000, |c| {
        let schemas = default_schemas().unwrap();
        let catalog = default_catalog();
        let norm = Normalizer::bundled();
        let domains = [Domain::Restaurant, Domain::Hotel, Domain::Attraction, Domain::Train, Domain::Taxi];
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let crashes = AtomicUsize::new(0);
        let mut round_trips = 0;
        for case in 0..10_000 {
            let schema = &schemas[domains.choose(&mut rng).unwrap()];
            let tool = catalog.choose(&mut rng).unwrap();
            let intent_target = render_intent_target(&tool.name);
            match parse_intent_completion(&intent_target, &catalog) {
                Ok(p) => c.check(p.action == tool.name, format!("case {case}: intent {} came back as {}", tool.name, p.action)),
                Err(e) => c.check(false, format!("case {case}: gold intent target rejected: {e}")),
            }

            let mut params = SlotMap::new();
            for spec in &schema.informable {
                if rng.random_bool(0.3) {
                    let values: Vec<String> = match &spec.values {
                        Some(closed) => {
                            let pool: Vec<&String> = closed.iter().filter(|v| *v != DONTCARE).collect();
                            let mut picked: Vec<String> = Vec::new();
                            for _ in 0..rng.random_range(1..=2) {
                                let v = (*pool.choose(&mut rng).unwrap()).clone();
                                if !picked.contains(&v) {
                                    picked.push(v);
                                }
                            }
                            picked
                        }
                        None if matches!(spec.match_rule, MatchRule::AtLeast | MatchRule::AtMost) => {
                            vec![format!("{:02}:{:02}", rng.random_range(0..24), rng.random_range(0..60))]
                        }
                        None => vec![open_value(&mut rng, norm)],
                    };
                    params.insert(spec.name.clone(), values);
                }
            }
            let info: Vec<String> = schema
                .requestable
                .iter()
                .map(|r| r.name.clone())
                .filter(|n| !params.keys().any(|k| k.ends_with(&format!("-{n}"))))
                .filter(|_| rng.random_bool(0.25))
                .collect();
            let slot_target = render_slot_target(&params, &info);
            match parse_slot_completion(&slot_target, schema) {
                Ok(r) => {
                    c.check(
                        r.parameters == params && r.information == info && r.dropped.is_empty(),
                        format!("case {case}: slot round trip changed {slot_target:?}"),
                    );
                    round_trips += 1;
                }
                Err(e) => c.check(false, format!("case {case}: gold slot target rejected: {e}")),
            }

            for text in [random_text(&mut rng), mutate(&intent_target, &mut rng), mutate(&slot_target, &mut rng)] {
                let ok = std::panic::catch_unwind(|| {
                    let _ = parse_intent_completion(&text, &catalog);
                    let _ = parse_slot_completion(&text, schema);
                })
                .is_ok();
                if !ok {
                    crashes.fetch_add(1, Ordering::Relaxed);
                }
            }
        }
        let crashes = crashes.into_inner();
        c.check(crashes == 0, format!("{crashes} parser panics"));
        c.0.truncate(20);
        format!("({round_trips} slot round trips, 30000 fuzzed inputs)")
    })
}

fn criterion_8() -> Outcome {
    timed(8, "zero-shot filter", 2_000, |c| {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let items: Vec<SftExample> = (0..5000).map(|i| gold_intent(*FIVE.choose(&mut rng).unwrap(), i)).collect();
        let count = |v: &[SftExample]| {
            let mut m: BTreeMap<Domain, usize> = BTreeMap::new();
            for e in v {
                *m.entry(e.domain).or_default() += 1;
            }
            m
        };
        let before = count(&items);
        let text: String = items
            .iter()
            .map(|e| format!("{}\n", serde_json::json!({"prompt": e.prompt, "completion": e.target, "domain": e.domain, "agent": e.agent})))
            .collect();
        for removed in FIVE {
            let once = filter_domain(&items, removed);
            let after = count(&once);
            c.check(!after.contains_key(&removed), format!("{removed} survived"));
            for (d, n) in &before {
                if *d != removed {
                    c.check(after.get(d) == Some(n), format!("{d} count changed removing {removed}"));
                }
            }
            c.check(filter_domain(&once, removed) == once, format!("not idempotent for {removed}"));

            let (kept, n) = filter_jsonl(&text, removed);
            c.check(n == before[&removed], format!("jsonl removed {n} {removed} lines"));
            c.check(kept.lines().count() == items.len() - n, "jsonl kept a wrong number of lines");
            c.check(filter_jsonl(&kept, removed) == (kept.clone(), 0), "jsonl filter not idempotent");
        }
        String::new()
    })
}

/// Minimal chat-completions endpoint answering each stage plausibly.
fn serve_chat_completions() -> (String, Arc<AtomicUsize>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = hits.clone();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(stream) = stream else { return };
            let counter = counter.clone();
            std::thread::spawn(move || {
                let mut writer = stream.try_clone().unwrap();
                let mut reader = BufReader::new(stream);
                loop {
                    let mut len = 0usize;
                    let mut first = true;
                    loop {
                        let mut line = String::new();
                        if reader.read_line(&mut line).unwrap_or(0) == 0 {
                            return;
                        }
                        if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                            len = v.trim().parse().unwrap_or(0);
                        }
                        if line == "\r\n" && !first {
                            break;
                        }
                        first = false;
                    }
                    let mut body = vec![0; len];
                    if reader.read_exact(&mut body).is_err() {
                        return;
                    }
                    counter.fetch_add(1, Ordering::Relaxed);
                    let req: serde_json::Value = serde_json::from_slice(&body).unwrap_or_default();
                    let prompt = req["messages"][0]["content"].as_str().unwrap_or("").to_string();
                    let question = prompt.lines().rev().find_map(|l| l.strip_prefix("Question:")).unwrap_or("").to_lowercase();
                    let content = if prompt.contains("choose the right tool") {
                        if question.contains("bye") || question.contains("thank") {
                            "Action: other\nFinish!".to_string()
                        } else {
                            "Action: find_restaurant\nFinish!".to_string()
                        }
                    } else if prompt.contains("extract the required tool parameters") {
                        "Parameters: {\"restaurant-area\": [\"centre\"]}\nInformation: [\"phone\"]\nFinish!".to_string()
                    } else {
                        "I have [restaurant_choice] options, [restaurant_name] is one. The phone is [restaurant_phone].".to_string()
                    };
                    let reply = serde_json::json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string();
                    let head = format!(
                        "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n",
                        reply.len()
                    );
                    if writer.write_all(head.as_bytes()).and_then(|_| writer.write_all(reply.as_bytes())).is_err() {
                        return;
                    }
                }
            });
        }
    });
    (url, hits)
}

fn criterion_9() -> Outcome {
    timed(9, "live endpoint end-to-end", 60_000, |c| {
        let _ = writeln!(
            std::io::stderr(),
            "  note: absolute scores of fine-tuned models are NOT reproducible here; this run only proves the \
             endpoint path end to end, and criteria 1-8 stand in with oracle- and property-based checks."
        );
        let (url, hits) = serve_chat_completions();
        let out = tempfile::tempdir().unwrap();
        let mut http = HttpConfig::new(url);
        http.auth_env = String::new();
        http.model_id = "stub".into();
        let mut config = RunConfig::default();
        config.data.test = Some(root().join("data/fixtures/test50.json"));
        config.data.databases = root().join("data/db");
        config.output_dir = out.path().to_path_buf();
        config.backend = BackendDescriptor::Http(http);
        c.check(config.validate().is_ok(), "config did not validate");
        match cmd_eval(&config, &EvalOptions::default()) {
            Ok(outcome) => {
                let text = std::fs::read_to_string(out.path().join("metrics.json")).unwrap_or_default();
                match serde_json::from_str::<MetricsReport>(&text) {
                    Ok(r) => {
                        c.check(r.dialogues == 50, format!("{} dialogues scored", r.dialogues));
                        c.check(r.success <= r.inform, "success above inform");
                        for (name, v) in [("inform", r.inform), ("success", r.success), ("bleu", r.bleu)] {
                            c.check((0.0..=100.0).contains(&v), format!("{name} out of range: {v}"));
                        }
                        c.check(r.cbe.is_finite() && r.cbe >= 0.0, "cbe not finite");
                    }
                    Err(e) => c.check(false, format!("metrics.json is not a MetricsReport: {e}")),
                }
                c.check(outcome.failed_turns == 0, format!("{} turns failed", outcome.failed_turns));
                format!("({} requests served)", hits.load(Ordering::Relaxed))
            }
            Err(e) => {
                c.check(false, format!("cmd_eval failed: {e}"));
                String::new()
            }
        }
    })
}

/// Criterion 5 asks for CBE("a b a c") = 1.0, but the conditional bigram
/// entropy of that stream is 2/3 bit: `b` is followed by `a`, so only `a`
/// has two successors and it carries weight 2/3. The implementation keeps
/// the entropy definition; this check stays red.
const EXPECTED_RED: &[(u32, &str)] = &[(5, "CBE of \"a b a c\" is 0.6666666666666666, expected exactly 1.0")];

#[test]
fn acceptance_criteria() {
    let outcomes = vec![
        criterion_1(),
        criterion_2(),
        criterion_3(),
        criterion_4(),
        criterion_5(),
        criterion_6(),
        criterion_7(),
        criterion_8(),
        criterion_9(),
    ];
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err);
    for o in &outcomes {
        let _ = writeln!(err, "{}", o.line());
    }
    let passed = outcomes.iter().filter(|o| o.passed()).count();
    let _ = writeln!(err, "{passed}/{} criteria pass", outcomes.len());
    drop(err);

    let mut unexpected = Vec::new();
    for o in &outcomes {
        let expected: Vec<&str> = EXPECTED_RED.iter().filter(|(id, _)| *id == o.id).map(|(_, m)| *m).collect();
        let within_budget = o.elapsed <= o.budget;
        let only_expected = o.failures.iter().all(|f| expected.contains(&f.as_str()));
        if !within_budget || !only_expected {
            unexpected.push(o.id);
        }
    }
    assert!(unexpected.is_empty(), "criteria failing beyond the documented red check: {unexpected:?}");
}
