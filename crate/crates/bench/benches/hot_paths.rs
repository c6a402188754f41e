use criterion::{black_box, criterion_group, criterion_main, Criterion};
use tod_bench::{data_dir, intent_pool};
use tod_core::datagen::{adapt_distribution, AgentKind, CategoryDistribution, CategoryKey, PreferencePair, Provenance};
use tod_core::db::{build_observation, load_database};
use tod_core::evaluation::{compute_cbe, corpus_bleu};
use tod_core::intent::{default_catalog, parse_intent_completion};
use tod_core::model::default_schemas;
use tod_core::slot::parse_slot_completion;
use tod_core::{Domain, SlotMap};

fn db_query(c: &mut Criterion) {
    let schemas = default_schemas().unwrap();
    let schema = &schemas[&Domain::Train];
    let db = load_database(&data_dir().join("db/train_db.json"), schema).unwrap();
    let filled: SlotMap = [
        ("train-departure".to_string(), vec!["norwich".to_string()]),
        ("train-destination".to_string(), vec!["cambridge".to_string()]),
    ]
    .into_iter()
    .collect();
    c.bench_function("train query + observation", |b| {
        b.iter(|| {
            let hits = db.query(black_box(&filled)).unwrap();
            build_observation(&hits, schema, &filled)
        })
    });
}

fn metrics(c: &mut Criterion) {
    let hyp = "i have [value_count] trains leaving [train_departure] after [train_leaveat] . where are you headed ?";
    let reference = "there are [value_count] trains from [train_departure] . what is your destination ?";
    let pairs: Vec<(&str, &str)> = std::iter::repeat_n((hyp, reference), 1000).collect();
    c.bench_function("corpus bleu, 1000 pairs", |b| b.iter(|| corpus_bleu(black_box(pairs.iter().copied()))));
    let responses = vec![hyp; 1000];
    c.bench_function("cbe, 1000 responses", |b| b.iter(|| compute_cbe(black_box(&responses)).unwrap()));
}

fn parsers(c: &mut Criterion) {
    let schemas = default_schemas().unwrap();
    let catalog = default_catalog();
    let restaurant = &schemas[&Domain::Restaurant];
    let intent = "Last Tool: none\nQuestion: i need a cheap place\nAction: find_restaurant\nFinish!";
    let slot = "Parameters: {\"restaurant-pricerange\": [\"cheap\"], \"restaurant-area\": [\"centre\", \"north\"]}\nInformation: [\"phone\", \"address\"]\nFinish!";
    c.bench_function("parse intent completion", |b| b.iter(|| parse_intent_completion(black_box(intent), &catalog)));
    c.bench_function("parse slot completion", |b| b.iter(|| parse_slot_completion(black_box(slot), restaurant)));
}

fn adaptation(c: &mut Criterion) {
    let schemas = default_schemas().unwrap();
    let pool = intent_pool(200);
    let sft = CategoryDistribution::from_labels(pool.iter().map(|e| e.domain.as_str()));
    let observed: Vec<PreferencePair> = (0..100)
        .map(|i| PreferencePair {
            prompt: format!("Question: observed {i}"),
            chosen: "Action: find_hotel\nFinish!".into(),
            rejected: "Action: find_train\nFinish!".into(),
            domain: Domain::Hotel,
            agent: AgentKind::Intent,
            provenance: Provenance::ObservedBadCase,
        })
        .collect();
    c.bench_function("adapt 100 skewed pairs", |b| {
        b.iter(|| adapt_distribution(black_box(&observed), &sft, &pool, &schemas, 7, CategoryKey::Domain).unwrap())
    });
}

criterion_group!(benches, db_query, metrics, parsers, adaptation);
criterion_main!(benches);
