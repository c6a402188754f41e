use std::path::PathBuf;
use std::time::Instant;

use tod_core::backend::{OracleBackend, ScriptedBackend};
use tod_core::dataset::load_dialogues;
use tod_core::db::load_databases;
use tod_core::evaluation::{evaluate, PlaceholderVocab};
use tod_core::model::default_schemas;
use tod_core::orchestrator::Pipeline;

fn data(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(rel)
}

fn pipeline() -> Pipeline {
    let schemas = default_schemas().unwrap();
    let dbs = load_databases(&data("db"), &schemas).unwrap();
    Pipeline::new(schemas, dbs)
}

#[test]
fn fixture_shape() {
    let d = load_dialogues(&data("fixtures/test50.json"), &default_schemas().unwrap()).unwrap();
    assert_eq!(d.len(), 50);
    assert_eq!(d.iter().map(|x| x.turns.len()).sum::<usize>(), 245);
    for dialogue in &d {
        assert!(dialogue.turns.last().unwrap().intent.is_end());
    }
}

#[test]
fn oracle_upper_bound_on_fixture() {
    let p = pipeline();
    let dialogues = load_dialogues(&data("fixtures/test50.json"), &p.schemas).unwrap();
    let start = Instant::now();
    let run = p.run_corpus(&dialogues, &OracleBackend::new(&dialogues), 2);
    let report = evaluate(&run.prediction_set(), &dialogues, &p.schemas, &p.databases, PlaceholderVocab::bundled()).unwrap();
    eprintln!("{}", report.table());
    for t in &run.transcripts {
        for f in &t.failures {
            eprintln!("{} {:?}", t.dialogue_id, f);
        }
    }
    for o in &report.outcomes {
        assert!(!o.success || o.inform, "{}", o.dialogue_id);
        if !o.success {
            eprintln!("miss {:?}", o);
        }
    }
    assert_eq!(run.failure_count(), 0);
    assert!(report.inform >= 95.0, "inform {}", report.inform);
    assert!(report.success >= 90.0, "success {}", report.success);
    assert!(start.elapsed().as_secs() < 30);
}

#[test]
fn parallelism_does_not_change_predictions() {
    let p = pipeline();
    let dialogues = load_dialogues(&data("fixtures/test50.json"), &p.schemas).unwrap();
    let oracle = OracleBackend::new(&dialogues);
    let a = p.run_corpus(&dialogues, &oracle, 1);
    let b = p.run_corpus(&dialogues, &oracle, 8);
    assert_eq!(
        serde_json::to_string(&a.predictions).unwrap(),
        serde_json::to_string(&b.predictions).unwrap()
    );
    let mut reversed = dialogues.clone();
    reversed.reverse();
    assert_eq!(p.run_corpus(&reversed, &oracle, 1).predictions, a.predictions);
}

#[test]
fn scripted_corpus_of_a_thousand_dialogues() {
    let p = pipeline();
    let base = load_dialogues(&data("fixtures/test50.json"), &p.schemas).unwrap();
    let corpus: Vec<_> = (0..20)
        .flat_map(|i| {
            base.iter().map(move |d| {
                let mut d = d.clone();
                d.id = format!("{i}-{}", d.id);
                d
            })
        })
        .collect();
    assert_eq!(corpus.len(), 1000);
    let backend = ScriptedBackend::new()
        .when_contains("choose the right tool", "Action: find_train\nFinish!")
        .when_contains(
            "extract the required tool parameters",
            "Parameters: {\"train-departure\": \"norwich\", \"train-destination\": \"cambridge\"}\nInformation: []\nFinish!",
        )
        .otherwise("I have [train_choice] options. When would you like to leave?");
    let start = Instant::now();
    let run = p.run_corpus(&corpus, &backend, 4);
    assert_eq!(run.predictions.len(), 1000);
    assert_eq!(run.failure_count(), 0);
    assert!(start.elapsed().as_secs() < 60, "{:?}", start.elapsed());
}
