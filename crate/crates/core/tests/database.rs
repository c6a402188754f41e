use std::path::PathBuf;
use std::sync::OnceLock;

use proptest::prelude::*;
use tod_core::db::{build_observation, load_database, load_databases, Database, Entity};
use tod_core::model::{default_schemas, time_to_minutes, Domain, SlotMap};

fn db_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/db")
}

fn train_db() -> &'static Database {
    static DB: OnceLock<Database> = OnceLock::new();
    DB.get_or_init(|| {
        let s = default_schemas().unwrap();
        load_database(&db_dir().join("train_db.json"), &s[&Domain::Train]).unwrap()
    })
}

fn slots(entries: &[(&str, &str)]) -> SlotMap {
    entries
        .iter()
        .map(|(k, v)| (k.to_string(), vec![v.to_string()]))
        .collect()
}

#[test]
fn loads_all_tables() {
    let dbs = load_databases(&db_dir(), &default_schemas().unwrap()).unwrap();
    let counts: Vec<(Domain, usize)> = dbs.iter().map(|(d, db)| (*d, db.len())).collect();
    assert!(counts.contains(&(Domain::Restaurant, 110)));
    assert!(counts.contains(&(Domain::Hotel, 33)));
    assert!(counts.contains(&(Domain::Attraction, 79)));
    assert!(counts.contains(&(Domain::Train, 2828)));
    assert!(counts.contains(&(Domain::Police, 1)));
    assert!(!dbs.contains_key(&Domain::Taxi));
}

#[test]
fn norwich_to_cambridge() {
    let db = train_db();
    let c = slots(&[("train-departure", "norwich"), ("train-destination", "cambridge")]);
    let hits = db.query(&c).unwrap();
    assert_eq!(hits.len(), 133);
    let schema = &default_schemas().unwrap()[&Domain::Train];
    let obs = build_observation(&hits, schema, &c);
    assert_eq!(
        obs.render(),
        "train information:\n\
         option number: 133\n\
         question content: arriveby, leaveat, trainid, day, price\n\
         conclusion informations:\n \
         arriveby: 06:35, 07:35, 08:35, 09:35, 21:35, 22:35, 23:35, 24:35\n \
         leaveat: 05:16, 06:16, 07:16, 08:16, 20:16, 21:16, 22:16, 23:16\n"
    );
    assert!(obs.single.is_none());
}

#[test]
fn empty_constraints_return_everything() {
    let db = train_db();
    assert_eq!(db.query(&SlotMap::new()).unwrap().len(), 2828);
}

// Independent linear-scan matcher used as the oracle for the indexed query.
fn oracle(db: &Database, c: &[(&str, &str)]) -> Vec<Entity> {
    db.entities()
        .iter()
        .filter(|e| {
            c.iter().all(|(slot, want)| {
                let attr = slot.split_once('-').unwrap().1;
                let have = e.get(attr).unwrap_or("");
                match attr {
                    "leaveat" => time_to_minutes(have) >= time_to_minutes(want),
                    "arriveby" => time_to_minutes(have) <= time_to_minutes(want),
                    "bookpeople" => true,
                    _ => have == *want,
                }
            })
        })
        .cloned()
        .collect()
}

const STATIONS: [&str; 5] = ["cambridge", "norwich", "ely", "stevenage", "london kings cross"];
const DAYS: [&str; 3] = ["monday", "friday", "sunday"];

fn constraint_strategy() -> impl Strategy<Value = Vec<(&'static str, String)>> {
    (
        proptest::option::of(0usize..5),
        proptest::option::of(0usize..5),
        proptest::option::of(0usize..3),
        proptest::option::of(5u32..23),
        proptest::option::of(6u32..25),
    )
        .prop_map(|(dep, dst, day, leave, arrive)| {
            let mut v = vec![];
            if let Some(i) = dep {
                v.push(("train-departure", STATIONS[i].to_string()));
            }
            if let Some(i) = dst {
                v.push(("train-destination", STATIONS[i].to_string()));
            }
            if let Some(i) = day {
                v.push(("train-day", DAYS[i].to_string()));
            }
            if let Some(h) = leave {
                v.push(("train-leaveat", format!("{h:02}:00")));
            }
            if let Some(h) = arrive {
                v.push(("train-arriveby", format!("{h:02}:00")));
            }
            v
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn indexed_query_equals_linear_scan(c in constraint_strategy()) {
        let db = train_db();
        let pairs: Vec<(&str, &str)> = c.iter().map(|(k, v)| (*k, v.as_str())).collect();
        let got: Vec<Entity> = db.query(&slots(&pairs)).unwrap().into_iter().cloned().collect();
        prop_assert_eq!(got, oracle(db, &pairs));
    }

    #[test]
    fn adding_a_constraint_never_grows_results(c in constraint_strategy(), extra in 0usize..3) {
        let db = train_db();
        let pairs: Vec<(&str, &str)> = c.iter().map(|(k, v)| (*k, v.as_str())).collect();
        let base = db.query(&slots(&pairs)).unwrap().len();
        let mut more = pairs.clone();
        if !more.iter().any(|(k, _)| *k == "train-day") {
            more.push(("train-day", DAYS[extra]));
        }
        prop_assert!(db.query(&slots(&more)).unwrap().len() <= base);
    }

    #[test]
    fn single_iff_one_option(c in constraint_strategy()) {
        let db = train_db();
        let schema = &default_schemas().unwrap()[&Domain::Train];
        let pairs: Vec<(&str, &str)> = c.iter().map(|(k, v)| (*k, v.as_str())).collect();
        let filled = slots(&pairs);
        let hits = db.query(&filled).unwrap();
        let obs = build_observation(&hits, schema, &filled);
        prop_assert_eq!(obs.single.is_some(), obs.option_count == 1);
        for k in filled.keys() {
            let short = k.split_once('-').unwrap().1;
            prop_assert!(!obs.question_content.iter().any(|q| q == short));
        }
    }
}
