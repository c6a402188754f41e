//! Per-domain entity databases, rule-based constraint matching and the
//! observation summary handed to the response agent.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::model::{
    short_name, time_to_minutes, Domain, MatchRule, Normalizer, Schemas, SlotMap, SlotSchema,
    DONTCARE,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DbError {
    #[error("database file missing: {0}")]
    FileMissing(String),
    #[error("database file is not a JSON array of objects: {0}")]
    NotAnArray(String),
    #[error("malformed record at index {0}")]
    MalformedRecord(usize),
    #[error("constraint slot `{slot}` does not belong to the {db} database")]
    DomainMismatch { db: Domain, slot: String },
    #[error("taxi requests need both departure and destination")]
    MissingRouteEndpoints,
}

/// Flat attribute → value record.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Entity {
    attrs: IndexMap<String, String>,
}

impl Entity {
    pub fn get(&self, attr: &str) -> Option<&str> {
        self.attrs.get(attr).map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.attrs.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn insert(&mut self, attr: impl Into<String>, value: impl Into<String>) {
        self.attrs.insert(attr.into(), value.into());
    }
}

impl<K: Into<String>, V: Into<String>> FromIterator<(K, V)> for Entity {
    fn from_iter<T: IntoIterator<Item = (K, V)>>(iter: T) -> Self {
        Entity {
            attrs: iter.into_iter().map(|(k, v)| (k.into(), v.into())).collect(),
        }
    }
}

fn attr_key(raw: &str) -> String {
    raw.chars()
        .filter(|c| !c.is_whitespace() && *c != '_')
        .collect::<String>()
        .to_lowercase()
}

fn flatten(v: &Value, norm: &Normalizer) -> Option<String> {
    match v {
        Value::Null => None,
        Value::String(s) => Some(norm.normalize_text(s)),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        Value::Array(items) => Some(
            items
                .iter()
                .filter_map(|i| flatten(i, norm))
                .collect::<Vec<_>>()
                .join(", "),
        ),
        Value::Object(_) => Some(v.to_string()),
    }
}

/// Match rules for one domain, extracted from its schema.
#[derive(Debug, Clone, Default)]
struct Rules {
    slots: HashMap<String, (bool, MatchRule)>,
}

impl Rules {
    fn from_schema(schema: &SlotSchema) -> Self {
        Rules {
            slots: schema
                .informable
                .iter()
                .map(|s| (s.name.clone(), (s.booking, s.match_rule)))
                .collect(),
        }
    }

    /// `None` when the slot does not filter.
    fn rule(&self, slot: &str) -> Option<MatchRule> {
        match self.slots.get(slot) {
            Some((true, _)) => None,
            Some((false, r)) => Some(*r),
            None => Some(MatchRule::Equal),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Database {
    pub domain: Domain,
    pub identity: String,
    entities: Vec<Entity>,
    index: HashMap<String, HashMap<String, Vec<usize>>>,
    rules: Rules,
    /// Hospital and police answer every query with their whole table.
    filterable: bool,
}

impl Database {
    pub fn from_entities(schema: &SlotSchema, entities: Vec<Entity>) -> Result<Self, DbError> {
        let identity = schema.identity.clone();
        let mut index: HashMap<String, HashMap<String, Vec<usize>>> = HashMap::new();
        for (i, e) in entities.iter().enumerate() {
            if e.get(&identity).is_none() {
                return Err(DbError::MalformedRecord(i));
            }
            for (k, v) in e.iter() {
                index
                    .entry(k.to_string())
                    .or_default()
                    .entry(v.to_string())
                    .or_default()
                    .push(i);
            }
        }
        Ok(Database {
            domain: schema.domain,
            identity,
            entities,
            index,
            rules: Rules::from_schema(schema),
            filterable: !matches!(schema.domain, Domain::Hospital | Domain::Police),
        })
    }

    pub fn from_json(text: &str, schema: &SlotSchema) -> Result<Self, DbError> {
        let value: Value =
            serde_json::from_str(text).map_err(|e| DbError::NotAnArray(e.to_string()))?;
        let Value::Array(records) = value else {
            return Err(DbError::NotAnArray(format!("{} db", schema.domain)));
        };
        let norm = Normalizer::bundled();
        let mut entities = Vec::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            let Value::Object(obj) = r else {
                return Err(DbError::MalformedRecord(i));
            };
            entities.push(
                obj.iter()
                    .filter_map(|(k, v)| flatten(v, norm).map(|v| (attr_key(k), v)))
                    .collect(),
            );
        }
        Database::from_entities(schema, entities)
    }

    pub fn entities(&self) -> &[Entity] {
        &self.entities
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn matches(&self, entity: &Entity, constraints: &SlotMap) -> bool {
        !self.filterable || match_with_rules(entity, constraints, &self.rules)
    }

    /// All entities satisfying `constraints`, in file order.
    pub fn query(&self, constraints: &SlotMap) -> Result<Vec<&Entity>, DbError> {
        for slot in constraints.keys() {
            if let Some((d, _)) = slot.split_once('-') {
                if d != self.domain.as_str() {
                    return Err(DbError::DomainMismatch {
                        db: self.domain,
                        slot: slot.to_string(),
                    });
                }
            }
        }
        if !self.filterable {
            return Ok(self.entities.iter().collect());
        }

        let mut candidates: Option<Vec<usize>> = None;
        let mut residual = SlotMap::new();
        let norm = Normalizer::bundled();
        for (slot, values) in constraints.iter() {
            match self.rules.rule(slot) {
                None => continue,
                Some(_) if values.iter().any(|v| v == DONTCARE) => continue,
                Some(MatchRule::Equal) => {
                    let postings = self.index.get(short_name(slot));
                    let mut hits: Vec<usize> = values
                        .iter()
                        .filter_map(|v| postings.and_then(|p| p.get(&norm.normalize_text(v))))
                        .flatten()
                        .copied()
                        .collect();
                    hits.sort_unstable();
                    hits.dedup();
                    candidates = Some(match candidates {
                        None => hits,
                        Some(c) => intersect_sorted(&c, &hits),
                    });
                }
                Some(_) => residual.insert(slot.to_string(), values.to_vec()),
            }
        }
        let out = match candidates {
            Some(c) => c
                .into_iter()
                .map(|i| &self.entities[i])
                .filter(|e| match_with_rules(e, &residual, &self.rules))
                .collect(),
            None => self
                .entities
                .iter()
                .filter(|e| match_with_rules(e, &residual, &self.rules))
                .collect(),
        };
        Ok(out)
    }
}

fn intersect_sorted(a: &[usize], b: &[usize]) -> Vec<usize> {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::with_capacity(a.len().min(b.len()));
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out
}

fn value_matches(rule: MatchRule, entity_value: &str, wanted: &str) -> bool {
    match rule {
        MatchRule::Equal => entity_value == wanted,
        MatchRule::AtLeast | MatchRule::AtMost => {
            match (time_to_minutes(entity_value), time_to_minutes(wanted)) {
                (Some(e), Some(w)) if rule == MatchRule::AtLeast => e >= w,
                (Some(e), Some(w)) => e <= w,
                _ => entity_value == wanted,
            }
        }
    }
}

fn match_with_rules(entity: &Entity, constraints: &SlotMap, rules: &Rules) -> bool {
    let norm = Normalizer::bundled();
    constraints.iter().all(|(slot, values)| {
        let Some(rule) = rules.rule(slot) else {
            return true;
        };
        if values.iter().any(|v| v == DONTCARE) {
            return true;
        }
        let Some(have) = entity.get(short_name(slot)) else {
            return false;
        };
        values
            .iter()
            .any(|v| value_matches(rule, have, &norm.normalize_text(v)))
    })
}

/// Conjunction over constraints; booking-only slots and `dontcare` never filter.
pub fn match_entity(entity: &Entity, constraints: &SlotMap, schema: &SlotSchema) -> bool {
    match_with_rules(entity, constraints, &Rules::from_schema(schema))
}

pub fn load_database(path: &Path, schema: &SlotSchema) -> Result<Database, DbError> {
    let text = std::fs::read_to_string(path)
        .map_err(|_| DbError::FileMissing(path.display().to_string()))?;
    Database::from_json(&text, schema)
}

/// Loads every `<domain>_db.json` under `dir` that holds a record array.
/// Taxi has no entity table and is answered by [`taxi_synthesize`].
pub fn load_databases(dir: &Path, schemas: &Schemas) -> Result<BTreeMap<Domain, Database>, DbError> {
    if !dir.is_dir() {
        return Err(DbError::FileMissing(dir.display().to_string()));
    }
    let mut out = BTreeMap::new();
    for (domain, schema) in schemas {
        if matches!(domain, Domain::Taxi | Domain::Other) {
            continue;
        }
        let path = dir.join(format!("{domain}_db.json"));
        if path.exists() {
            out.insert(*domain, load_database(&path, schema)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValueSummary {
    pub shown: Vec<String>,
    pub truncated: bool,
    pub total_distinct: usize,
}

pub const SUMMARY_LIMIT: usize = 8;

impl ValueSummary {
    /// Distinct values sorted ascending (times by clock order); more than
    /// eight are cut to the first four and last four.
    pub fn from_values<'a>(values: impl IntoIterator<Item = &'a str>) -> Self {
        let mut distinct: Vec<&str> = values.into_iter().collect();
        distinct.sort_by(|a, b| match (time_to_minutes(a), time_to_minutes(b)) {
            (Some(x), Some(y)) => x.cmp(&y),
            _ => a.cmp(b),
        });
        distinct.dedup();
        let total = distinct.len();
        let half = SUMMARY_LIMIT / 2;
        let shown: Vec<String> = if total > SUMMARY_LIMIT {
            distinct[..half]
                .iter()
                .chain(&distinct[total - half..])
                .map(|s| s.to_string())
                .collect()
        } else {
            distinct.iter().map(|s| s.to_string()).collect()
        };
        ValueSummary {
            shown,
            truncated: total > SUMMARY_LIMIT,
            total_distinct: total,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub domain: Domain,
    pub option_count: usize,
    pub question_content: Vec<String>,
    pub conclusions: BTreeMap<String, ValueSummary>,
    /// Distinct-value counts for categorical askable attributes; not rendered.
    #[serde(default)]
    pub spreads: BTreeMap<String, usize>,
    pub single: Option<Entity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub booking_reference: Option<String>,
}

impl Observation {
    pub fn empty(domain: Domain) -> Self {
        Observation {
            domain,
            option_count: 0,
            question_content: vec![],
            conclusions: BTreeMap::new(),
            spreads: BTreeMap::new(),
            single: None,
            booking_reference: None,
        }
    }

    /// The textual block embedded in the response prompt.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} information:", self.domain);
        let _ = writeln!(s, "option number: {}", self.option_count);
        let _ = writeln!(s, "question content: {}", self.question_content.join(", "));
        if !self.conclusions.is_empty() {
            s.push_str("conclusion informations:\n");
            for (attr, summary) in &self.conclusions {
                let _ = writeln!(s, " {}: {}", attr, summary.shown.join(", "));
            }
        }
        if let Some(e) = &self.single {
            s.push_str("option details:\n");
            for (k, v) in e.iter() {
                let _ = writeln!(s, " {k}: {v}");
            }
        }
        if let Some(r) = &self.booking_reference {
            let _ = writeln!(s, "booking reference: {r}");
        }
        s
    }
}

pub fn build_observation(results: &[&Entity], schema: &SlotSchema, filled: &SlotMap) -> Observation {
    let filled_attrs: Vec<&str> = filled.keys().map(short_name).collect();
    let question_content = schema
        .askable
        .iter()
        .filter(|a| !filled_attrs.contains(&a.as_str()))
        .cloned()
        .collect();
    let mut obs = Observation::empty(schema.domain);
    obs.option_count = results.len();
    obs.question_content = question_content;
    if results.len() == 1 {
        obs.single = Some(results[0].clone());
    } else if results.len() > 1 {
        for attr in &schema.ordered {
            let values: Vec<&str> = results.iter().filter_map(|e| e.get(attr)).collect();
            if !values.is_empty() {
                obs.conclusions
                    .insert(attr.clone(), ValueSummary::from_values(values));
            }
        }
        for attr in schema.askable.iter().filter(|a| !schema.ordered.contains(a)) {
            let mut values: Vec<&str> = results.iter().filter_map(|e| e.get(attr)).collect();
            values.sort_unstable();
            values.dedup();
            if !values.is_empty() {
                obs.spreads.insert(attr.clone(), values.len());
            }
        }
    }
    obs
}

/// 64-bit FNV-1a; stable across platforms and releases.
pub fn stable_hash(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

const TAXI_COLORS: [&str; 6] = ["black", "white", "red", "yellow", "blue", "grey"];
const TAXI_TYPES: [&str; 10] = [
    "toyota", "skoda", "bmw", "honda", "ford", "audi", "lexus", "volvo", "volkswagen", "tesla",
];

/// Deterministic stand-in entity for a taxi request.
pub fn taxi_synthesize(constraints: &SlotMap) -> Result<Entity, DbError> {
    let departure = constraints.get("taxi-departure").and_then(|v| v.first());
    let destination = constraints.get("taxi-destination").and_then(|v| v.first());
    let (Some(departure), Some(destination)) = (departure, destination) else {
        return Err(DbError::MissingRouteEndpoints);
    };
    let h = stable_hash(constraints.to_qualified_json().as_bytes());
    let color = TAXI_COLORS[(h % TAXI_COLORS.len() as u64) as usize];
    let kind = TAXI_TYPES[((h >> 8) % TAXI_TYPES.len() as u64) as usize];
    let phone = format!("07{:09}", (h >> 16) % 1_000_000_000);
    Ok([
        ("type", format!("{color} {kind}")),
        ("color", color.to_string()),
        ("car", kind.to_string()),
        ("phone", phone),
        ("departure", departure.clone()),
        ("destination", destination.clone()),
    ]
    .into_iter()
    .collect())
}

/// Deterministic 8-character booking reference stub.
pub fn booking_reference(domain: Domain, entity: &Entity, slots: &SlotMap) -> String {
    const ALPHABET: &[u8] = b"ABCDEFGHJKLMNPQRSTUVWXYZ23456789";
    let seed = format!("{domain}|{}|{}", serde_json::to_string(entity).unwrap_or_default(), slots.to_qualified_json());
    let mut h = stable_hash(seed.as_bytes());
    (0..8)
        .map(|_| {
            let c = ALPHABET[(h % ALPHABET.len() as u64) as usize] as char;
            h /= ALPHABET.len() as u64;
            c
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::default_schemas;

    fn schema(d: Domain) -> SlotSchema {
        default_schemas().unwrap()[&d].clone()
    }

    fn slots(entries: &[(&str, &str)]) -> SlotMap {
        entries
            .iter()
            .map(|(k, v)| (k.to_string(), vec![v.to_string()]))
            .collect()
    }

    #[test]
    fn matching_rules() {
        let r = schema(Domain::Restaurant);
        let e: Entity = [("area", "centre"), ("pricerange", "expensive"), ("name", "x")]
            .into_iter()
            .collect();
        assert!(match_entity(&e, &slots(&[("restaurant-area", "centre")]), &r));
        assert!(match_entity(&e, &SlotMap::new(), &r));
        assert!(!match_entity(&e, &slots(&[("restaurant-area", "north")]), &r));
        assert!(match_entity(&e, &slots(&[("restaurant-area", "dontcare")]), &r));
        assert!(match_entity(&e, &slots(&[("restaurant-bookday", "monday")]), &r));
        let multi: SlotMap = [("restaurant-area".to_string(), vec!["north".into(), "centre".into()])]
            .into_iter()
            .collect();
        assert!(match_entity(&e, &multi, &r));

        let t = schema(Domain::Train);
        let train: Entity = [("leaveat", "05:16"), ("arriveby", "06:35"), ("trainid", "tr1")]
            .into_iter()
            .collect();
        assert!(!match_entity(&train, &slots(&[("train-leaveat", "06:00")]), &t));
        assert!(match_entity(&train, &slots(&[("train-leaveat", "05:16")]), &t));
        assert!(match_entity(&train, &slots(&[("train-arriveby", "7:00")]), &t));
        assert!(!match_entity(&train, &slots(&[("train-arriveby", "06:00")]), &t));
    }

    #[test]
    fn load_errors() {
        let r = schema(Domain::Restaurant);
        assert_eq!(Database::from_json("[]", &r).unwrap().len(), 0);
        assert_eq!(
            Database::from_json(r#"[{"name": "a"}, {"area": "centre"}]"#, &r).unwrap_err(),
            DbError::MalformedRecord(1)
        );
        assert!(matches!(
            Database::from_json(r#"{"taxi_colors": []}"#, &r),
            Err(DbError::NotAnArray(_))
        ));
        assert!(matches!(
            load_database(Path::new("/nonexistent_db.json"), &r),
            Err(DbError::FileMissing(_))
        ));
    }

    #[test]
    fn flattens_and_normalizes_records() {
        let h = schema(Domain::Hotel);
        let db = Database::from_json(
            r#"[{"Name": "A and B Guest House", "location": [52.1, 0.19], "price": {"single": "50"}, "id": 0, "Entrance Fee": "?", "type": "guest house"}]"#,
            &h,
        )
        .unwrap();
        let e = &db.entities()[0];
        assert_eq!(e.get("name"), Some("a and b guest house"));
        assert_eq!(e.get("location"), Some("52.1, 0.19"));
        assert_eq!(e.get("id"), Some("0"));
        assert_eq!(e.get("entrancefee"), Some("?"));
        assert_eq!(e.get("type"), Some("guesthouse"));
    }

    #[test]
    fn query_rejects_foreign_slots() {
        let db = Database::from_json(r#"[{"name": "a", "area": "centre"}]"#, &schema(Domain::Restaurant)).unwrap();
        assert!(matches!(
            db.query(&slots(&[("hotel-area", "centre")])),
            Err(DbError::DomainMismatch { .. })
        ));
        assert!(db.query(&slots(&[("restaurant-area", "moon")])).unwrap().is_empty());
        assert_eq!(db.query(&SlotMap::new()).unwrap().len(), 1);
    }

    #[test]
    fn police_is_unfiltered() {
        let db = Database::from_json(
            r#"[{"name": "Parkside Police Station", "phone": "01223358966"}]"#,
            &schema(Domain::Police),
        )
        .unwrap();
        assert_eq!(db.query(&slots(&[("police-name", "elsewhere")])).unwrap().len(), 1);
    }

    #[test]
    fn summary_head_and_tail() {
        let vals: Vec<String> = (5..24).map(|h| format!("{h:02}:16")).collect();
        let s = ValueSummary::from_values(vals.iter().map(String::as_str));
        assert!(s.truncated);
        assert_eq!(s.total_distinct, 19);
        assert_eq!(
            s.shown,
            ["05:16", "06:16", "07:16", "08:16", "20:16", "21:16", "22:16", "23:16"]
        );
        let s = ValueSummary::from_values(["b", "a", "b"]);
        assert_eq!(s.shown, ["a", "b"]);
        assert!(!s.truncated);
        // clock order, not string order, for times past midnight
        let s = ValueSummary::from_values(["24:35", "9:35", "06:35"]);
        assert_eq!(s.shown, ["06:35", "9:35", "24:35"]);
    }

    #[test]
    fn observation_cases() {
        let r = schema(Domain::Restaurant);
        let a: Entity = [("name", "a"), ("area", "centre")].into_iter().collect();
        let filled = slots(&[("restaurant-area", "centre")]);
        let obs = build_observation(&[&a], &r, &filled);
        assert_eq!(obs.option_count, 1);
        assert!(obs.single.is_some());
        assert!(obs.conclusions.is_empty());
        assert!(!obs.question_content.contains(&"area".to_string()));

        let obs = build_observation(&[], &r, &SlotMap::new());
        assert_eq!(obs.option_count, 0);
        assert!(obs.single.is_none());
        assert_eq!(obs.question_content, r.askable);
    }

    #[test]
    fn taxi_is_deterministic() {
        let c = slots(&[("taxi-departure", "a"), ("taxi-destination", "b")]);
        let e1 = taxi_synthesize(&c).unwrap();
        assert_eq!(e1, taxi_synthesize(&c).unwrap());
        assert_eq!(e1.get("phone").unwrap().len(), 11);
        assert_eq!(
            taxi_synthesize(&slots(&[("taxi-departure", "a")])),
            Err(DbError::MissingRouteEndpoints)
        );
    }

    #[test]
    fn booking_reference_is_stable() {
        let e: Entity = [("name", "a")].into_iter().collect();
        let r1 = booking_reference(Domain::Hotel, &e, &SlotMap::new());
        assert_eq!(r1.len(), 8);
        assert_eq!(r1, booking_reference(Domain::Hotel, &e, &SlotMap::new()));
    }
}
