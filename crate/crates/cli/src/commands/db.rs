use std::io::Write;

use tod_core::db::DbError;
use tod_core::{Action, Domain, Intent, SlotMap};

use crate::config::RunConfig;
use crate::error::{data_err, CliError, CliResult};

/// Turns `{"departure": "norwich", "train-day": ["monday"]}` into a slot map.
/// Keys naming another domain are kept so the query reports the mismatch.
pub fn parse_constraints(domain: Domain, schema: &tod_core::SlotSchema, text: &str) -> CliResult<SlotMap> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| CliError::Usage(format!("constraints are not valid JSON: {e}")))?;
    let obj = value
        .as_object()
        .ok_or_else(|| CliError::Usage("constraints must be a JSON object".into()))?;
    let mut own = Vec::new();
    let mut foreign = SlotMap::new();
    for (k, v) in obj {
        let values: Vec<String> = match v {
            serde_json::Value::String(s) => vec![s.clone()],
            serde_json::Value::Array(a) => a
                .iter()
                .map(|x| x.as_str().map(str::to_string).unwrap_or_else(|| x.to_string()))
                .collect(),
            other => vec![other.to_string()],
        };
        match k.split_once('-') {
            Some((prefix, _)) if prefix != domain.as_str() => foreign.insert(k.clone(), values),
            _ => own.push((k.clone(), values)),
        }
    }
    let mut map = SlotMap::validated(own, schema).map_err(|e| CliError::Usage(e.to_string()))?;
    for (k, v) in foreign.iter() {
        map.insert(k, v.to_vec());
    }
    Ok(map)
}

/// Prints up to `limit` matching entities and the observation block.
pub fn cmd_db(config: &RunConfig, domain: Domain, constraints: &str, limit: usize, mut out: impl Write) -> CliResult<usize> {
    let pipeline = super::pipeline(config)?;
    let schema = pipeline
        .schemas
        .get(&domain)
        .ok_or_else(|| CliError::Usage(format!("no schema for domain `{domain}`")))?;
    let slots = parse_constraints(domain, schema, constraints)?;
    let (count, shown) = match pipeline.databases.get(&domain) {
        Some(db) => {
            let hits = db.query(&slots).map_err(|e| match e {
                DbError::DomainMismatch { .. } => CliError::Usage(e.to_string()),
                other => data_err(other),
            })?;
            let shown: Vec<String> = hits
                .iter()
                .take(limit)
                .map(|e| serde_json::to_string(e).expect("entity serializes"))
                .collect();
            (hits.len(), shown)
        }
        None => (0, vec![]),
    };
    let intent = Intent::new(domain, Action::Find).map_err(|e| CliError::Usage(e.to_string()))?;
    let observation = pipeline.observe(intent, schema, &slots).map_err(CliError::Data)?;
    let w = |e: std::io::Error| data_err(e);
    for line in &shown {
        writeln!(out, "{line}").map_err(w)?;
    }
    if count > shown.len() {
        writeln!(out, "... {} more", count - shown.len()).map_err(w)?;
    }
    if !shown.is_empty() {
        writeln!(out).map_err(w)?;
    }
    write!(out, "{}", observation.render()).map_err(w)?;
    Ok(observation.option_count)
}
