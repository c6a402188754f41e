//! One module per subcommand, plus the loading they share.

pub mod ablate;
pub mod chat;
pub mod db;
pub mod eval;
pub mod gen;
pub mod report;

use std::collections::BTreeMap;
use std::path::Path;

use tod_core::backend::{
    BackendDescriptor, CompletionBackend, HttpBackend, JournaledBackend, OracleBackend, ScriptedBackend,
};
use tod_core::dataset::{load_dialogues, Dialogue};
use tod_core::db::load_databases;
use tod_core::model::{default_schemas, load_schemas};
use tod_core::orchestrator::Pipeline;
use tod_core::{Database, Domain, Schemas};

use crate::config::RunConfig;
use crate::error::{data_err, CliError, CliResult};

pub fn schemas(config: &RunConfig) -> CliResult<Schemas> {
    match &config.data.schemas {
        Some(p) => load_schemas(p).map_err(data_err),
        None => default_schemas().map_err(data_err),
    }
}

pub fn databases(config: &RunConfig, schemas: &Schemas) -> CliResult<BTreeMap<Domain, Database>> {
    load_databases(&config.data.databases, schemas).map_err(data_err)
}

pub fn pipeline(config: &RunConfig) -> CliResult<Pipeline> {
    let schemas = schemas(config)?;
    let dbs = databases(config, &schemas)?;
    let mut p = Pipeline::new(schemas, dbs);
    let m = &config.metrics;
    p.options.max_words = m.max_words;
    p.options.history_turns = m.history_turns;
    p.options.include_history = m.include_history;
    p.options.gold_last_intent = m.gold_last_intent;
    if let BackendDescriptor::Http(h) = &config.backend {
        p.options.model_id = h.model_id.clone();
    }
    Ok(p)
}

/// Loads a split; an empty one is an error.
pub fn dialogues(config: &RunConfig, split: &str, schemas: &Schemas) -> CliResult<Vec<Dialogue>> {
    let path = config.split_path(split)?;
    if !path.exists() {
        return Err(CliError::Usage(format!("path does not exist: {}", path.display())));
    }
    let dialogues = load_dialogues(&path, schemas).map_err(data_err)?;
    if dialogues.is_empty() {
        return Err(CliError::Data(format!("empty dataset: {}", path.display())));
    }
    Ok(dialogues)
}

/// Instantiates the configured backend. The oracle answers from `evaluated`
/// unless the descriptor names its own dialogue file.
pub fn backend(
    config: &RunConfig,
    evaluated: &[Dialogue],
    schemas: &Schemas,
    journal: Option<&Path>,
) -> CliResult<Box<dyn CompletionBackend>> {
    let inner: Box<dyn CompletionBackend> = match &config.backend {
        BackendDescriptor::Http(h) => Box::new(HttpBackend::new(h.clone()).map_err(|e| CliError::Backend(e.to_string()))?),
        BackendDescriptor::Scripted { script } => {
            Box::new(ScriptedBackend::load(script).map_err(|e| CliError::Usage(e.to_string()))?)
        }
        BackendDescriptor::Oracle { dialogues: Some(p) } => {
            Box::new(OracleBackend::new(&load_dialogues(p, schemas).map_err(data_err)?))
        }
        BackendDescriptor::Oracle { dialogues: None } => Box::new(OracleBackend::new(evaluated)),
    };
    match journal {
        Some(path) => Ok(Box::new(JournaledBackend::new(inner, path).map_err(data_err)?)),
        None => Ok(inner),
    }
}
