use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

/// Written next to every command's outputs.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub versions: BTreeMap<String, String>,
    pub config: RunConfig,
    pub outputs: Vec<String>,
    #[serde(skip_serializing_if = "serde_json::Value::is_null")]
    pub details: serde_json::Value,
}

impl RunManifest {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        let versions = [
            ("tod-cli".to_string(), env!("CARGO_PKG_VERSION").to_string()),
            ("tod-core".to_string(), tod_core::VERSION.to_string()),
        ]
        .into();
        RunManifest {
            command: command.to_string(),
            config_hash: config.hash(),
            seed: config.seed,
            versions,
            config: config.clone(),
            outputs: Vec::new(),
            details: serde_json::Value::Null,
        }
    }

    /// `manifest_<command words joined by _>.json`
    pub fn file_name(&self) -> String {
        format!("manifest_{}.json", self.command.replace(' ', "_"))
    }

    pub fn write(&self, dir: &Path) -> CliResult<()> {
        write_json(&dir.join(self.file_name()), self)
    }
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Data(e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::Data(format!("{}: {e}", parent.display())))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}
