use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use tod_core::datagen::{filter_jsonl, jsonl_domain_counts};
use tod_core::Domain;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::manifest::{write_json, write_text, RunManifest};

pub const ABLATION_FILE: &str = "ablation.json";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileAblation {
    pub input: String,
    pub output: String,
    pub removed: usize,
    pub before: BTreeMap<String, usize>,
    pub after: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationManifest {
    pub removed_domain: Domain,
    pub files: Vec<FileAblation>,
}

/// Writes each input, minus the lines labeled `domain`, under the output
/// directory with the same file name.
pub fn cmd_ablate(config: &RunConfig, domain: Domain, inputs: &[PathBuf]) -> CliResult<AblationManifest> {
    if inputs.is_empty() {
        return Err(CliError::Usage("ablate needs at least one JSONL input".into()));
    }
    let out = &config.output_dir;
    let mut files = Vec::new();
    for input in inputs {
        let text = std::fs::read_to_string(input).map_err(|e| CliError::Usage(format!("{}: {e}", input.display())))?;
        let (kept, removed) = filter_jsonl(&text, domain);
        let name = input.file_name().unwrap_or(input.as_os_str());
        let output = out.join(name);
        if Path::new(&output) == input.as_path() {
            return Err(CliError::Usage(format!("refusing to overwrite input {}", input.display())));
        }
        write_text(&output, &kept)?;
        files.push(FileAblation {
            input: input.display().to_string(),
            output: output.display().to_string(),
            removed,
            before: jsonl_domain_counts(&text),
            after: jsonl_domain_counts(&kept),
        });
    }
    let ablation = AblationManifest {
        removed_domain: domain,
        files,
    };
    write_json(&out.join(ABLATION_FILE), &ablation)?;
    let mut manifest = RunManifest::new("ablate", config);
    manifest.outputs = ablation.files.iter().map(|f| f.output.clone()).collect();
    manifest.outputs.push(out.join(ABLATION_FILE).display().to_string());
    manifest.write(out)?;
    Ok(ablation)
}
