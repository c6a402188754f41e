//! Run configuration: one TOML file plus command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tod_core::backend::{BackendDescriptor, HttpConfig};
use tod_core::datagen::{CategoryKey, DEFAULT_BLEU_THRESHOLD};
use tod_core::db::stable_hash;
use tod_core::response::{DEFAULT_HISTORY_TURNS, DEFAULT_MAX_WORDS};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataPaths {
    pub train: Option<PathBuf>,
    pub validation: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub databases: PathBuf,
    /// Slot ontology; the bundled one when absent.
    pub schemas: Option<PathBuf>,
}

impl Default for DataPaths {
    fn default() -> Self {
        DataPaths {
            train: None,
            validation: None,
            test: None,
            databases: "data/db".into(),
            schemas: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricOptions {
    pub max_words: usize,
    pub history_turns: usize,
    pub include_history: bool,
    pub gold_last_intent: bool,
}

impl Default for MetricOptions {
    fn default() -> Self {
        MetricOptions {
            max_words: DEFAULT_MAX_WORDS,
            history_turns: DEFAULT_HISTORY_TURNS,
            include_history: true,
            gold_last_intent: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatagenOptions {
    pub bleu_threshold: f64,
    /// Largest total-variation distance accepted for a finalized DPO set.
    pub tv_bound: f64,
    pub category_key: CategoryKey,
}

impl Default for DatagenOptions {
    fn default() -> Self {
        DatagenOptions {
            bleu_threshold: DEFAULT_BLEU_THRESHOLD,
            tv_bound: 0.02,
            category_key: CategoryKey::Domain,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataPaths,
    pub backend: BackendDescriptor,
    pub parallelism: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub metrics: MetricOptions,
    pub datagen: DatagenOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: DataPaths::default(),
            backend: BackendDescriptor::Oracle { dialogues: None },
            parallelism: 4,
            seed: 13,
            output_dir: "out".into(),
            metrics: MetricOptions::default(),
            datagen: DatagenOptions::default(),
        }
    }
}

/// Values given on the command line; each one beats the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub dialogues: Option<PathBuf>,
    pub databases: Option<PathBuf>,
    pub schemas: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub parallelism: Option<usize>,
    pub backend: Option<String>,
    pub model: Option<String>,
}

/// Parses `oracle`, `scripted:PATH` or `http:URL`.
pub fn parse_backend_flag(flag: &str) -> Result<BackendDescriptor, CliError> {
    match flag.split_once(':') {
        _ if flag == "oracle" => Ok(BackendDescriptor::Oracle { dialogues: None }),
        Some(("scripted", path)) => Ok(BackendDescriptor::Scripted { script: path.into() }),
        Some(("http", url)) => Ok(BackendDescriptor::Http(HttpConfig::new(url))),
        _ => Err(CliError::Usage(format!(
            "bad --backend `{flag}`: expected oracle, scripted:PATH or http:URL"
        ))),
    }
}

fn rebase(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("invalid config: {e}")))
    }

    /// Reads `path` and resolves its relative paths against the file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut config = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.rebase(base);
        Ok(config)
    }

    fn rebase(&mut self, base: &Path) {
        let d = &mut self.data;
        for p in [&mut d.train, &mut d.validation, &mut d.test, &mut d.schemas].into_iter().flatten() {
            rebase(base, p);
        }
        rebase(base, &mut d.databases);
        rebase(base, &mut self.output_dir);
        match &mut self.backend {
            BackendDescriptor::Scripted { script } => rebase(base, script),
            BackendDescriptor::Oracle { dialogues: Some(p) } => rebase(base, p),
            _ => {}
        }
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<(), CliError> {
        if let Some(p) = &o.dialogues {
            self.data.test = Some(p.clone());
        }
        if let Some(p) = &o.databases {
            self.data.databases = p.clone();
        }
        if let Some(p) = &o.schemas {
            self.data.schemas = Some(p.clone());
        }
        if let Some(p) = &o.output_dir {
            self.output_dir = p.clone();
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(n) = o.parallelism {
            self.parallelism = n;
        }
        if let Some(b) = &o.backend {
            self.backend = parse_backend_flag(b)?;
        }
        if let Some(m) = &o.model {
            if let BackendDescriptor::Http(c) = &mut self.backend {
                c.model_id = m.clone();
            }
        }
        Ok(())
    }

    /// Every referenced input must exist before anything runs.
    pub fn validate(&self) -> Result<(), CliError> {
        let d = &self.data;
        let mut inputs: Vec<&Path> = vec![&d.databases];
        inputs.extend([&d.train, &d.validation, &d.test, &d.schemas].into_iter().flatten().map(PathBuf::as_path));
        match &self.backend {
            BackendDescriptor::Scripted { script } => inputs.push(script),
            BackendDescriptor::Oracle { dialogues: Some(p) } => inputs.push(p),
            _ => {}
        }
        if let Some(missing) = inputs.into_iter().find(|p| !p.exists()) {
            return Err(CliError::Usage(format!("path does not exist: {}", missing.display())));
        }
        if self.parallelism == 0 {
            return Err(CliError::Usage("parallelism must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.datagen.bleu_threshold) {
            return Err(CliError::Usage(format!(
                "bleu_threshold {} is outside [0, 1]",
                self.datagen.bleu_threshold
            )));
        }
        self.backend.validate().map_err(|e| CliError::Usage(e.to_string()))
    }

    /// Stable fingerprint of the effective configuration.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        format!("{:016x}", stable_hash(canonical.as_bytes()))
    }

    /// Maps a split name to its configured file, or treats it as a path.
    pub fn split_path(&self, split: &str) -> Result<PathBuf, CliError> {
        let configured = match split {
            "train" => &self.data.train,
            "validation" => &self.data.validation,
            "test" => &self.data.test,
            other => return Ok(PathBuf::from(other)),
        };
        configured
            .clone()
            .ok_or_else(|| CliError::Usage(format!("no `{split}` split configured under [data]")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let text = r#"
            seed = 7
            parallelism = 2
            [data]
            test = "fixtures/t.json"
            databases = "db"
            [backend]
            kind = "http"
            base_url = "http://localhost:8000/v1"
            [datagen]
            tv_bound = 0.05
            category_key = "slot_name"
        "#;
        let mut c = RunConfig::from_toml(text).unwrap();
        c.rebase(Path::new("/etc/tod"));
        assert_eq!(c.seed, 7);
        assert_eq!(c.data.test, Some("/etc/tod/fixtures/t.json".into()));
        assert_eq!(c.data.databases, PathBuf::from("/etc/tod/db"));
        assert_eq!(c.datagen.category_key, CategoryKey::SlotName);
        let BackendDescriptor::Http(h) = &c.backend else { panic!("{:?}", c.backend) };
        assert_eq!(h.auth_env, "TOD_API_KEY");
        assert_eq!(c.metrics, MetricOptions::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(RunConfig::from_toml("sede = 3"), Err(CliError::Usage(_))));
    }

    #[test]
    fn overrides_win() {
        let mut c = RunConfig::default();
        c.apply(&Overrides {
            seed: Some(99),
            backend: Some("scripted:s.json".into()),
            ..Overrides::default()
        })
        .unwrap();
        assert_eq!(c.seed, 99);
        assert_eq!(c.backend, BackendDescriptor::Scripted { script: "s.json".into() });
        assert!(parse_backend_flag("grpc:x").is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seed += 1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn missing_paths_fail_validation() {
        let mut c = RunConfig::default();
        c.data.databases = "/nonexistent/db".into();
        let err = c.validate().unwrap_err();
        assert!(err.to_string().contains("/nonexistent/db"));
        assert_eq!(err.exit_code(), 1);
    }
}
