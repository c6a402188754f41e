//! `tod`: evaluation, chat, training-data generation, domain ablation and
//! database inspection on top of `tod-core`.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tod_core::datagen::{AgentKind, CategoryKey};
use tod_core::Domain;

use crate::commands::chat::ChatOptions;
use crate::commands::eval::EvalOptions;
use crate::commands::gen::{GenKind, GenOptions};
use crate::config::{Overrides, RunConfig};
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "tod", version, about = "Multi-agent task-oriented dialogue engine")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Dialogue file or directory used as the test split.
    #[arg(long, global = true)]
    pub dialogues: Option<PathBuf>,
    /// Directory of `<domain>_db.json` tables.
    #[arg(long, global = true)]
    pub databases: Option<PathBuf>,
    /// Slot ontology JSON; the bundled one by default.
    #[arg(long, global = true)]
    pub schemas: Option<PathBuf>,
    /// Output directory.
    #[arg(long = "out", global = true)]
    pub output_dir: Option<PathBuf>,
    /// Seed for data synthesis.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Dialogues run concurrently.
    #[arg(long, global = true)]
    pub parallelism: Option<usize>,
    /// oracle, scripted:PATH or http:URL
    #[arg(long, global = true)]
    pub backend: Option<String>,
    /// Model id sent to an http backend.
    #[arg(long, global = true)]
    pub model: Option<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AgentArg {
    Intent,
    Slot,
    Response,
}

impl From<AgentArg> for AgentKind {
    fn from(a: AgentArg) -> Self {
        match a {
            AgentArg::Intent => AgentKind::Intent,
            AgentArg::Slot => AgentKind::Slot,
            AgentArg::Response => AgentKind::Response,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KeyArg {
    Domain,
    SlotName,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Replay a split through the pipeline and score it.
    Eval {
        /// validation, test, or a dialogue file.
        #[arg(long, default_value = "test")]
        split: String,
        /// Append every backend request and reply to journal.jsonl.
        #[arg(long)]
        journal: bool,
    },
    /// Talk to the pipeline on stdin.
    Chat {
        /// Print intent, slots and observation after each reply.
        #[arg(long)]
        trace: bool,
        /// Keep placeholders instead of filling them from the database.
        #[arg(long)]
        raw: bool,
    },
    /// Generate SFT or DPO training data.
    Gen {
        #[command(subcommand)]
        kind: GenCommand,
    },
    /// Remove one domain from JSONL training files.
    Ablate {
        /// Domain to remove.
        #[arg(long)]
        domain: Domain,
        /// JSONL files to filter.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Query one domain database.
    Db {
        domain: Domain,
        /// JSON object of slot constraints.
        #[arg(default_value = "{}")]
        constraints: String,
        /// Entities to print.
        #[arg(long, default_value_t = 5)]
        limit: usize,
    },
    /// Print saved metrics or reports.
    Report {
        /// metrics.json, a distribution report, or any JSON file.
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum GenCommand {
    /// Supervised examples from gold dialogues.
    Sft {
        #[arg(long, value_enum)]
        agent: AgentArg,
        /// Split or dialogue file to draw examples from.
        #[arg(long, default_value = "train")]
        split: String,
    },
    /// Preference pairs from bad cases, rebalanced to the SFT distribution.
    Dpo {
        #[arg(long, value_enum)]
        agent: AgentArg,
        /// Split providing the gold pool and the target distribution.
        #[arg(long, default_value = "train")]
        sft_split: String,
        /// transcripts.json of an eval run over `gold_split`.
        #[arg(long)]
        transcripts: Option<PathBuf>,
        /// Split the transcripts were produced from.
        #[arg(long, default_value = "validation")]
        gold_split: String,
        /// JSONL of preference pairs collected elsewhere.
        #[arg(long)]
        observed: Option<PathBuf>,
        /// Keep the observed distribution as it is.
        #[arg(long)]
        no_dda: bool,
        /// Largest accepted total-variation distance.
        #[arg(long)]
        tv_bound: Option<f64>,
        /// Responses under this sentence BLEU (0 to 1) become bad cases.
        #[arg(long)]
        bleu_threshold: Option<f64>,
        /// Category used to balance pairs.
        #[arg(long, value_enum)]
        category_key: Option<KeyArg>,
    },
}

impl GlobalArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            dialogues: self.dialogues.clone(),
            databases: self.databases.clone(),
            schemas: self.schemas.clone(),
            output_dir: self.output_dir.clone(),
            seed: self.seed,
            parallelism: self.parallelism,
            backend: self.backend.clone(),
            model: self.model.clone(),
        }
    }

    pub fn resolve(&self) -> CliResult<RunConfig> {
        let mut config = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        config.apply(&self.overrides())?;
        config.validate()?;
        Ok(config)
    }
}

/// Runs a parsed command, writing human-readable output to `out`.
pub fn execute(cli: Cli, out: &mut dyn Write) -> CliResult<()> {
    let w = |e: std::io::Error| CliError::Data(e.to_string());
    if let Command::Report { files } = &cli.command {
        return write!(out, "{}", commands::report::cmd_report(files)?).map_err(w);
    }
    let config = cli.global.resolve()?;
    match cli.command {
        Command::Eval { split, journal } => {
            let r = commands::eval::cmd_eval(&config, &EvalOptions { split, journal })?;
            write!(out, "{}", r.report.table()).map_err(w)?;
            if r.failed_turns > 0 {
                writeln!(out, "{} turns failed; see transcripts.json", r.failed_turns).map_err(w)?;
            }
        }
        Command::Chat { trace, raw } => {
            let stdin = std::io::stdin();
            commands::chat::cmd_chat(&config, ChatOptions { trace, raw }, stdin.lock(), out)?;
        }
        Command::Gen { kind } => {
            let opts = match kind {
                GenCommand::Sft { agent, split } => GenOptions {
                    sft_split: split,
                    ..GenOptions::new(GenKind::Sft, agent.into())
                },
                GenCommand::Dpo {
                    agent,
                    sft_split,
                    transcripts,
                    gold_split,
                    observed,
                    no_dda,
                    tv_bound,
                    bleu_threshold,
                    category_key,
                } => GenOptions {
                    sft_split,
                    transcripts,
                    gold_split,
                    observed,
                    no_dda,
                    tv_bound,
                    bleu_threshold,
                    category_key: category_key.map(|k| match k {
                        KeyArg::Domain => CategoryKey::Domain,
                        KeyArg::SlotName => CategoryKey::SlotName,
                    }),
                    ..GenOptions::new(GenKind::Dpo, agent.into())
                },
            };
            let g = commands::gen::cmd_gen(&config, &opts)?;
            for p in &g.outputs {
                writeln!(out, "wrote {}", p.display()).map_err(w)?;
            }
            if let Some(r) = &g.report {
                writeln!(out, "pairs: {}, TV distance: {:.4}", r.report.total, r.report.tv_distance).map_err(w)?;
            }
        }
        Command::Ablate { domain, inputs } => {
            let m = commands::ablate::cmd_ablate(&config, domain, &inputs)?;
            for f in &m.files {
                writeln!(out, "{}: removed {} {} lines -> {}", f.input, f.removed, domain, f.output).map_err(w)?;
            }
        }
        Command::Db {
            domain,
            constraints,
            limit,
        } => {
            commands::db::cmd_db(&config, domain, &constraints, limit, &mut *out)?;
        }
        Command::Report { .. } => unreachable!("handled above"),
    }
    Ok(())
}

/// Parses `args` and runs; returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(err, "{e}");
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
