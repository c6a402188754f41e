use std::path::PathBuf;

use tod_core::evaluation::{evaluate, MetricsReport, PlaceholderVocab};

use crate::config::RunConfig;
use crate::error::{data_err, CliError, CliResult};
use crate::manifest::{write_json, write_text, RunManifest};

pub const PREDICTIONS_FILE: &str = "predictions.json";
pub const TRANSCRIPTS_FILE: &str = "transcripts.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const TABLE_FILE: &str = "metrics.txt";
pub const JOURNAL_FILE: &str = "journal.jsonl";

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub split: String,
    pub journal: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            split: "test".into(),
            journal: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub report: MetricsReport,
    pub failed_turns: usize,
    pub outputs: Vec<PathBuf>,
}

/// Replays a split through the pipeline and scores it.
pub fn cmd_eval(config: &RunConfig, opts: &EvalOptions) -> CliResult<EvalOutcome> {
    let pipeline = super::pipeline(config)?;
    let dialogues = super::dialogues(config, &opts.split, &pipeline.schemas)?;
    let out = &config.output_dir;
    std::fs::create_dir_all(out).map_err(|e| CliError::Data(format!("{}: {e}", out.display())))?;
    let journal = opts.journal.then(|| out.join(JOURNAL_FILE));
    let backend = super::backend(config, &dialogues, &pipeline.schemas, journal.as_deref())?;

    let run = pipeline.run_corpus(&dialogues, &backend, config.parallelism);
    let report = evaluate(
        &run.prediction_set(),
        &dialogues,
        &pipeline.schemas,
        &pipeline.databases,
        PlaceholderVocab::bundled(),
    )
    .map_err(data_err)?;

    let files = [PREDICTIONS_FILE, TRANSCRIPTS_FILE, METRICS_FILE, TABLE_FILE].map(|f| out.join(f));
    write_json(&files[0], &run.predictions)?;
    write_json(&files[1], &run.transcripts)?;
    write_json(&files[2], &report)?;
    write_text(&files[3], &report.table())?;

    let failed_turns = run.failure_count();
    let attempted: usize = run.transcripts.iter().map(|t| t.responses.len() - t.skipped).sum();
    let mut manifest = RunManifest::new("eval", config);
    manifest.outputs = files.iter().chain(&journal).map(|p| p.display().to_string()).collect();
    manifest.details = serde_json::json!({
        "split": opts.split,
        "dialogues": dialogues.len(),
        "failed_turns": failed_turns,
    });
    manifest.write(out)?;

    if attempted > 0 && failed_turns == attempted {
        let first = run
            .transcripts
            .iter()
            .flat_map(|t| &t.failures)
            .map(|(_, e)| e.clone())
            .next()
            .unwrap_or_default();
        return Err(CliError::Backend(format!("every turn failed; first error: {first}")));
    }
    Ok(EvalOutcome {
        report,
        failed_turns,
        outputs: files.to_vec(),
    })
}
