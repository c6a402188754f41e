use std::path::{Path, PathBuf};

use serde::Serialize;
use tod_core::datagen::{
    adapt_distribution, build_sft, collect_bad_cases, distribution_report, write_dpo_jsonl, write_sft_jsonl,
    AgentKind, CategoryDistribution, CategoryKey, DatagenError, DistributionReport, PreferencePair,
};
use tod_core::orchestrator::Transcript;

use crate::config::RunConfig;
use crate::error::{data_err, CliError, CliResult};
use crate::manifest::{write_json, RunManifest};

pub const UNBALANCED_SUFFIX: &str = ".unbalanced";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenKind {
    Sft,
    Dpo,
}

#[derive(Debug, Clone)]
pub struct GenOptions {
    pub kind: GenKind,
    pub agent: AgentKind,
    /// Gold split for SFT examples, and the pool and target distribution for DPO.
    pub sft_split: String,
    /// Transcripts of a validation run, scored against `gold_split`.
    pub transcripts: Option<PathBuf>,
    pub gold_split: String,
    /// Already collected preference pairs, one JSON object per line.
    pub observed: Option<PathBuf>,
    pub no_dda: bool,
    pub tv_bound: Option<f64>,
    pub bleu_threshold: Option<f64>,
    pub category_key: Option<CategoryKey>,
}

impl GenOptions {
    pub fn new(kind: GenKind, agent: AgentKind) -> Self {
        GenOptions {
            kind,
            agent,
            sft_split: "train".into(),
            transcripts: None,
            gold_split: "validation".into(),
            observed: None,
            no_dda: false,
            tv_bound: None,
            bleu_threshold: None,
            category_key: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SeededReport {
    pub seed: u64,
    pub adapted: bool,
    pub tv_bound: f64,
    #[serde(flatten)]
    pub report: DistributionReport,
}

#[derive(Debug, Clone)]
pub struct GenOutcome {
    pub outputs: Vec<PathBuf>,
    pub lines: usize,
    pub report: Option<SeededReport>,
    /// False when the DPO set was written with the unbalanced suffix.
    pub finalized: bool,
}

/// `distribution_report_<agent>.json`
pub fn report_file(agent: AgentKind) -> String {
    format!("distribution_report_{}.json", agent.as_str())
}

fn with_suffix(path: &Path, balanced: bool) -> PathBuf {
    if balanced {
        path.to_path_buf()
    } else {
        let mut s = path.as_os_str().to_owned();
        s.push(UNBALANCED_SUFFIX);
        PathBuf::from(s)
    }
}

fn read_observed(path: &Path) -> CliResult<Vec<PreferencePair>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| CliError::Data(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

pub fn cmd_gen(config: &RunConfig, opts: &GenOptions) -> CliResult<GenOutcome> {
    let pipeline = super::pipeline(config)?;
    let out = &config.output_dir;
    let gold = super::dialogues(config, &opts.sft_split, &pipeline.schemas)?;
    let pool = build_sft(&gold, opts.agent, &pipeline).map_err(data_err)?;
    let agent = opts.agent.as_str();

    if opts.kind == GenKind::Sft {
        let path = out.join(format!("sft_{agent}.jsonl"));
        std::fs::create_dir_all(out).map_err(data_err)?;
        write_sft_jsonl(&path, &pool).map_err(data_err)?;
        let mut manifest = RunManifest::new(&format!("gen sft {agent}"), config);
        manifest.outputs = vec![path.display().to_string()];
        manifest.details = serde_json::json!({"agent": agent, "split": opts.sft_split, "examples": pool.len()});
        manifest.write(out)?;
        return Ok(GenOutcome {
            outputs: vec![path],
            lines: pool.len(),
            report: None,
            finalized: true,
        });
    }

    let key = opts.category_key.unwrap_or(config.datagen.category_key);
    let threshold = opts.bleu_threshold.unwrap_or(config.datagen.bleu_threshold);
    let bound = opts.tv_bound.unwrap_or(config.datagen.tv_bound);

    let mut observed = Vec::new();
    if let Some(path) = &opts.transcripts {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let transcripts: Vec<Transcript> =
            serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let validation = super::dialogues(config, &opts.gold_split, &pipeline.schemas)?;
        observed.extend(
            collect_bad_cases(&transcripts, &validation, opts.agent, threshold, &pipeline.schemas)
                .map_err(|e| CliError::Usage(e.to_string()))?,
        );
    }
    if let Some(path) = &opts.observed {
        observed.extend(read_observed(path)?);
    }
    if opts.transcripts.is_none() && opts.observed.is_none() {
        return Err(CliError::Usage("gen dpo needs --transcripts or --observed".into()));
    }
    if observed.is_empty() {
        return Err(CliError::Data(format!("no {agent} bad cases found; nothing to generate")));
    }

    let sft_dist = CategoryDistribution::from_labels(pool.iter().map(|e| key.of_example(e)));
    let pairs = if opts.no_dda {
        observed
    } else {
        adapt_distribution(&observed, &sft_dist, &pool, &pipeline.schemas, config.seed, key).map_err(|e| match e {
            DatagenError::InsufficientPool(d) => CliError::Data(format!("insufficient gold pool for `{d}`")),
            other => data_err(other),
        })?
    };
    let report = SeededReport {
        seed: config.seed,
        adapted: !opts.no_dda,
        tv_bound: bound,
        report: distribution_report(&pairs, &sft_dist, key),
    };
    let balanced = report.report.tv_distance <= bound + 1e-12;

    let data_path = out.join(format!("dpo_{agent}.jsonl"));
    let report_path = out.join(report_file(opts.agent));
    for stale in [&data_path, &report_path] {
        let _ = std::fs::remove_file(with_suffix(stale, !balanced));
    }
    let (data_path, report_path) = (with_suffix(&data_path, balanced), with_suffix(&report_path, balanced));
    std::fs::create_dir_all(out).map_err(data_err)?;
    write_dpo_jsonl(&data_path, &pairs).map_err(data_err)?;
    write_json(&report_path, &report)?;

    let mut manifest = RunManifest::new(&format!("gen dpo {agent}"), config);
    manifest.outputs = vec![data_path.display().to_string(), report_path.display().to_string()];
    manifest.details = serde_json::json!({
        "agent": agent,
        "pairs": pairs.len(),
        "tv_distance": report.report.tv_distance,
        "finalized": balanced,
    });
    manifest.write(out)?;

    if !balanced && !opts.no_dda {
        return Err(CliError::Data(format!(
            "TV distance {:.4} exceeds bound {bound}; kept {} with the {UNBALANCED_SUFFIX} suffix",
            report.report.tv_distance,
            data_path.display()
        )));
    }
    Ok(GenOutcome {
        outputs: vec![data_path, report_path],
        lines: pairs.len(),
        report: Some(report),
        finalized: balanced,
    })
}
