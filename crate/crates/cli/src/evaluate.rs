use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use affordkit::ahm;
use affordkit::dataset::load_dataset;
use affordkit::metrics::{aggregate, evaluate_sample, MetricMean, MetricScores, ScoreSummary};
use affordkit::record::{PredictionRecord, Split};
use anyhow::Context;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::TOOL_NAME;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToolInfo {
    pub name: String,
    pub version: String,
}

impl ToolInfo {
    pub fn current() -> Self {
        Self {
            name: TOOL_NAME.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRun {
    pub dataset: PathBuf,
    pub predictions: PathBuf,
    pub threads: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordScore {
    pub id: String,
    #[serde(flatten)]
    pub scores: MetricScores,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunError {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub record_id: Option<String>,
    pub message: String,
}

/// Output of one evaluation run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRunReport {
    pub tool: ToolInfo,
    pub config: RunConfig,
    pub run: EvalRun,
    pub records: Vec<RecordScore>,
    /// `None` when no record could be scored.
    pub summary: Option<ScoreSummary>,
    pub errors: Vec<RunError>,
    pub duration_seconds: f64,
}

impl EvalRunReport {
    /// Recomputes the summary from the per-record entries.
    pub fn recompute_summary(&self) -> Option<ScoreSummary> {
        let scores: Vec<MetricScores> = self.records.iter().map(|r| r.scores).collect();
        aggregate(&scores).ok()
    }
}

fn score_record(
    ds: &affordkit::dataset::LoadedDataset,
    index: usize,
    predictions: &Path,
    cfg: &RunConfig,
) -> Result<MetricScores, String> {
    let record = &ds.records[index];
    let pred_ref = PredictionRecord::conventional(predictions, &record.id);
    if !pred_ref.heatmap_ref.exists() {
        return Err(format!("missing prediction {}", pred_ref.heatmap_ref.display()));
    }
    let pred = ahm::load(&pred_ref.heatmap_ref).map_err(|e| e.to_string())?;
    let mask = ds.part_mask(index).transpose().map_err(|e| e.to_string())?;
    evaluate_sample(
        &pred,
        record,
        ds.image_sizes[index],
        mask.as_ref(),
        &cfg.evaluation,
    )
    .map_err(|e| e.source.to_string())
}

/// Scores every test-split record against `<predictions>/<id>.ahm`.
/// Unreadable datasets are fatal; per-record problems land in `errors`.
pub fn cmd_evaluate(
    dataset_dir: &Path,
    predictions_dir: &Path,
    cfg: &RunConfig,
    threads: usize,
) -> anyhow::Result<EvalRunReport> {
    let start = Instant::now();
    let ds = load_dataset(dataset_dir)
        .with_context(|| format!("loading dataset {}", dataset_dir.display()))?;
    if !predictions_dir.is_dir() {
        anyhow::bail!("predictions directory {} not found", predictions_dir.display());
    }
    let mut errors: Vec<RunError> = ds
        .line_errors
        .iter()
        .map(|e| RunError {
            record_id: None,
            message: format!("records line {}: {}", e.line, e.message),
        })
        .collect();
    let test: Vec<usize> = (0..ds.records.len())
        .filter(|&i| ds.records[i].split == Split::Test)
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()?;
    let results: Vec<Result<MetricScores, String>> = pool.install(|| {
        test.par_iter()
            .map(|&i| score_record(&ds, i, predictions_dir, cfg))
            .collect()
    });
    let mut records = Vec::new();
    for (&i, result) in test.iter().zip(results) {
        let id = ds.records[i].id.clone();
        match result {
            Ok(scores) => records.push(RecordScore { id, scores }),
            Err(message) => errors.push(RunError {
                record_id: Some(id),
                message,
            }),
        }
    }
    let mut report = EvalRunReport {
        tool: ToolInfo::current(),
        config: cfg.clone(),
        run: EvalRun {
            dataset: dataset_dir.to_path_buf(),
            predictions: predictions_dir.to_path_buf(),
            threads: threads.max(1),
        },
        records,
        summary: None,
        errors,
        duration_seconds: 0.0,
    };
    report.summary = report.recompute_summary();
    report.duration_seconds = start.elapsed().as_secs_f64();
    Ok(report)
}

fn cell(m: &MetricMean) -> String {
    m.mean.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"))
}

/// Plain-text table, one row per named summary.
pub fn render_table(rows: &[(String, Option<ScoreSummary>)]) -> String {
    let name_width = rows
        .iter()
        .map(|(n, _)| n.chars().count())
        .chain(["Method".len()])
        .max()
        .unwrap_or(6);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<name_width$}  {:>8}  {:>8}  {:>9}  {:>8}  {:>5}",
        "Method", "KLD↓", "SIM↑", "SIM_part↑", "NSS↑", "N"
    );
    for (name, summary) in rows {
        match summary {
            Some(s) => {
                let _ = writeln!(
                    out,
                    "{:<name_width$}  {:>8}  {:>8}  {:>9}  {:>8}  {:>5}",
                    name,
                    cell(&s.kld),
                    cell(&s.sim),
                    cell(&s.sim_part),
                    cell(&s.nss),
                    s.count
                );
            }
            None => {
                let _ = writeln!(out, "{name:<name_width$}  (no scored records)");
            }
        }
    }
    out
}

/// Writes `<out>` (JSON) and the table next to it with a `.txt` extension.
pub fn write_report(report: &EvalRunReport, out: &Path) -> anyhow::Result<String> {
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    let json = serde_json::to_string_pretty(report)?;
    std::fs::write(out, json + "\n").with_context(|| format!("writing {}", out.display()))?;
    let name = report
        .run
        .predictions
        .file_name()
        .map_or_else(|| "predictions".to_string(), |n| n.to_string_lossy().into_owned());
    let table = render_table(&[(name, report.summary)]);
    std::fs::write(out.with_extension("txt"), &table)?;
    Ok(table)
}
