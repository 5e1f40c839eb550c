use std::path::{Path, PathBuf};

use affordkit::ahm;
use affordkit::annotation::{
    annotate_sequence, read_sequences, write_annotations, AnnotationRecord, PipelineConfig,
    Status,
};
use affordkit::dataset::{image_size, parse_records_file};
use affordkit::geometry::lift_to_3d;
use affordkit::heatmap::{render_target, to_gray_image};
use affordkit::record::validate_record;
use affordkit::synth::{generate_mini_dataset, MiniDatasetSpec};
use affordkit::{CameraIntrinsics, Point2D, Point3D};
use anyhow::{anyhow, Context};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RenderSummary {
    pub written: Vec<String>,
    /// One line per skipped record.
    pub errors: Vec<String>,
}

/// Renders one `<id>.ahm` target and one `<id>.png` preview per valid record.
/// Image paths resolve against the records file's directory.
pub fn cmd_render(records_path: &Path, sigma: f64, out_dir: &Path) -> anyhow::Result<RenderSummary> {
    let lines = parse_records_file(records_path)
        .with_context(|| format!("reading {}", records_path.display()))?;
    let root = records_path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(out_dir)?;
    let mut summary = RenderSummary::default();
    for (line, parsed) in lines {
        let record = match parsed {
            Ok(r) => r,
            Err(e) => {
                summary.errors.push(format!("line {line}: {e}"));
                continue;
            }
        };
        let size = match image_size(&root.join(&record.image_ref)) {
            Ok(s) => s,
            Err(e) => {
                summary.errors.push(format!("line {line} ({}): {e}", record.id));
                continue;
            }
        };
        let report = validate_record(&record, size);
        if !report.is_valid() {
            summary
                .errors
                .push(format!("line {line} ({}): {report}", record.id));
            continue;
        }
        let map = match render_target(&record.points, sigma, size.0, size.1) {
            Ok(m) => m,
            Err(e) => {
                summary.errors.push(format!("line {line} ({}): {e}", record.id));
                continue;
            }
        };
        let ahm_path = out_dir.join(format!("{}.ahm", record.id));
        ahm::save(&ahm_path, &map)?;
        let back = ahm::load(&ahm_path)?;
        let identical = back.dims() == map.dims()
            && back
                .values()
                .iter()
                .zip(map.values())
                .all(|(a, b)| a.to_bits() == b.to_bits());
        if !identical {
            return Err(anyhow!("{} did not re-read bit-exactly", ahm_path.display()));
        }
        to_gray_image(&map).save(out_dir.join(format!("{}.png", record.id)))?;
        summary.written.push(record.id);
    }
    Ok(summary)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct AnnotateSummary {
    pub ok: usize,
    pub low_confidence: usize,
    pub failed: usize,
}

/// Annotates every sequence (in parallel, output in input order) and
/// writes `annotations.jsonl` to `out_path`.
pub fn cmd_annotate(
    sequences_path: &Path,
    cfg: &PipelineConfig,
    out_path: &Path,
    threads: usize,
) -> anyhow::Result<AnnotateSummary> {
    let seqs = read_sequences(sequences_path)?;
    let base = sequences_path.parent().unwrap_or(Path::new("."));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()?;
    let records: Vec<AnnotationRecord> = pool.install(|| {
        seqs.par_iter()
            .map(|s| AnnotationRecord {
                id: s.id.clone(),
                result: annotate_sequence(s, base, cfg),
            })
            .collect()
    });
    if let Some(parent) = out_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    write_annotations(out_path, &records)?;
    let mut summary = AnnotateSummary::default();
    for r in &records {
        match r.result.status {
            Status::Ok => summary.ok += 1,
            Status::LowConfidence => summary.low_confidence += 1,
            Status::Failed => summary.failed += 1,
        }
    }
    Ok(summary)
}

pub struct LiftArgs {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

pub fn cmd_lift(args: &LiftArgs) -> anyhow::Result<Point3D> {
    let k = CameraIntrinsics {
        fx: args.fx,
        fy: args.fy,
        cx: args.cx,
        cy: args.cy,
    };
    Ok(lift_to_3d(Point2D::new(args.u, args.v), args.depth, &k)?)
}

pub fn format_point3(p: &Point3D) -> String {
    format!("{:.6} {:.6} {:.6}", p.x, p.y, p.z)
}

pub const MINI_CONFIG_FILE: &str = "config.json";

/// Writes the synthetic mini benchmark plus a `config.json` whose
/// evaluation sigma matches the generated targets.
pub fn cmd_gen_mini(out_dir: &Path, records: usize, seed: u64) -> anyhow::Result<PathBuf> {
    let spec = MiniDatasetSpec {
        records,
        seed,
        ..MiniDatasetSpec::default()
    };
    generate_mini_dataset(out_dir, &spec)
        .with_context(|| format!("writing mini dataset to {}", out_dir.display()))?;
    let mut cfg = RunConfig::default().with_seed(Some(seed));
    cfg.evaluation.sigma = spec.sigma;
    let path = out_dir.join(MINI_CONFIG_FILE);
    std::fs::write(&path, serde_json::to_string_pretty(&cfg)? + "\n")?;
    Ok(path)
}
