//! Benchmark record schema and validation.

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::types::Point2D;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Split::Train => f.write_str("train"),
            Split::Test => f.write_str("test"),
        }
    }
}

/// One benchmark sample, a single line of `records.jsonl`.
///
/// Points are in pixel units of the referenced image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRecord {
    pub id: String,
    pub image_ref: String,
    pub object_category: String,
    pub action: String,
    pub points: Vec<Point2D>,
    pub part_mask_ref: Option<String>,
    pub split: Split,
    pub source: String,
}

/// Links a record to a stored prediction map (`AHM1`).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub record_id: String,
    pub heatmap_ref: PathBuf,
}

impl PredictionRecord {
    /// Predictions live at `<dir>/<record id>.ahm`.
    pub fn conventional(dir: &std::path::Path, record_id: &str) -> Self {
        Self {
            record_id: record_id.to_string(),
            heatmap_ref: dir.join(format!("{record_id}.ahm")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub field: &'static str,
    pub message: String,
}

/// Everything wrong with a record; empty when the record is valid.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, field: &'static str, message: impl Into<String>) {
        self.violations.push(Violation {
            field,
            message: message.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .violations
            .iter()
            .map(|v| format!("{}: {}", v.field, v.message))
            .collect();
        f.write_str(&parts.join("; "))
    }
}

/// Checks the record invariants against the size of its image.
pub fn validate_record(record: &DatasetRecord, image_size: (usize, usize)) -> ValidationReport {
    let (width, height) = image_size;
    let mut report = ValidationReport::default();
    if record.id.trim().is_empty() {
        report.push("id", "id empty");
    }
    if record.image_ref.trim().is_empty() {
        report.push("image_ref", "image_ref empty");
    }
    if record.object_category.trim().is_empty() {
        report.push("object_category", "object category empty");
    }
    if record.action.trim().is_empty() {
        report.push("action", "action empty");
    }
    if let Some(mask) = &record.part_mask_ref {
        if mask.trim().is_empty() {
            report.push("part_mask_ref", "part_mask_ref empty");
        }
    }
    if record.points.is_empty() {
        report.push("points", "points empty");
    }
    for (i, p) in record.points.iter().enumerate() {
        if !p.is_finite() {
            report.push("points", format!("point {i} not finite"));
        } else if !p.in_bounds(width, height) {
            report.push(
                "points",
                format!(
                    "point out of bounds: point {i} ({}, {}) outside {width}x{height}",
                    p.u, p.v
                ),
            );
        }
    }
    report
}
