//! Semi-automatic contact-point annotation: skin contact in the contact
//! frame, masked frame-to-frame matching, RANSAC homographies chained back to
//! the first observation frame.

mod mask;
mod matching;
mod skin;

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::geometry::{compose, ransac_homography, GeometryError, Homography, RansacParams};
use crate::types::{BBox, Point2D};

pub use mask::build_dynamic_mask;
pub use matching::{match_features, FeatureMatcher, MatcherConfig};
pub use skin::{detect_skin_contact, rgb_to_cbcr, SkinClassifier, SkinConfig};

/// Observation frames sampled before the contact frame.
pub const DEFAULT_OBSERVATION_FRAMES: usize = 10;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum AnnotationError {
    #[error("hand and object boxes do not overlap")]
    NoOverlap,
    #[error("image size mismatch: {a:?} vs {b:?}")]
    SizeMismatch { a: (usize, usize), b: (usize, usize) },
    #[error("cannot load image {path}: {message}")]
    ImageLoad { path: PathBuf, message: String },
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// One annotation work unit, as stored in `sequences.jsonl`. Frame paths are
/// relative to the file's directory unless absolute. `observations` runs from
/// the earliest frame o₁ to o_n, the frame just before contact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameSequence {
    pub id: String,
    pub contact_frame: String,
    pub observations: Vec<String>,
    pub hand_bbox: BBox,
    pub object_bbox: BBox,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    LowConfidence,
    Failed,
}

/// Pipeline output. Step `k` maps frame `k` to frame `k + 1` along
/// (𝒞, o_n, ..., o₁). The step lists are empty when `status` is `Failed`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotationResult {
    pub status: Status,
    pub points_initial: Vec<Point2D>,
    pub points_contact: Vec<Point2D>,
    #[serde(rename = "homographies")]
    pub per_step_homographies: Vec<Homography>,
    #[serde(rename = "inlier_counts")]
    pub per_step_inlier_counts: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl AnnotationResult {
    fn failed(reason: impl Into<String>) -> Self {
        Self {
            status: Status::Failed,
            points_initial: Vec::new(),
            points_contact: Vec::new(),
            per_step_homographies: Vec::new(),
            per_step_inlier_counts: Vec::new(),
            reason: Some(reason.into()),
        }
    }

    /// End-to-end transform 𝒞 → o₁.
    pub fn chain(&self) -> Homography {
        self.per_step_homographies
            .iter()
            .fold(Homography::identity(), |acc, h| compose(&acc, h))
    }

    /// Contact points carried one step at a time: entry `k` holds the points
    /// in the frame reached after step `k` (o_n first, o₁ last).
    pub fn per_frame_points(&self) -> Result<Vec<Vec<Point2D>>, GeometryError> {
        let mut current = self.points_contact.clone();
        let mut out = Vec::with_capacity(self.per_step_homographies.len());
        for h in &self.per_step_homographies {
            current = current
                .iter()
                .map(|&p| h.apply(p))
                .collect::<Result<_, _>>()?;
            out.push(current.clone());
        }
        Ok(out)
    }
}

/// One line of `annotations.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub id: String,
    #[serde(flatten)]
    pub result: AnnotationResult,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    #[serde(default)]
    pub skin: SkinConfig,
    #[serde(default)]
    pub matcher: MatcherConfig,
    pub ransac: RansacParams,
    /// Hand and object boxes are grown by this many pixels before masking.
    #[serde(default = "default_mask_dilation")]
    pub mask_dilation: f64,
}

fn default_mask_dilation() -> f64 {
    8.0
}

impl PipelineConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            skin: SkinConfig::default(),
            matcher: MatcherConfig::default(),
            ransac: RansacParams::with_seed(seed),
            mask_dilation: default_mask_dilation(),
        }
    }
}

fn step_seed(seed: u64, step: usize) -> u64 {
    seed.wrapping_add((step as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn transform_box(h: &Homography, b: &BBox) -> Option<BBox> {
    let corners: Option<Vec<Point2D>> = b.corners().iter().map(|&p| h.apply(p).ok()).collect();
    BBox::enclosing(&corners?)
}

/// Runs the pipeline on decoded frames with the built-in skin rule and
/// matcher from `cfg`.
pub fn annotate_frames(
    contact: &RgbImage,
    observations: &[RgbImage],
    hand_bbox: &BBox,
    object_bbox: &BBox,
    cfg: &PipelineConfig,
) -> AnnotationResult {
    annotate_frames_with(
        contact,
        observations,
        hand_bbox,
        object_bbox,
        cfg,
        &cfg.skin,
        &cfg.matcher,
    )
}

/// Same as [`annotate_frames`] with caller-supplied skin classifier and
/// matcher. `observations` is ordered o₁..o_n.
pub fn annotate_frames_with(
    contact: &RgbImage,
    observations: &[RgbImage],
    hand_bbox: &BBox,
    object_bbox: &BBox,
    cfg: &PipelineConfig,
    classifier: &dyn SkinClassifier,
    matcher: &dyn FeatureMatcher,
) -> AnnotationResult {
    if observations.is_empty() {
        return AnnotationResult::failed("no observation frames");
    }
    if let Err(e) = cfg.ransac.validate() {
        return AnnotationResult::failed(e.to_string());
    }
    let size = contact.dimensions();
    if let Some(bad) = observations.iter().find(|o| o.dimensions() != size) {
        let e = AnnotationError::SizeMismatch {
            a: (size.0 as usize, size.1 as usize),
            b: (bad.width() as usize, bad.height() as usize),
        };
        return AnnotationResult::failed(e.to_string());
    }
    let points_contact = match detect_skin_contact(
        contact,
        hand_bbox,
        object_bbox,
        classifier,
        cfg.skin.min_area,
    ) {
        Ok(p) if p.is_empty() => return AnnotationResult::failed("no contact points found"),
        Ok(p) => p,
        Err(e) => return AnnotationResult::failed(e.to_string()),
    };

    let dims = (size.0 as usize, size.1 as usize);
    let frames: Vec<&RgbImage> = std::iter::once(contact)
        .chain(observations.iter().rev())
        .collect();
    let mut boxes = vec![*hand_bbox, *object_bbox];
    let mut homographies = Vec::with_capacity(observations.len());
    let mut inlier_counts = Vec::with_capacity(observations.len());
    let mut fell_back = false;
    for (step, pair) in frames.windows(2).enumerate() {
        let mask = build_dynamic_mask(dims, &boxes, cfg.mask_dilation);
        let params = RansacParams {
            rng_seed: step_seed(cfg.ransac.rng_seed, step),
            ..cfg.ransac
        };
        let estimate = matcher
            .match_frames(pair[0], pair[1], &mask)
            .ok()
            .and_then(|corrs| ransac_homography(&corrs, &params).ok());
        let (h, count) = match estimate {
            Some(r) => (r.homography, r.inliers.len()),
            None => {
                fell_back = true;
                (Homography::identity(), 0)
            }
        };
        if let Some(moved) = boxes
            .iter()
            .map(|b| transform_box(&h, b))
            .collect::<Option<Vec<_>>>()
        {
            boxes = moved;
        }
        homographies.push(h);
        inlier_counts.push(count);
    }

    let mut result = AnnotationResult {
        status: if fell_back {
            Status::LowConfidence
        } else {
            Status::Ok
        },
        points_initial: Vec::new(),
        points_contact,
        per_step_homographies: homographies,
        per_step_inlier_counts: inlier_counts,
        reason: fell_back.then(|| "homography estimation fell back to identity".to_string()),
    };
    let chain = result.chain();
    match result
        .points_contact
        .iter()
        .map(|&p| chain.apply(p))
        .collect::<Result<Vec<_>, _>>()
    {
        Ok(points) => result.points_initial = points,
        Err(e) => return AnnotationResult::failed(e.to_string()),
    }
    result
}

fn resolve(base_dir: &Path, reference: &str) -> PathBuf {
    let p = Path::new(reference);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base_dir.join(p)
    }
}

fn load_rgb(path: &Path) -> Result<RgbImage, AnnotationError> {
    image::open(path)
        .map(|img| img.to_rgb8())
        .map_err(|e| AnnotationError::ImageLoad {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
}

/// Loads the frames of `seq` (relative to `base_dir`) and runs the
/// pipeline. Load failures produce a `Failed` result with the reason.
pub fn annotate_sequence(
    seq: &FrameSequence,
    base_dir: &Path,
    cfg: &PipelineConfig,
) -> AnnotationResult {
    let contact = match load_rgb(&resolve(base_dir, &seq.contact_frame)) {
        Ok(img) => img,
        Err(e) => return AnnotationResult::failed(e.to_string()),
    };
    let mut observations = Vec::with_capacity(seq.observations.len());
    for r in &seq.observations {
        match load_rgb(&resolve(base_dir, r)) {
            Ok(img) => observations.push(img),
            Err(e) => return AnnotationResult::failed(e.to_string()),
        }
    }
    annotate_frames(
        &contact,
        &observations,
        &seq.hand_bbox,
        &seq.object_bbox,
        cfg,
    )
}

/// Parses `sequences.jsonl`. Blank lines are skipped; any malformed line is
/// an error.
pub fn read_sequences(path: &Path) -> Result<Vec<FrameSequence>, AnnotationError> {
    let io_err = |e: std::io::Error| AnnotationError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let reader = BufReader::new(File::open(path).map_err(io_err)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let seq = serde_json::from_str(&line).map_err(|e| AnnotationError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(seq);
    }
    Ok(out)
}

pub fn write_sequences(path: &Path, seqs: &[FrameSequence]) -> Result<(), AnnotationError> {
    write_jsonl(path, seqs)
}

pub fn write_annotations(path: &Path, records: &[AnnotationRecord]) -> Result<(), AnnotationError> {
    write_jsonl(path, records)
}

pub fn read_annotations(path: &Path) -> Result<Vec<AnnotationRecord>, AnnotationError> {
    let text = std::fs::read_to_string(path).map_err(|e| AnnotationError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| AnnotationError::Parse {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), AnnotationError> {
    let io_err = |e: std::io::Error| AnnotationError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    for item in items {
        let line = serde_json::to_string(item).map_err(|e| AnnotationError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        writeln!(w, "{line}").map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}
