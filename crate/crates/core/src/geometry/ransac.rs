use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::homography::{estimate_homography_dlt, symmetric_transfer_error, Correspondence, Homography};
use super::GeometryError;

const SAMPLE_SIZE: usize = 4;

/// RANSAC settings. The seed has no default: every run names its seed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RansacParams {
    /// Inlier bound on the symmetric transfer error, in pixels.
    #[serde(default = "default_threshold")]
    pub reproj_threshold: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
    #[serde(default = "default_min_inliers")]
    pub min_inliers: usize,
    pub rng_seed: u64,
}

fn default_threshold() -> f64 {
    3.0
}

fn default_max_iterations() -> usize {
    2000
}

fn default_confidence() -> f64 {
    0.99
}

fn default_min_inliers() -> usize {
    8
}

impl RansacParams {
    /// Default thresholds with an explicit seed.
    pub fn with_seed(rng_seed: u64) -> Self {
        Self {
            reproj_threshold: default_threshold(),
            max_iterations: default_max_iterations(),
            confidence: default_confidence(),
            min_inliers: default_min_inliers(),
            rng_seed,
        }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.reproj_threshold > 0.0 && self.reproj_threshold.is_finite()) {
            return Err(GeometryError::InvalidParams("reproj_threshold must be > 0"));
        }
        if self.max_iterations == 0 {
            return Err(GeometryError::InvalidParams("max_iterations must be >= 1"));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(GeometryError::InvalidParams("confidence must lie in (0, 1)"));
        }
        if self.min_inliers < SAMPLE_SIZE {
            return Err(GeometryError::InvalidParams("min_inliers must be >= 4"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RansacResult {
    pub homography: Homography,
    /// Indices into the input, ascending.
    pub inliers: Vec<usize>,
    pub iterations: usize,
}

/// Iterations needed to draw one all-inlier sample with probability
/// `confidence` when a fraction `inlier_ratio` of the data are inliers.
fn required_iterations(inlier_ratio: f64, confidence: f64) -> usize {
    let all_inliers = inlier_ratio.powi(SAMPLE_SIZE as i32);
    if all_inliers >= 1.0 {
        return 1;
    }
    if all_inliers <= 0.0 {
        return usize::MAX;
    }
    let n = (1.0 - confidence).ln() / (1.0 - all_inliers).ln();
    if n.is_finite() {
        n.ceil().max(1.0) as usize
    } else {
        usize::MAX
    }
}

struct Hypothesis {
    inliers: Vec<usize>,
    error_sum: f64,
}

/// Robust homography: 4-point DLT hypotheses scored by symmetric transfer
/// error, adaptive stopping at `confidence`, then a DLT refit on the best
/// inlier set. Bitwise deterministic for a fixed seed.
pub fn ransac_homography(
    corrs: &[Correspondence],
    params: &RansacParams,
) -> Result<RansacResult, GeometryError> {
    params.validate()?;
    let n = corrs.len();
    if n < SAMPLE_SIZE {
        return Err(GeometryError::InsufficientCorrespondences(n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed);
    let mut best: Option<Hypothesis> = None;
    let mut budget = params.max_iterations;
    let mut iterations = 0;
    let mut sample = Vec::with_capacity(SAMPLE_SIZE);
    while iterations < budget {
        iterations += 1;
        sample.clear();
        sample.extend(
            rand::seq::index::sample(&mut rng, n, SAMPLE_SIZE)
                .into_iter()
                .map(|i| corrs[i]),
        );
        let Ok(h) = estimate_homography_dlt(&sample) else {
            continue;
        };
        let Ok(h_inv) = h.inverse() else {
            continue;
        };
        let mut inliers = Vec::new();
        let mut error_sum = 0.0;
        for (i, c) in corrs.iter().enumerate() {
            let e = symmetric_transfer_error(&h, &h_inv, c);
            if e <= params.reproj_threshold {
                inliers.push(i);
                error_sum += e;
            }
        }
        let better = match &best {
            None => !inliers.is_empty(),
            Some(b) => {
                inliers.len() > b.inliers.len()
                    || (inliers.len() == b.inliers.len() && error_sum < b.error_sum)
            }
        };
        if better {
            let ratio = inliers.len() as f64 / n as f64;
            budget = budget.min(required_iterations(ratio, params.confidence));
            best = Some(Hypothesis { inliers, error_sum });
        }
    }
    let best_count = best.as_ref().map_or(0, |b| b.inliers.len());
    let best = match best {
        Some(b) if b.inliers.len() >= params.min_inliers => b,
        _ => {
            return Err(GeometryError::NoConsensus {
                best: best_count,
                required: params.min_inliers,
            })
        }
    };
    let inlier_corrs: Vec<Correspondence> = best.inliers.iter().map(|&i| corrs[i]).collect();
    let homography = estimate_homography_dlt(&inlier_corrs)?;
    Ok(RansacResult {
        homography,
        inliers: best.inliers,
        iterations,
    })
}
