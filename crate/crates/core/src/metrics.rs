//! Benchmark metrics: KLD, SIM, SIM_part and NSS, plus batch aggregation.
//!
//! KLD and SIM compare two distributions; SIM_part measures how much
//! prediction mass falls inside a binary part mask; NSS is the
//! ground-truth-weighted mean of the standardized prediction. All
//! reductions use compensated summation in row-major order.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::heatmap::{render_target, resample_bilinear, HeatmapError};
use crate::numeric::{compensated_sum, mean_std};
use crate::record::DatasetRecord;
use crate::types::{check_same_dims, BinaryMask, Heatmap, MapError, ProbabilityMap};

pub const DEFAULT_EPSILON: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("zero-variance prediction")]
    ZeroVariancePrediction,
    #[error("zero-mass ground truth")]
    ZeroMassGroundTruth,
    #[error("part mask has no positive pixel")]
    EmptyMask,
    #[error("epsilon must be positive, got {0}")]
    InvalidEpsilon(f64),
    #[error("prediction is {prediction:?} but ground truth is {ground_truth:?} and resampling is disabled")]
    ResolutionMismatch {
        prediction: (usize, usize),
        ground_truth: (usize, usize),
    },
    #[error("cannot aggregate an empty score list")]
    EmptyBatch,
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Heatmap(#[from] HeatmapError),
}

/// A metric failure tagged with the record it came from.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("record {record_id}: {source}")]
pub struct SampleError {
    pub record_id: String,
    #[source]
    pub source: MetricError,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricConfig {
    /// Stabilizer inside the KLD logarithm.
    pub epsilon: f64,
    /// Mass-normalize predictions before KLD/SIM/SIM_part. When off, the
    /// prediction must already be a distribution.
    pub normalize_inputs: bool,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            normalize_inputs: true,
        }
    }
}

impl MetricConfig {
    fn validate(&self) -> Result<(), MetricError> {
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(MetricError::InvalidEpsilon(self.epsilon));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResamplePolicy {
    /// Bilinearly resample the prediction to the ground-truth resolution.
    #[default]
    PredictionToGroundTruth,
    /// Treat a resolution mismatch as an error.
    Reject,
}

/// Everything that determines a score; embedded in every report.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluationConfig {
    pub sigma: f64,
    pub epsilon: f64,
    pub normalize_inputs: bool,
    pub resample_policy: ResamplePolicy,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            sigma: crate::heatmap::DEFAULT_SIGMA,
            epsilon: DEFAULT_EPSILON,
            normalize_inputs: true,
            resample_policy: ResamplePolicy::default(),
        }
    }
}

impl EvaluationConfig {
    pub fn metric_config(&self) -> MetricConfig {
        MetricConfig {
            epsilon: self.epsilon,
            normalize_inputs: self.normalize_inputs,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricScores {
    pub kld: f64,
    pub sim: f64,
    pub sim_part: Option<f64>,
    pub nss: f64,
}

/// `sum_i gt_i * ln(eps + gt_i / (eps + pred_i))`. Lower is better.
pub fn kld(
    pred: &ProbabilityMap,
    gt: &ProbabilityMap,
    cfg: &MetricConfig,
) -> Result<f64, MetricError> {
    cfg.validate()?;
    check_same_dims(pred.dims(), gt.dims())?;
    let eps = cfg.epsilon;
    Ok(compensated_sum(
        gt.values()
            .iter()
            .zip(pred.values())
            .map(|(&g, &p)| g * (eps + g / (eps + p)).ln()),
    ))
}

/// Histogram intersection `sum_i min(pred_i, gt_i)`, in `[0, 1]`.
pub fn sim(pred: &ProbabilityMap, gt: &ProbabilityMap) -> Result<f64, MetricError> {
    check_same_dims(pred.dims(), gt.dims())?;
    Ok(compensated_sum(
        gt.values()
            .iter()
            .zip(pred.values())
            .map(|(&g, &p)| g.min(p)),
    ))
}

/// Normalized scanpath saliency: the prediction is standardized with its
/// population mean and standard deviation, then averaged with the ground
/// truth as weights.
pub fn nss(pred: &Heatmap, gt: &Heatmap) -> Result<f64, MetricError> {
    check_same_dims(pred.dims(), gt.dims())?;
    let (lo, hi) = pred.min_max();
    if lo == hi {
        return Err(MetricError::ZeroVariancePrediction);
    }
    let mass = gt.sum();
    if !(mass > 0.0) {
        return Err(MetricError::ZeroMassGroundTruth);
    }
    let (mean, std) = mean_std(pred.values());
    if !(std > 0.0) {
        return Err(MetricError::ZeroVariancePrediction);
    }
    let weighted = compensated_sum(
        pred.values()
            .iter()
            .zip(gt.values())
            .map(|(&p, &g)| (p - mean) / std * g),
    );
    Ok(weighted / mass)
}

/// `sum_i min(pred_i, mask_i)` with a binary mask: the prediction mass that
/// lands inside the functional part.
pub fn sim_part(pred: &ProbabilityMap, part: &BinaryMask) -> Result<f64, MetricError> {
    check_same_dims(pred.dims(), part.dims())?;
    if part.count_ones() == 0 {
        return Err(MetricError::EmptyMask);
    }
    Ok(compensated_sum(
        pred.values()
            .iter()
            .zip(part.values())
            .map(|(&p, &m)| p.min(m as f64)),
    ))
}

/// Scores one prediction against the Gaussian target rendered from the
/// record's points at `image_size`.
///
/// The prediction is resampled to the target resolution when needed (per
/// `cfg.resample_policy`). NSS uses the raw maps; KLD, SIM and SIM_part use
/// distributions.
pub fn evaluate_sample(
    pred: &Heatmap,
    record: &DatasetRecord,
    image_size: (usize, usize),
    part_mask: Option<&BinaryMask>,
    cfg: &EvaluationConfig,
) -> Result<MetricScores, SampleError> {
    score_sample(pred, record, image_size, part_mask, cfg).map_err(|source| SampleError {
        record_id: record.id.clone(),
        source,
    })
}

fn score_sample(
    pred: &Heatmap,
    record: &DatasetRecord,
    (width, height): (usize, usize),
    part_mask: Option<&BinaryMask>,
    cfg: &EvaluationConfig,
) -> Result<MetricScores, MetricError> {
    let metric_cfg = cfg.metric_config();
    metric_cfg.validate()?;
    let gt_raw = render_target(&record.points, cfg.sigma, width, height)?;
    let pred = if pred.dims() == (width, height) {
        pred.clone()
    } else {
        match cfg.resample_policy {
            ResamplePolicy::PredictionToGroundTruth => resample_bilinear(pred, width, height)?,
            ResamplePolicy::Reject => {
                return Err(MetricError::ResolutionMismatch {
                    prediction: pred.dims(),
                    ground_truth: (width, height),
                })
            }
        }
    };
    let gt = ProbabilityMap::normalize(&gt_raw)?;
    let pred_dist = if cfg.normalize_inputs {
        ProbabilityMap::normalize(&pred)?
    } else {
        ProbabilityMap::try_from_heatmap(pred.clone())?
    };
    Ok(MetricScores {
        kld: kld(&pred_dist, &gt, &metric_cfg)?,
        sim: sim(&pred_dist, &gt)?,
        sim_part: part_mask.map(|m| sim_part(&pred_dist, m)).transpose()?,
        nss: nss(&pred, &gt_raw)?,
    })
}

/// Mean of one metric over the samples where it is defined.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricMean {
    pub mean: Option<f64>,
    pub valid: usize,
}

impl MetricMean {
    fn over(values: impl Iterator<Item = Option<f64>>) -> Self {
        let defined: Vec<f64> = values.flatten().collect();
        let valid = defined.len();
        let mean = (valid > 0).then(|| compensated_sum(defined) / valid as f64);
        Self { mean, valid }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub count: usize,
    pub kld: MetricMean,
    pub sim: MetricMean,
    pub sim_part: MetricMean,
    pub nss: MetricMean,
}

/// Arithmetic means in input order.
pub fn aggregate(scores: &[MetricScores]) -> Result<ScoreSummary, MetricError> {
    if scores.is_empty() {
        return Err(MetricError::EmptyBatch);
    }
    Ok(ScoreSummary {
        count: scores.len(),
        kld: MetricMean::over(scores.iter().map(|s| Some(s.kld))),
        sim: MetricMean::over(scores.iter().map(|s| Some(s.sim))),
        sim_part: MetricMean::over(scores.iter().map(|s| s.sim_part)),
        nss: MetricMean::over(scores.iter().map(|s| Some(s.nss))),
    })
}

#[cfg(test)]
#[allow(clippy::approx_constant)]
mod tests {
    use super::*;
    use crate::heatmap::{normalize, render_gaussian, GaussianSpec};
    use crate::record::Split;
    use crate::types::Point2D;
    use proptest::prelude::*;

    fn pm(w: usize, h: usize, v: Vec<f64>) -> ProbabilityMap {
        ProbabilityMap::try_from_heatmap(Heatmap::new(w, h, v).unwrap()).unwrap()
    }

    fn cfg(eps: f64) -> MetricConfig {
        MetricConfig {
            epsilon: eps,
            normalize_inputs: true,
        }
    }

    // Plain left-to-right loops over (row, column), written independently of
    // the library kernels.
    fn naive_kld(p: &[f64], g: &[f64], w: usize, h: usize, eps: f64) -> f64 {
        let mut s = 0.0;
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                s += g[i] * (eps + g[i] / (eps + p[i])).ln();
            }
        }
        s
    }

    #[test]
    fn kld_self_divergence_is_tiny() {
        let g = normalize(
            &render_gaussian(&[Point2D::new(5.0, 4.0)], GaussianSpec::with_sigma(2.0).unwrap(), 12, 9)
                .unwrap(),
        )
        .unwrap();
        let k = kld(&g, &g, &cfg(1e-12)).unwrap();
        assert!(k.abs() <= 1e-6, "{k}");
    }

    #[test]
    fn kld_hand_value() {
        let gt = pm(2, 1, vec![1.0, 0.0]);
        let pred = pm(2, 1, vec![0.5, 0.5]);
        let k = kld(&pred, &gt, &cfg(1e-12)).unwrap();
        assert!((k - 0.693147).abs() < 1e-6);
        let exact = (1e-12 + 1.0 / (1e-12 + 0.5_f64)).ln();
        assert_eq!(k, exact);
    }

    #[test]
    fn kld_uniform_vs_delta_matches_naive() {
        let g = vec![0.25; 4];
        let p = vec![1.0, 0.0, 0.0, 0.0];
        let k = kld(&pm(2, 2, p.clone()), &pm(2, 2, g.clone()), &cfg(1e-6)).unwrap();
        let oracle = naive_kld(&p, &g, 2, 2, 1e-6);
        assert!((k - oracle).abs() <= 1e-12 * oracle.abs());
    }

    #[test]
    fn sim_examples() {
        let g = pm(2, 1, vec![0.5, 0.5]);
        assert_eq!(sim(&g, &g).unwrap(), 1.0);
        let a = pm(2, 1, vec![1.0, 0.0]);
        let b = pm(2, 1, vec![0.0, 1.0]);
        assert_eq!(sim(&a, &b).unwrap(), 0.0);
        let p = pm(2, 1, vec![0.8, 0.2]);
        assert!((sim(&p, &g).unwrap() - 0.7).abs() < 1e-15);
    }

    #[test]
    fn nss_examples() {
        let p = Heatmap::new(2, 2, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let v = nss(&p, &p).unwrap();
        assert!((v - 1.73205).abs() < 1e-5);
        assert!((v - 3f64.sqrt()).abs() < 1e-12);

        let flat = Heatmap::filled(4, 4, 0.3).unwrap();
        let g = Heatmap::filled(4, 4, 1.0).unwrap();
        assert_eq!(
            nss(&flat, &g).unwrap_err().to_string(),
            "zero-variance prediction"
        );
        let zero = Heatmap::filled(2, 2, 0.0).unwrap();
        assert_eq!(
            nss(&p, &zero).unwrap_err().to_string(),
            "zero-mass ground truth"
        );
    }

    #[test]
    fn sim_part_examples() {
        let mask = BinaryMask::new(2, 2, vec![1, 1, 0, 0]).unwrap();
        assert_eq!(sim_part(&pm(2, 2, vec![1.0, 0.0, 0.0, 0.0]), &mask).unwrap(), 1.0);
        assert_eq!(sim_part(&pm(2, 2, vec![0.0, 0.0, 0.0, 1.0]), &mask).unwrap(), 0.0);
        assert_eq!(sim_part(&pm(2, 2, vec![0.25, 0.25, 0.5, 0.0]), &mask).unwrap(), 0.5);
        let empty = BinaryMask::filled(2, 2, false).unwrap();
        assert_eq!(
            sim_part(&pm(2, 2, vec![1.0, 0.0, 0.0, 0.0]), &empty),
            Err(MetricError::EmptyMask)
        );
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let a = pm(2, 1, vec![0.5, 0.5]);
        let b = pm(1, 2, vec![0.5, 0.5]);
        assert!(matches!(sim(&a, &b), Err(MetricError::Map(MapError::DimensionMismatch { .. }))));
        assert!(kld(&a, &b, &cfg(1e-12)).is_err());
        assert!(nss(&a, &b).is_err());
    }

    fn record(points: Vec<Point2D>) -> DatasetRecord {
        DatasetRecord {
            id: "s1".into(),
            image_ref: "x.png".into(),
            object_category: "mug".into(),
            action: "grasp".into(),
            points,
            part_mask_ref: None,
            split: Split::Test,
            source: "unit".into(),
        }
    }

    #[test]
    fn self_evaluation_is_perfect() {
        let rec = record(vec![Point2D::new(12.0, 9.0)]);
        let eval = EvaluationConfig {
            sigma: 3.0,
            ..Default::default()
        };
        let gt = render_target(&rec.points, 3.0, 32, 24).unwrap();
        let mut mask = BinaryMask::filled(32, 24, false).unwrap();
        for v in 0..24 {
            for u in 8..16 {
                mask.set(u, v, true);
            }
        }
        let s = evaluate_sample(&gt, &rec, (32, 24), Some(&mask), &eval).unwrap();
        assert_eq!(s.sim, 1.0);
        assert!(s.kld.abs() <= 1e-6);
        let g = normalize(&gt).unwrap();
        let inside: f64 = (0..g.len())
            .filter(|&i| mask.values()[i] == 1)
            .map(|i| g.values()[i])
            .sum();
        assert!((s.sim_part.unwrap() - inside).abs() < 1e-12);
    }

    #[test]
    fn uniform_prediction_matches_naive_sim() {
        let rec = record(vec![Point2D::new(4.0, 3.0)]);
        let eval = EvaluationConfig {
            sigma: 1.5,
            ..Default::default()
        };
        let pred = Heatmap::filled(10, 8, 2.0).unwrap();
        let err = evaluate_sample(&pred, &rec, (10, 8), None, &eval).unwrap_err();
        // A constant map has no NSS.
        assert_eq!(err.source, MetricError::ZeroVariancePrediction);
        assert_eq!(err.record_id, "s1");

        let gt = normalize(&render_target(&rec.points, 1.5, 10, 8).unwrap()).unwrap();
        let uniform = pm(10, 8, vec![1.0 / 80.0; 80]);
        let mut oracle = 0.0;
        for i in 0..80 {
            oracle += (1.0f64 / 80.0).min(gt.values()[i]);
        }
        let s = sim(&uniform, &gt).unwrap();
        assert!((s - oracle).abs() <= 1e-12 * oracle);
    }

    #[test]
    fn missing_mask_leaves_sim_part_undefined() {
        let rec = record(vec![Point2D::new(4.0, 3.0)]);
        let pred = Heatmap::from_fn(10, 8, |u, v| (u + 2 * v) as f64).unwrap();
        let s = evaluate_sample(&pred, &rec, (10, 8), None, &EvaluationConfig::default()).unwrap();
        assert!(s.sim_part.is_none());
        assert!(s.nss.is_finite() && s.kld.is_finite());
    }

    #[test]
    fn predictions_are_resampled_to_target_size() {
        let rec = record(vec![Point2D::new(8.0, 6.0)]);
        let eval = EvaluationConfig {
            sigma: 2.0,
            ..Default::default()
        };
        let pred = render_gaussian(&[Point2D::new(4.0, 3.0)], GaussianSpec::with_sigma(1.0).unwrap(), 9, 7).unwrap();
        let s = evaluate_sample(&pred, &rec, (17, 13), None, &eval).unwrap();
        assert!(s.sim > 0.5);
        let reject = EvaluationConfig {
            resample_policy: ResamplePolicy::Reject,
            ..eval
        };
        assert!(matches!(
            evaluate_sample(&pred, &rec, (17, 13), None, &reject).unwrap_err().source,
            MetricError::ResolutionMismatch { .. }
        ));
    }

    #[test]
    fn unnormalized_prediction_rejected_without_normalization() {
        let rec = record(vec![Point2D::new(1.0, 1.0)]);
        let eval = EvaluationConfig {
            sigma: 1.0,
            normalize_inputs: false,
            ..Default::default()
        };
        let pred = Heatmap::from_fn(3, 3, |u, _| u as f64).unwrap();
        assert!(matches!(
            evaluate_sample(&pred, &rec, (3, 3), None, &eval).unwrap_err().source,
            MetricError::Map(MapError::NotNormalized { .. })
        ));
    }

    fn scores(sim: f64, sim_part: Option<f64>) -> MetricScores {
        MetricScores {
            kld: 1.0,
            sim,
            sim_part,
            nss: 2.0,
        }
    }

    #[test]
    fn aggregate_examples() {
        let s = aggregate(&[scores(0.2, None), scores(0.4, None)]).unwrap();
        assert!((s.sim.mean.unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(s.count, 2);

        let s = aggregate(&[scores(0.1, Some(0.5)), scores(0.1, None), scores(0.1, Some(0.7))])
            .unwrap();
        assert_eq!(s.sim_part.valid, 2);
        assert!((s.sim_part.mean.unwrap() - 0.6).abs() < 1e-15);
        assert_eq!(s.sim.valid, 3);

        let one = scores(0.37, Some(0.81));
        let s = aggregate(&[one]).unwrap();
        assert_eq!(s.sim.mean, Some(one.sim));
        assert_eq!(s.sim_part.mean, one.sim_part);
        assert_eq!(s.kld.mean, Some(one.kld));
        assert_eq!(s.nss.mean, Some(one.nss));

        assert_eq!(aggregate(&[]), Err(MetricError::EmptyBatch));
    }

    fn arb_dist(n: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0.0f64..1.0, n).prop_filter_map("zero mass", |v| {
            let s: f64 = v.iter().sum();
            (s > 0.0).then_some(v)
        })
    }

    proptest! {
        #[test]
        fn sim_is_symmetric_and_bounded(a in arb_dist(36), b in arb_dist(36)) {
            let p = normalize(&Heatmap::new(6, 6, a).unwrap()).unwrap();
            let g = normalize(&Heatmap::new(6, 6, b).unwrap()).unwrap();
            let s = sim(&p, &g).unwrap();
            prop_assert!((0.0..=1.0).contains(&s));
            prop_assert_eq!(s, sim(&g, &p).unwrap());
            prop_assert_eq!(sim(&p, &p).unwrap(), 1.0);
        }

        #[test]
        fn kld_self_bound(a in arb_dist(36)) {
            let p = normalize(&Heatmap::new(6, 6, a).unwrap()).unwrap();
            let eps = 1e-12;
            let k = kld(&p, &p, &cfg(eps)).unwrap();
            prop_assert!(k <= p.sum() * (1.0 + eps).ln() + 1e-15);
        }

        #[test]
        fn nss_affine_invariant(a in arb_dist(36), b in arb_dist(36), scale in 0.01f64..100.0, shift in 0.0f64..10.0) {
            let p = Heatmap::new(6, 6, a.clone()).unwrap();
            prop_assume!(p.min_max().0 < p.min_max().1);
            let g = Heatmap::new(6, 6, b).unwrap();
            let q = Heatmap::new(6, 6, a.iter().map(|x| scale * x + shift).collect()).unwrap();
            let n1 = nss(&p, &g).unwrap();
            let n2 = nss(&q, &g).unwrap();
            prop_assert!((n1 - n2).abs() <= 1e-9 * n1.abs().max(1.0));
        }

        #[test]
        fn sim_part_is_masked_mass(a in arb_dist(36), bits in proptest::collection::vec(0u8..2, 36)) {
            prop_assume!(bits.contains(&1));
            let p = normalize(&Heatmap::new(6, 6, a).unwrap()).unwrap();
            let m = BinaryMask::new(6, 6, bits.clone()).unwrap();
            let inside = compensated_sum(p.values().iter().zip(&bits).filter(|(_, &b)| b == 1).map(|(&x, _)| x));
            prop_assert_eq!(sim_part(&p, &m).unwrap(), inside);
        }
    }
}
