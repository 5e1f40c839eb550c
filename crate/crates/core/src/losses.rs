//! Training objective for dense affordance maps: a soft-target sigmoid focal
//! loss plus a KL term, each returned with its analytic gradient.
//!
//! Predictions are post-sigmoid probabilities. The focal term uses the soft
//! forms `alpha_t = alpha*g + (1-alpha)*(1-g)` and
//! `p_t = p*g + (1-p)*(1-g)` and evaluates the nonnegative
//! `-alpha_t * (1-p_t)^gamma * ln(p_t)` per pixel.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::compensated_sum;
use crate::types::{check_same_dims, Heatmap, MapError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("invalid loss config: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Map(#[from] MapError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub lambda_focal: f64,
    pub lambda_kl: f64,
    /// Clamp margin for focal probabilities and stabilizer for the KL ratio.
    pub epsilon: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha: 0.25,
            gamma: 2.0,
            lambda_focal: 0.1,
            lambda_kl: 0.1,
            epsilon: 1e-12,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<(), LossError> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(LossError::InvalidConfig("alpha must lie in (0, 1)"));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(LossError::InvalidConfig("gamma must be >= 0"));
        }
        if !(self.lambda_focal >= 0.0 && self.lambda_kl >= 0.0) {
            return Err(LossError::InvalidConfig("loss weights must be >= 0"));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 0.5) {
            return Err(LossError::InvalidConfig("epsilon must lie in (0, 0.5)"));
        }
        Ok(())
    }
}

/// Scalar loss and its gradient with respect to every prediction value.
#[derive(Clone, Debug, PartialEq)]
pub struct LossValue {
    pub loss: f64,
    pub grad: Vec<f64>,
}

/// Focal term over raw slices. No dimension or config checks.
pub fn focal_terms(pred: &[f64], gt: &[f64], cfg: &LossConfig) -> LossValue {
    let (alpha, gamma, eps) = (cfg.alpha, cfg.gamma, cfg.epsilon);
    let mut grad = Vec::with_capacity(pred.len());
    let terms: Vec<f64> = pred
        .iter()
        .zip(gt)
        .map(|(&p_raw, &g)| {
            let p = p_raw.clamp(eps, 1.0 - eps);
            let alpha_t = alpha * g + (1.0 - alpha) * (1.0 - g);
            let p_t = p * g + (1.0 - p) * (1.0 - g);
            let q = 1.0 - p_t;
            let log_pt = p_t.ln();
            let loss = -alpha_t * q.powf(gamma) * log_pt;
            // d/dp_t of -alpha_t q^gamma ln p_t
            let focusing = if gamma == 0.0 || q == 0.0 {
                0.0
            } else {
                gamma * q.powf(gamma - 1.0) * log_pt
            };
            let d_pt = alpha_t * (focusing - q.powf(gamma) / p_t);
            let d_p = if p == p_raw {
                d_pt * (2.0 * g - 1.0)
            } else {
                0.0
            };
            grad.push(d_p);
            loss
        })
        .collect();
    LossValue {
        loss: compensated_sum(terms),
        grad,
    }
}

/// KL term `sum g ln((g+eps)/(p+eps))` over raw slices.
pub fn kl_terms(pred: &[f64], gt: &[f64], cfg: &LossConfig) -> LossValue {
    let eps = cfg.epsilon;
    let grad = pred.iter().zip(gt).map(|(&p, &g)| -g / (p + eps)).collect();
    let loss = compensated_sum(
        pred.iter()
            .zip(gt)
            .map(|(&p, &g)| g * ((g + eps) / (p + eps)).ln()),
    );
    LossValue { loss, grad }
}

/// Weighted sum of [`focal_terms`] and [`kl_terms`].
pub fn total_terms(pred: &[f64], gt: &[f64], cfg: &LossConfig) -> LossValue {
    let focal = focal_terms(pred, gt, cfg);
    let kl = kl_terms(pred, gt, cfg);
    LossValue {
        loss: cfg.lambda_focal * focal.loss + cfg.lambda_kl * kl.loss,
        grad: focal
            .grad
            .iter()
            .zip(&kl.grad)
            .map(|(f, k)| cfg.lambda_focal * f + cfg.lambda_kl * k)
            .collect(),
    }
}

fn checked(
    pred: &Heatmap,
    gt: &Heatmap,
    cfg: &LossConfig,
    f: fn(&[f64], &[f64], &LossConfig) -> LossValue,
) -> Result<LossValue, LossError> {
    cfg.validate()?;
    check_same_dims(pred.dims(), gt.dims())?;
    Ok(f(pred.values(), gt.values(), cfg))
}

/// Soft sigmoid focal loss. `pred` holds probabilities, `gt` soft targets in
/// `[0, 1]`.
pub fn focal_loss(pred: &Heatmap, gt: &Heatmap, cfg: &LossConfig) -> Result<LossValue, LossError> {
    checked(pred, gt, cfg, focal_terms)
}

/// KL divergence of the prediction from the target. Both maps are expected
/// to be distributions.
pub fn kl_loss(pred: &Heatmap, gt: &Heatmap, cfg: &LossConfig) -> Result<LossValue, LossError> {
    checked(pred, gt, cfg, kl_terms)
}

/// `lambda_focal * focal + lambda_kl * kl`.
pub fn total_objective(
    pred: &Heatmap,
    gt: &Heatmap,
    cfg: &LossConfig,
) -> Result<LossValue, LossError> {
    checked(pred, gt, cfg, total_terms)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GradientCheck {
    /// max |analytic - numeric| / max(|numeric|, 1e-8)
    pub max_relative: f64,
    /// max |analytic - numeric|
    pub max_absolute: f64,
}

/// Compares the analytic gradient of `loss` at `pred` with central
/// differences of step `h`, one element at a time.
pub fn check_gradient<F>(loss: F, pred: &[f64], h: f64) -> GradientCheck
where
    F: Fn(&[f64]) -> LossValue,
{
    assert!(h > 0.0, "finite-difference step must be positive");
    let analytic = loss(pred).grad;
    let mut probe = pred.to_vec();
    let mut out = GradientCheck {
        max_relative: 0.0,
        max_absolute: 0.0,
    };
    for i in 0..pred.len() {
        probe[i] = pred[i] + h;
        let up = loss(&probe).loss;
        probe[i] = pred[i] - h;
        let down = loss(&probe).loss;
        probe[i] = pred[i];
        let numeric = (up - down) / (2.0 * h);
        let abs = (analytic[i] - numeric).abs();
        out.max_absolute = out.max_absolute.max(abs);
        out.max_relative = out.max_relative.max(abs / numeric.abs().max(1e-8));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn map(vals: &[f64]) -> Heatmap {
        Heatmap::new(vals.len(), 1, vals.to_vec()).unwrap()
    }

    #[test]
    fn focal_hand_value() {
        let cfg = LossConfig::default();
        let v = focal_loss(&map(&[0.5]), &map(&[1.0]), &cfg).unwrap();
        let expected = 0.25 * 0.25 * -(0.5f64.ln());
        assert!((v.loss - expected).abs() < 1e-15);
        assert!((v.loss - 0.043322).abs() < 1e-6);
    }

    #[test]
    fn focal_gamma_zero_is_half_bce() {
        let cfg = LossConfig {
            alpha: 0.5,
            gamma: 0.0,
            ..Default::default()
        };
        let p = [0.1, 0.4, 0.7, 0.95];
        let g = [0.0, 0.3, 1.0, 0.6];
        let v = focal_loss(&map(&p), &map(&g), &cfg).unwrap();
        // soft cross-entropy on p_t, computed directly
        let bce: f64 = p
            .iter()
            .zip(&g)
            .map(|(&p, &g)| -(p * g + (1.0 - p) * (1.0 - g)).ln())
            .sum();
        assert!((v.loss - 0.5 * bce).abs() < 1e-12);
    }

    #[test]
    fn focal_perfect_prediction_is_a_fixed_point() {
        let cfg = LossConfig::default();
        let g = [0.0, 1.0, 1.0, 0.0];
        let v = focal_loss(&map(&g), &map(&g), &cfg).unwrap();
        assert!(v.loss.abs() < 1e-20);
        assert!(v.grad.iter().all(|d| d.abs() < 1e-20));
        let check = check_gradient(|p| focal_terms(p, &g, &cfg), &g, 1e-5);
        assert!(check.max_absolute <= 1e-8, "{check:?}");
    }

    #[test]
    fn kl_examples() {
        let cfg = LossConfig::default();
        let g = [0.2, 0.3, 0.5];
        let v = kl_loss(&map(&g), &map(&g), &cfg).unwrap();
        assert!(v.loss.abs() <= 1e-9);

        let v = kl_loss(&map(&[0.25, 0.75]), &map(&[1.0, 0.0]), &cfg).unwrap();
        assert!((v.loss - 1.386294).abs() < 1e-6);

        let v = kl_loss(&map(&[0.5, 0.5]), &map(&[1.0, 0.0]), &cfg).unwrap();
        assert!((v.grad[0] + 2.0).abs() < 1e-10);
        assert_eq!(v.grad[1], 0.0);
    }

    #[test]
    fn total_is_weighted_sum() {
        let cfg = LossConfig::default();
        let p = map(&[0.2, 0.3, 0.5]);
        let g = map(&[0.1, 0.6, 0.3]);
        let f = focal_loss(&p, &g, &cfg).unwrap();
        let k = kl_loss(&p, &g, &cfg).unwrap();
        let t = total_objective(&p, &g, &cfg).unwrap();
        assert!((t.loss - 0.1 * (f.loss + k.loss)).abs() < 1e-15);
        for i in 0..3 {
            assert!((t.grad[i] - 0.1 * (f.grad[i] + k.grad[i])).abs() < 1e-15);
        }
        let no_kl = LossConfig {
            lambda_kl: 0.0,
            ..cfg
        };
        let t = total_objective(&p, &g, &no_kl).unwrap();
        assert_eq!(t.loss, 0.1 * f.loss);
    }

    #[test]
    fn total_is_linear_in_weights() {
        let p = map(&[0.2, 0.3, 0.5]);
        let g = map(&[0.1, 0.6, 0.3]);
        let at = |lf: f64, lk: f64| {
            let cfg = LossConfig {
                lambda_focal: lf,
                lambda_kl: lk,
                ..Default::default()
            };
            total_objective(&p, &g, &cfg).unwrap().loss
        };
        let combo = at(0.3, 0.7);
        let parts = 0.3 * at(1.0, 0.0) + 0.7 * at(0.0, 1.0);
        assert!((combo - parts).abs() < 1e-14);
    }

    #[test]
    fn mismatched_dims_and_bad_config() {
        let cfg = LossConfig::default();
        assert!(matches!(
            focal_loss(&map(&[0.5]), &map(&[0.5, 0.5]), &cfg),
            Err(LossError::Map(_))
        ));
        let bad = LossConfig {
            alpha: 1.5,
            ..cfg
        };
        assert!(matches!(
            kl_loss(&map(&[0.5]), &map(&[0.5]), &bad),
            Err(LossError::InvalidConfig(_))
        ));
    }

    fn random_pair(rng: &mut ChaCha8Rng, n: usize) -> (Vec<f64>, Vec<f64>) {
        let p: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..0.95)).collect();
        let g: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        (p, g)
    }

    #[test]
    fn gradients_match_finite_differences_on_4x4() {
        let cfg = LossConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (p, g) = random_pair(&mut rng, 16);
        let kl = check_gradient(|x| kl_terms(x, &g, &cfg), &p, 1e-5);
        assert!(kl.max_relative <= 1e-4, "{kl:?}");
        let focal = check_gradient(|x| focal_terms(x, &g, &cfg), &p, 1e-5);
        assert!(focal.max_relative <= 1e-4, "{focal:?}");
    }

    #[test]
    fn focal_is_nonnegative() {
        let cfg = LossConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let p: Vec<f64> = (0..9).map(|_| rng.random_range(0.0..=1.0)).collect();
            let g: Vec<f64> = (0..9).map(|_| rng.random_range(0.0..=1.0)).collect();
            assert!(focal_terms(&p, &g, &cfg).loss >= 0.0);
        }
    }
}
