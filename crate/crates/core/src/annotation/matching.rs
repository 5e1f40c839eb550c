//! Baseline frame-to-frame matcher: minimum-eigenvalue corners in the first
//! frame, zero-mean normalized cross-correlation search in the second.

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::geometry::Correspondence;
use crate::types::{BinaryMask, Point2D};

use super::AnnotationError;

/// Anything that can produce correspondences between two frames of the same
/// size. `mask` marks pixels of `a` usable for matching.
pub trait FeatureMatcher: Send + Sync {
    fn match_frames(
        &self,
        a: &RgbImage,
        b: &RgbImage,
        mask: &BinaryMask,
    ) -> Result<Vec<Correspondence>, AnnotationError>;
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatcherConfig {
    /// Patches are `(2r+1)^2` pixels.
    pub patch_radius: usize,
    /// Candidates are searched within this many pixels of the corner.
    pub search_radius: usize,
    /// Minimum zero-mean NCC of an accepted match.
    pub min_correlation: f64,
    /// Best/second-best distance ratio, distances being `sqrt(1 - ncc)`.
    pub ratio: f64,
    /// Candidates closer than this (Chebyshev) to the best one are not
    /// considered for the second-best score.
    pub second_best_exclusion: usize,
    pub max_corners: usize,
    pub corner_min_distance: usize,
    /// Corners weaker than this fraction of the strongest are dropped.
    pub corner_quality: f64,
    /// Half-size of the structure-tensor window.
    pub corner_window: usize,
}

impl Default for MatcherConfig {
    fn default() -> Self {
        Self {
            patch_radius: 7,
            search_radius: 48,
            min_correlation: 0.8,
            ratio: 0.8,
            second_best_exclusion: 3,
            max_corners: 100,
            corner_min_distance: 6,
            corner_quality: 0.01,
            corner_window: 2,
        }
    }
}

impl FeatureMatcher for MatcherConfig {
    fn match_frames(
        &self,
        a: &RgbImage,
        b: &RgbImage,
        mask: &BinaryMask,
    ) -> Result<Vec<Correspondence>, AnnotationError> {
        match_features(a, b, mask, self)
    }
}

struct Gray {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Gray {
    fn from_rgb(img: &RgbImage) -> Self {
        let data = img
            .pixels()
            .map(|p| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64)
            .collect();
        Self {
            width: img.width() as usize,
            height: img.height() as usize,
            data,
        }
    }

    fn at(&self, u: usize, v: usize) -> f64 {
        self.data[v * self.width + u]
    }
}

/// Summed-area tables of values and squared values, one extra row/column.
struct Integral {
    stride: usize,
    sum: Vec<f64>,
    sq: Vec<f64>,
}

impl Integral {
    fn new(g: &Gray) -> Self {
        let stride = g.width + 1;
        let mut sum = vec![0.0; stride * (g.height + 1)];
        let mut sq = vec![0.0; stride * (g.height + 1)];
        for v in 0..g.height {
            let (mut rs, mut rq) = (0.0, 0.0);
            for u in 0..g.width {
                let x = g.at(u, v);
                rs += x;
                rq += x * x;
                sum[(v + 1) * stride + u + 1] = sum[v * stride + u + 1] + rs;
                sq[(v + 1) * stride + u + 1] = sq[v * stride + u + 1] + rq;
            }
        }
        Self { stride, sum, sq }
    }

    /// Sum and sum of squares over the square of radius `r` centered at (u, v).
    fn window(&self, u: usize, v: usize, r: usize) -> (f64, f64) {
        let (u0, v0, u1, v1) = (u - r, v - r, u + r + 1, v + r + 1);
        let s = self.stride;
        let f = |t: &[f64]| t[v1 * s + u1] - t[v0 * s + u1] - t[v1 * s + u0] + t[v0 * s + u0];
        (f(&self.sum), f(&self.sq))
    }
}

/// Minimum eigenvalue of the Sobel structure tensor, zero near the border.
fn corner_response(g: &Gray, window: usize) -> Vec<f64> {
    let (w, h) = (g.width, g.height);
    let mut ixx = vec![0.0; w * h];
    let mut iyy = vec![0.0; w * h];
    let mut ixy = vec![0.0; w * h];
    for v in 1..h.saturating_sub(1) {
        for u in 1..w.saturating_sub(1) {
            let gx = (g.at(u + 1, v - 1) + 2.0 * g.at(u + 1, v) + g.at(u + 1, v + 1))
                - (g.at(u - 1, v - 1) + 2.0 * g.at(u - 1, v) + g.at(u - 1, v + 1));
            let gy = (g.at(u - 1, v + 1) + 2.0 * g.at(u, v + 1) + g.at(u + 1, v + 1))
                - (g.at(u - 1, v - 1) + 2.0 * g.at(u, v - 1) + g.at(u + 1, v - 1));
            let i = v * w + u;
            ixx[i] = gx * gx;
            iyy[i] = gy * gy;
            ixy[i] = gx * gy;
        }
    }
    let mut out = vec![0.0; w * h];
    let margin = window + 1;
    if w <= 2 * margin || h <= 2 * margin {
        return out;
    }
    for v in margin..h - margin {
        for u in margin..w - margin {
            let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
            for y in v - window..=v + window {
                for x in u - window..=u + window {
                    let i = y * w + x;
                    a += ixx[i];
                    b += ixy[i];
                    c += iyy[i];
                }
            }
            let half_trace = 0.5 * (a + c);
            let disc = (0.25 * (a - c) * (a - c) + b * b).sqrt();
            out[v * w + u] = half_trace - disc;
        }
    }
    out
}

fn detect_corners(g: &Gray, mask: &BinaryMask, cfg: &MatcherConfig) -> Vec<(usize, usize)> {
    let (w, h) = (g.width, g.height);
    let response = corner_response(g, cfg.corner_window);
    let max = response.iter().cloned().fold(0.0_f64, f64::max);
    if max <= 0.0 {
        return Vec::new();
    }
    let floor = cfg.corner_quality * max;
    let r = cfg.patch_radius;
    let mut candidates = Vec::new();
    for v in r.max(1)..h.saturating_sub(r.max(1)) {
        for u in r.max(1)..w.saturating_sub(r.max(1)) {
            let s = response[v * w + u];
            if s <= floor || !mask.get(u, v) {
                continue;
            }
            let is_peak = (v - 1..=v + 1)
                .all(|y| (u - 1..=u + 1).all(|x| response[y * w + x] <= s));
            if is_peak {
                candidates.push((s, u, v));
            }
        }
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.2, a.1).cmp(&(b.2, b.1))));
    let min_d2 = (cfg.corner_min_distance * cfg.corner_min_distance) as i64;
    let mut kept: Vec<(usize, usize)> = Vec::new();
    for (_, u, v) in candidates {
        if kept.len() >= cfg.max_corners {
            break;
        }
        let far = kept.iter().all(|&(ku, kv)| {
            let du = ku as i64 - u as i64;
            let dv = kv as i64 - v as i64;
            du * du + dv * dv >= min_d2
        });
        if far {
            kept.push((u, v));
        }
    }
    kept
}

/// Zero-mean, unit-norm copy of the patch around (u, v); `None` if flat.
fn normalized_patch(g: &Gray, u: usize, v: usize, r: usize) -> Option<Vec<f64>> {
    let mut patch = Vec::with_capacity((2 * r + 1).pow(2));
    for y in v - r..=v + r {
        patch.extend_from_slice(&g.data[y * g.width + u - r..=y * g.width + u + r]);
    }
    let mean = patch.iter().sum::<f64>() / patch.len() as f64;
    patch.iter_mut().for_each(|x| *x -= mean);
    let norm = patch.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm < 1e-9 {
        return None;
    }
    patch.iter_mut().for_each(|x| *x /= norm);
    Some(patch)
}

/// Corner + patch correlation matching from `a` to `b`.
///
/// Each corner of `a` (where `mask` is 1) is compared against every
/// candidate center within `search_radius` in `b`. A match is kept when its
/// correlation reaches `min_correlation` and passes the ratio test against
/// the best candidate outside the exclusion zone of the winner.
pub fn match_features(
    a: &RgbImage,
    b: &RgbImage,
    mask: &BinaryMask,
    cfg: &MatcherConfig,
) -> Result<Vec<Correspondence>, AnnotationError> {
    if a.dimensions() != b.dimensions() {
        return Err(AnnotationError::SizeMismatch {
            a: (a.width() as usize, a.height() as usize),
            b: (b.width() as usize, b.height() as usize),
        });
    }
    let size = (a.width() as usize, a.height() as usize);
    if mask.dims() != size {
        return Err(AnnotationError::SizeMismatch {
            a: size,
            b: mask.dims(),
        });
    }
    let ga = Gray::from_rgb(a);
    let gb = Gray::from_rgb(b);
    let r = cfg.patch_radius;
    let (w, h) = size;
    if w <= 2 * r + 2 || h <= 2 * r + 2 {
        return Ok(Vec::new());
    }
    let integral = Integral::new(&gb);
    let n = ((2 * r + 1) * (2 * r + 1)) as f64;
    let corners = detect_corners(&ga, mask, cfg);
    let side = 2 * cfg.search_radius + 1;
    let mut scores = vec![f64::NEG_INFINITY; side * side];
    let mut out = Vec::new();

    for (cu, cv) in corners {
        let Some(patch) = normalized_patch(&ga, cu, cv, r) else {
            continue;
        };
        let u_lo = cu.saturating_sub(cfg.search_radius).max(r);
        let u_hi = (cu + cfg.search_radius).min(w - 1 - r);
        let v_lo = cv.saturating_sub(cfg.search_radius).max(r);
        let v_hi = (cv + cfg.search_radius).min(h - 1 - r);
        scores.iter_mut().for_each(|s| *s = f64::NEG_INFINITY);
        let mut best = (f64::NEG_INFINITY, 0usize, 0usize);
        for v in v_lo..=v_hi {
            for u in u_lo..=u_hi {
                let (s, sq) = integral.window(u, v, r);
                let var = sq - s * s / n;
                if var <= 1e-9 {
                    continue;
                }
                let mut dot = 0.0;
                let mut k = 0;
                for y in v - r..=v + r {
                    let row = &gb.data[y * w + u - r..=y * w + u + r];
                    for x in row {
                        dot += patch[k] * x;
                        k += 1;
                    }
                }
                let ncc = dot / var.sqrt();
                let slot = (v + cfg.search_radius - cv) * side + (u + cfg.search_radius - cu);
                scores[slot] = ncc;
                if ncc > best.0 {
                    best = (ncc, u, v);
                }
            }
        }
        let (best_ncc, bu, bv) = best;
        if !(best_ncc >= cfg.min_correlation) {
            continue;
        }
        let ex = cfg.second_best_exclusion;
        let mut second = f64::NEG_INFINITY;
        for v in v_lo..=v_hi {
            for u in u_lo..=u_hi {
                if u.abs_diff(bu) <= ex && v.abs_diff(bv) <= ex {
                    continue;
                }
                let slot = (v + cfg.search_radius - cv) * side + (u + cfg.search_radius - cu);
                second = second.max(scores[slot]);
            }
        }
        let d_best = (1.0 - best_ncc.min(1.0)).max(0.0).sqrt();
        let passes = if second == f64::NEG_INFINITY {
            true
        } else {
            let d_second = (1.0 - second.min(1.0)).max(0.0).sqrt();
            d_best < cfg.ratio * d_second
        };
        if passes {
            out.push(Correspondence::new(
                Point2D::new(cu as f64, cv as f64),
                Point2D::new(bu as f64, bv as f64),
            ));
        }
    }
    Ok(out)
}
