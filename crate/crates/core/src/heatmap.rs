//! Gaussian supervision maps and argmax point extraction.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{Heatmap, MapError, Point2D, ProbabilityMap};

/// Sigma used when a run does not configure one, in pixels at native
/// resolution.
pub const DEFAULT_SIGMA: f64 = 10.0;

/// Maps with more pixels than this are rendered inside a 4-sigma window
/// around each point instead of exactly everywhere.
pub const EXACT_RENDER_MAX_PIXELS: usize = 1024 * 1024;
const TRUNCATION_SIGMAS: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianSpec {
    pub sigma: f64,
    pub amplitude: f64,
}

impl GaussianSpec {
    pub fn new(sigma: f64, amplitude: f64) -> Result<Self, HeatmapError> {
        let spec = Self { sigma, amplitude };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_sigma(sigma: f64) -> Result<Self, HeatmapError> {
        Self::new(sigma, 1.0)
    }

    fn validate(&self) -> Result<(), HeatmapError> {
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(HeatmapError::InvalidSigma(self.sigma));
        }
        if !(self.amplitude.is_finite() && self.amplitude > 0.0) {
            return Err(HeatmapError::InvalidAmplitude(self.amplitude));
        }
        Ok(())
    }
}

impl Default for GaussianSpec {
    fn default() -> Self {
        Self {
            sigma: DEFAULT_SIGMA,
            amplitude: 1.0,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HeatmapError {
    #[error("no points to render")]
    EmptyPoints,
    #[error("point {index} ({u}, {v}) out of bounds for {width}x{height}")]
    PointOutOfBounds {
        index: usize,
        u: f64,
        v: f64,
        width: usize,
        height: usize,
    },
    #[error("sigma must be positive and finite, got {0}")]
    InvalidSigma(f64),
    #[error("amplitude must be positive and finite, got {0}")]
    InvalidAmplitude(f64),
    #[error(transparent)]
    Map(#[from] MapError),
}

/// Renders `amplitude * max_p exp(-|x - p|^2 / (2 sigma^2))` at every pixel
/// center `x`.
pub fn render_gaussian(
    points: &[Point2D],
    spec: GaussianSpec,
    width: usize,
    height: usize,
) -> Result<Heatmap, HeatmapError> {
    spec.validate()?;
    if width == 0 || height == 0 {
        return Err(MapError::EmptyDimensions { width, height }.into());
    }
    if points.is_empty() {
        return Err(HeatmapError::EmptyPoints);
    }
    for (index, p) in points.iter().enumerate() {
        if !p.in_bounds(width, height) {
            return Err(HeatmapError::PointOutOfBounds {
                index,
                u: p.u,
                v: p.v,
                width,
                height,
            });
        }
    }
    let inv_two_var = 1.0 / (2.0 * spec.sigma * spec.sigma);
    let mut values = vec![0.0_f64; width * height];
    let truncate = width * height > EXACT_RENDER_MAX_PIXELS;
    for p in points {
        let (u0, u1, v0, v1) = if truncate {
            let r = TRUNCATION_SIGMAS * spec.sigma;
            (
                (p.u - r).floor().max(0.0) as usize,
                ((p.u + r).ceil() as usize).min(width - 1),
                (p.v - r).floor().max(0.0) as usize,
                ((p.v + r).ceil() as usize).min(height - 1),
            )
        } else {
            (0, width - 1, 0, height - 1)
        };
        for v in v0..=v1 {
            let dv = v as f64 - p.v;
            let row = &mut values[v * width..(v + 1) * width];
            for (u, cell) in row.iter_mut().enumerate().take(u1 + 1).skip(u0) {
                let du = u as f64 - p.u;
                let g = spec.amplitude * (-(du * du + dv * dv) * inv_two_var).exp();
                if g > *cell {
                    *cell = g;
                }
            }
        }
    }
    Ok(Heatmap::new(width, height, values)?)
}

/// Ground-truth target for a record: peak-1 Gaussians rounded to the `f32`
/// precision used by stored `AHM1` targets, so a stored copy of the target
/// compares bitwise-equal with a freshly rendered one.
pub fn render_target(
    points: &[Point2D],
    sigma: f64,
    width: usize,
    height: usize,
) -> Result<Heatmap, HeatmapError> {
    Ok(render_gaussian(points, GaussianSpec::with_sigma(sigma)?, width, height)?.quantized_f32())
}

/// Scales a map to unit mass. Fails on an all-zero map.
pub fn normalize(map: &Heatmap) -> Result<ProbabilityMap, MapError> {
    ProbabilityMap::normalize(map)
}

/// Pixel of the largest value; ties go to the smallest row-major index.
pub fn argmax_point(map: &Heatmap) -> Point2D {
    let mut best = 0;
    let values = map.values();
    for (i, &x) in values.iter().enumerate() {
        if x > values[best] {
            best = i;
        }
    }
    Point2D::new((best % map.width()) as f64, (best / map.width()) as f64)
}

fn source_coord(dst: usize, old: usize, new: usize) -> f64 {
    if new == 1 {
        (old - 1) as f64 / 2.0
    } else {
        dst as f64 * (old - 1) as f64 / (new - 1) as f64
    }
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    (a + t * (b - a)).clamp(a.min(b), a.max(b))
}

/// Corner-aligned bilinear resampling: output corners sample input corners.
pub fn resample_bilinear(
    map: &Heatmap,
    new_width: usize,
    new_height: usize,
) -> Result<Heatmap, MapError> {
    if new_width == 0 || new_height == 0 {
        return Err(MapError::EmptyDimensions {
            width: new_width,
            height: new_height,
        });
    }
    if map.dims() == (new_width, new_height) {
        return Ok(map.clone());
    }
    let (w, h) = map.dims();
    let cols: Vec<(usize, usize, f64)> = (0..new_width)
        .map(|x| {
            let s = source_coord(x, w, new_width);
            let i0 = (s.floor() as usize).min(w - 1);
            let i1 = (i0 + 1).min(w - 1);
            (i0, i1, s - i0 as f64)
        })
        .collect();
    Heatmap::from_fn(new_width, new_height, |x, y| {
        let s = source_coord(y, h, new_height);
        let j0 = (s.floor() as usize).min(h - 1);
        let j1 = (j0 + 1).min(h - 1);
        let ty = s - j0 as f64;
        let (i0, i1, tx) = cols[x];
        let top = lerp(map.get(i0, j0), map.get(i1, j0), tx);
        let bottom = lerp(map.get(i0, j1), map.get(i1, j1), tx);
        lerp(top, bottom, ty)
    })
}

/// 8-bit grayscale view, min-max scaled. A constant map renders black.
pub fn to_gray_image(map: &Heatmap) -> image::GrayImage {
    let (lo, hi) = map.min_max();
    let range = hi - lo;
    let bytes = map
        .values()
        .iter()
        .map(|&x| {
            if range > 0.0 {
                ((x - lo) / range * 255.0).round() as u8
            } else {
                0
            }
        })
        .collect();
    image::GrayImage::from_raw(map.width() as u32, map.height() as u32, bytes)
        .expect("buffer length matches map dimensions")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec(sigma: f64) -> GaussianSpec {
        GaussianSpec::new(sigma, 1.0).unwrap()
    }

    #[test]
    fn single_point_values() {
        let m = render_gaussian(&[Point2D::new(32.0, 32.0)], spec(5.0), 64, 64).unwrap();
        assert_eq!(m.get(32, 32), 1.0);
        assert!((m.get(32, 37) - (-0.5f64).exp()).abs() < 1e-15);
        assert!((m.get(32, 37) - 0.60653).abs() < 1e-5);
    }

    #[test]
    fn mirror_symmetric_points_give_mirror_symmetric_map() {
        let pts = [Point2D::new(10.0, 20.0), Point2D::new(53.0, 20.0)];
        let m = render_gaussian(&pts, spec(4.0), 64, 40).unwrap();
        for v in 0..40 {
            for u in 0..64 {
                assert_eq!(m.get(u, v), m.get(63 - u, v));
            }
        }
    }

    #[test]
    fn peak_sits_on_the_point() {
        let m = render_gaussian(&[Point2D::new(30.0, 40.0)], spec(5.0), 64, 64).unwrap();
        let peak = m.get(30, 40);
        assert!(m.values().iter().all(|&x| x <= peak));
        assert_eq!(argmax_point(&m), Point2D::new(30.0, 40.0));
    }

    #[test]
    fn max_composition_keeps_each_point_a_local_peak() {
        let pts = [Point2D::new(10.0, 10.0), Point2D::new(14.0, 10.0)];
        let m = render_gaussian(&pts, spec(3.0), 32, 20).unwrap();
        assert_eq!(m.get(10, 10), 1.0);
        assert_eq!(m.get(14, 10), 1.0);
        assert!(m.get(12, 10) < 1.0);
    }

    #[test]
    fn render_errors() {
        assert_eq!(
            render_gaussian(&[], spec(1.0), 8, 8),
            Err(HeatmapError::EmptyPoints)
        );
        assert!(matches!(
            render_gaussian(&[Point2D::new(8.0, 0.0)], spec(1.0), 8, 8),
            Err(HeatmapError::PointOutOfBounds { index: 0, .. })
        ));
        assert!(GaussianSpec::new(0.0, 1.0).is_err());
        assert!(GaussianSpec::new(1.0, -1.0).is_err());
    }

    #[test]
    fn truncated_render_matches_exact_inside_window() {
        let p = Point2D::new(700.5, 512.25);
        let big = render_gaussian(&[p], spec(3.0), 1100, 1000).unwrap();
        let sigma: f64 = 3.0;
        let exact = |u: f64, v: f64| (-((u - p.u).powi(2) + (v - p.v).powi(2)) / (2.0 * sigma * sigma)).exp();
        assert_eq!(big.get(700, 512), exact(700.0, 512.0));
        assert_eq!(big.get(0, 0), 0.0);
        // Everything dropped by the window is below exp(-8).
        for v in 490..535 {
            for u in 680..720 {
                assert!((big.get(u, v) - exact(u as f64, v as f64)).abs() < 4e-4);
            }
        }
    }

    #[test]
    fn normalize_examples() {
        let m = Heatmap::new(2, 2, vec![2.0, 2.0, 0.0, 0.0]).unwrap();
        let p = normalize(&m).unwrap();
        assert_eq!(p.values(), &[0.5, 0.5, 0.0, 0.0]);
        let again = normalize(p.as_heatmap()).unwrap();
        for (a, b) in p.values().iter().zip(again.values()) {
            assert!((a - b).abs() <= 1e-12);
        }
        let zero = Heatmap::filled(3, 3, 0.0).unwrap();
        let err = normalize(&zero).unwrap_err();
        assert_eq!(err.to_string(), "zero-mass map");
    }

    #[test]
    fn argmax_examples() {
        let mut vals = vec![0.0; 10 * 5];
        vals[3 * 10 + 7] = 1.0;
        let m = Heatmap::new(10, 5, vals).unwrap();
        assert_eq!(argmax_point(&m), Point2D::new(7.0, 3.0));
        let uniform = Heatmap::filled(6, 4, 0.3).unwrap();
        assert_eq!(argmax_point(&uniform), Point2D::new(0.0, 0.0));
    }

    #[test]
    fn resample_examples() {
        let m = Heatmap::new(2, 1, vec![0.0, 1.0]).unwrap();
        let r = resample_bilinear(&m, 3, 1).unwrap();
        assert_eq!(r.values(), &[0.0, 0.5, 1.0]);

        let c = Heatmap::filled(5, 3, 0.7).unwrap();
        for (w, h) in [(1, 1), (9, 2), (17, 11)] {
            let r = resample_bilinear(&c, w, h).unwrap();
            assert!(r.values().iter().all(|&x| x == 0.7));
        }

        let g = render_gaussian(&[Point2D::new(3.0, 2.0)], spec(2.0), 8, 6).unwrap();
        assert_eq!(resample_bilinear(&g, 8, 6).unwrap(), g);
        assert!(resample_bilinear(&g, 0, 6).is_err());
    }

    #[test]
    fn gray_export_scales_to_full_range() {
        let m = Heatmap::new(3, 1, vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(to_gray_image(&m).into_raw(), vec![0, 128, 255]);
    }

    fn arb_points(w: usize, h: usize) -> impl Strategy<Value = Vec<Point2D>> {
        proptest::collection::vec(
            (0.0..w as f64, 0.0..h as f64).prop_map(|(u, v)| Point2D::new(u, v)),
            1..5,
        )
    }

    proptest! {
        #[test]
        fn render_is_permutation_invariant(pts in arb_points(24, 18), sigma in 0.5f64..6.0) {
            let a = render_gaussian(&pts, spec(sigma), 24, 18).unwrap();
            let mut rev = pts.clone();
            rev.reverse();
            let b = render_gaussian(&rev, spec(sigma), 24, 18).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn argmax_recovers_nearest_pixel(u in 0.0f64..39.0, v in 0.0f64..29.0, sigma in 1.0f64..8.0) {
            // Stay away from exact half-pixel ties.
            prop_assume!((u.fract() - 0.5).abs() > 1e-6 && (v.fract() - 0.5).abs() > 1e-6);
            let m = render_gaussian(&[Point2D::new(u, v)], spec(sigma), 40, 30).unwrap();
            let a = argmax_point(&m);
            prop_assert_eq!(a, Point2D::new(u.round(), v.round()));
        }

        #[test]
        fn normalize_is_idempotent_and_keeps_argmax(
            vals in proptest::collection::vec(0.0f64..10.0, 48),
            scale in 0.01f64..100.0,
        ) {
            prop_assume!(vals.iter().any(|&x| x > 0.0));
            let m = Heatmap::new(8, 6, vals.iter().map(|x| x * scale).collect()).unwrap();
            let p = normalize(&m).unwrap();
            let q = normalize(p.as_heatmap()).unwrap();
            for (a, b) in p.values().iter().zip(q.values()) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
            prop_assert!((p.sum() - 1.0).abs() <= 1e-9);
            prop_assert_eq!(argmax_point(&m), argmax_point(p.as_heatmap()));
        }

        #[test]
        fn resample_stays_within_input_range(
            vals in proptest::collection::vec(0.0f64..5.0, 20),
            nw in 1usize..15,
            nh in 1usize..15,
        ) {
            let m = Heatmap::new(5, 4, vals).unwrap();
            let (lo, hi) = m.min_max();
            let r = resample_bilinear(&m, nw, nh).unwrap();
            prop_assert!(r.values().iter().all(|&x| x >= lo && x <= hi));
        }
    }
}
