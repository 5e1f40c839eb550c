//! Shared value types: points, dense maps, masks, boxes and intrinsics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::compensated_sum;

/// Pixel-space point. `u` is the column, `v` the row; integer values are
/// pixel centers.
///
/// Serialized as a two-element array `[u, v]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point2D {
    pub u: f64,
    pub v: f64,
}

impl Point2D {
    pub const fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.v.is_finite()
    }

    /// `0 <= u < width` and `0 <= v < height`.
    pub fn in_bounds(&self, width: usize, height: usize) -> bool {
        self.is_finite()
            && self.u >= 0.0
            && self.v >= 0.0
            && self.u < width as f64
            && self.v < height as f64
    }

    pub fn distance(&self, other: &Point2D) -> f64 {
        (self.u - other.u).hypot(self.v - other.v)
    }
}

impl From<[f64; 2]> for Point2D {
    fn from(a: [f64; 2]) -> Self {
        Self::new(a[0], a[1])
    }
}

impl From<Point2D> for [f64; 2] {
    fn from(p: Point2D) -> Self {
        [p.u, p.v]
    }
}

/// Camera-frame point in meters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point3D {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3D {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MapError {
    #[error("map dimensions must be at least 1x1, got {width}x{height}")]
    EmptyDimensions { width: usize, height: usize },
    #[error("expected {expected} values for the map, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("value {value} at index {index} is negative or not finite")]
    InvalidValue { index: usize, value: f64 },
    #[error("mask value {value} at index {index} is not 0 or 1")]
    InvalidMaskValue { index: usize, value: u8 },
    #[error("zero-mass map")]
    ZeroMass,
    #[error("map is not normalized (sum = {sum})")]
    NotNormalized { sum: f64 },
    #[error("dimension mismatch: {left:?} vs {right:?}")]
    DimensionMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },
}

pub(crate) fn check_same_dims(
    left: (usize, usize),
    right: (usize, usize),
) -> Result<(), MapError> {
    if left != right {
        return Err(MapError::DimensionMismatch { left, right });
    }
    Ok(())
}

/// Dense nonnegative grid stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Heatmap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl Heatmap {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self, MapError> {
        if width == 0 || height == 0 {
            return Err(MapError::EmptyDimensions { width, height });
        }
        if values.len() != width * height {
            return Err(MapError::LengthMismatch {
                expected: width * height,
                actual: values.len(),
            });
        }
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(MapError::InvalidValue { index, value });
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self, MapError> {
        Self::new(width, height, vec![value; width.saturating_mul(height)])
    }

    /// Builds a map by evaluating `f(u, v)` at every pixel.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self, MapError> {
        let mut values = Vec::with_capacity(width * height);
        for v in 0..height {
            for u in 0..width {
                values.push(f(u, v));
            }
        }
        Self::new(width, height, values)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.values[v * self.width + u]
    }

    pub fn sum(&self) -> f64 {
        compensated_sum(self.values.iter().copied())
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
                (lo.min(x), hi.max(x))
            })
    }

    /// Rounds every value to the nearest `f32`, the precision of stored maps.
    pub fn quantized_f32(&self) -> Heatmap {
        Heatmap {
            width: self.width,
            height: self.height,
            values: self.values.iter().map(|&x| x as f32 as f64).collect(),
        }
    }
}

/// A [`Heatmap`] whose values sum to 1 within `1e-9`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityMap(Heatmap);

impl ProbabilityMap {
    pub const SUM_TOLERANCE: f64 = 1e-9;

    /// Divides every value by the total mass.
    ///
    /// The residual left by rounding is folded back into the largest cell so
    /// that the compensated sum of the result is exactly 1.
    pub fn normalize(map: &Heatmap) -> Result<Self, MapError> {
        let total = map.sum();
        if !(total > 0.0) {
            return Err(MapError::ZeroMass);
        }
        let mut values: Vec<f64> = map.values.iter().map(|&x| x / total).collect();
        let residual = 1.0 - compensated_sum(values.iter().copied());
        if residual != 0.0 {
            let (imax, _) = values
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &x)| {
                    if x > best.1 {
                        (i, x)
                    } else {
                        best
                    }
                });
            let corrected = values[imax] + residual;
            if corrected >= 0.0 {
                values[imax] = corrected;
            }
            for _ in 0..16 {
                let sum = compensated_sum(values.iter().copied());
                let stepped = if sum < 1.0 {
                    values[imax].next_up()
                } else if sum > 1.0 {
                    values[imax].next_down()
                } else {
                    break;
                };
                if stepped < 0.0 {
                    break;
                }
                values[imax] = stepped;
            }
        }
        Ok(Self(Heatmap {
            width: map.width,
            height: map.height,
            values,
        }))
    }

    /// Accepts a map that is already normalized.
    pub fn try_from_heatmap(map: Heatmap) -> Result<Self, MapError> {
        let sum = map.sum();
        if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(MapError::NotNormalized { sum });
        }
        Ok(Self(map))
    }

    pub fn as_heatmap(&self) -> &Heatmap {
        &self.0
    }

    pub fn into_heatmap(self) -> Heatmap {
        self.0
    }
}

impl std::ops::Deref for ProbabilityMap {
    type Target = Heatmap;

    fn deref(&self) -> &Heatmap {
        &self.0
    }
}

/// Row-major {0,1} grid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    values: Vec<u8>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, values: Vec<u8>) -> Result<Self, MapError> {
        if width == 0 || height == 0 {
            return Err(MapError::EmptyDimensions { width, height });
        }
        if values.len() != width * height {
            return Err(MapError::LengthMismatch {
                expected: width * height,
                actual: values.len(),
            });
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| **v > 1) {
            return Err(MapError::InvalidMaskValue { index, value });
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn filled(width: usize, height: usize, on: bool) -> Result<Self, MapError> {
        Self::new(width, height, vec![on as u8; width.saturating_mul(height)])
    }

    /// Any nonzero byte counts as 1.
    pub fn from_bytes_nonzero(width: usize, height: usize, bytes: &[u8]) -> Result<Self, MapError> {
        Self::new(width, height, bytes.iter().map(|&b| (b != 0) as u8).collect())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn get(&self, u: usize, v: usize) -> bool {
        self.values[v * self.width + u] != 0
    }

    pub fn set(&mut self, u: usize, v: usize, on: bool) {
        self.values[v * self.width + u] = on as u8;
    }

    pub fn count_ones(&self) -> usize {
        self.values.iter().filter(|&&b| b != 0).count()
    }
}

/// Axis-aligned box in pixels. Serialized as `[u_min, v_min, u_max, v_max]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub u_min: f64,
    pub v_min: f64,
    pub u_max: f64,
    pub v_max: f64,
}

impl BBox {
    pub const fn new(u_min: f64, v_min: f64, u_max: f64, v_max: f64) -> Self {
        Self {
            u_min,
            v_min,
            u_max,
            v_max,
        }
    }

    pub fn is_valid(&self) -> bool {
        [self.u_min, self.v_min, self.u_max, self.v_max]
            .iter()
            .all(|x| x.is_finite())
            && self.u_min < self.u_max
            && self.v_min < self.v_max
    }

    pub fn within(&self, width: usize, height: usize) -> bool {
        self.u_min >= 0.0
            && self.v_min >= 0.0
            && self.u_max <= width as f64
            && self.v_max <= height as f64
    }

    /// Overlap of two boxes, `None` when it has no area.
    pub fn intersection(&self, other: &BBox) -> Option<BBox> {
        let b = BBox::new(
            self.u_min.max(other.u_min),
            self.v_min.max(other.v_min),
            self.u_max.min(other.u_max),
            self.v_max.min(other.v_max),
        );
        b.is_valid().then_some(b)
    }

    /// Smallest box containing every point.
    pub fn enclosing(points: &[Point2D]) -> Option<BBox> {
        let first = points.first()?;
        let mut b = BBox::new(first.u, first.v, first.u, first.v);
        for p in &points[1..] {
            b.u_min = b.u_min.min(p.u);
            b.v_min = b.v_min.min(p.v);
            b.u_max = b.u_max.max(p.u);
            b.v_max = b.v_max.max(p.v);
        }
        Some(b)
    }

    pub fn corners(&self) -> [Point2D; 4] {
        [
            Point2D::new(self.u_min, self.v_min),
            Point2D::new(self.u_max, self.v_min),
            Point2D::new(self.u_max, self.v_max),
            Point2D::new(self.u_min, self.v_max),
        ]
    }
}

impl From<[f64; 4]> for BBox {
    fn from(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.u_min, b.v_min, b.u_max, b.v_max]
    }
}

/// Pinhole intrinsics (focal lengths and principal point in pixels).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Option<Self> {
        let k = Self { fx, fy, cx, cy };
        k.is_valid().then_some(k)
    }

    pub fn is_valid(&self) -> bool {
        self.fx.is_finite()
            && self.fy.is_finite()
            && self.fx > 0.0
            && self.fy > 0.0
            && self.cx.is_finite()
            && self.cy.is_finite()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heatmap_rejects_negative_and_nan() {
        assert!(matches!(
            Heatmap::new(2, 1, vec![0.0, -1.0]),
            Err(MapError::InvalidValue { index: 1, .. })
        ));
        assert!(Heatmap::new(1, 1, vec![f64::NAN]).is_err());
        assert!(matches!(
            Heatmap::new(0, 3, vec![]),
            Err(MapError::EmptyDimensions { .. })
        ));
        assert!(matches!(
            Heatmap::new(2, 2, vec![0.0; 3]),
            Err(MapError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn probability_map_requires_unit_mass() {
        let h = Heatmap::new(2, 1, vec![0.5, 0.6]).unwrap();
        assert!(matches!(
            ProbabilityMap::try_from_heatmap(h),
            Err(MapError::NotNormalized { .. })
        ));
        let h = Heatmap::new(2, 1, vec![0.25, 0.75]).unwrap();
        assert!(ProbabilityMap::try_from_heatmap(h).is_ok());
    }

    #[test]
    fn normalized_mass_is_exactly_one() {
        let h = Heatmap::from_fn(7, 5, |u, v| 0.1 + (u * 3 + v) as f64 / 13.0).unwrap();
        let p = ProbabilityMap::normalize(&h).unwrap();
        assert_eq!(p.sum(), 1.0);
    }

    #[test]
    fn mask_values_are_binary() {
        assert!(BinaryMask::new(2, 1, vec![0, 2]).is_err());
        let m = BinaryMask::from_bytes_nonzero(2, 1, &[0, 255]).unwrap();
        assert_eq!(m.values(), &[0, 1]);
    }

    #[test]
    fn bbox_intersection() {
        let a = BBox::new(0.0, 0.0, 10.0, 10.0);
        let b = BBox::new(5.0, 5.0, 20.0, 20.0);
        assert_eq!(a.intersection(&b), Some(BBox::new(5.0, 5.0, 10.0, 10.0)));
        let c = BBox::new(10.0, 0.0, 12.0, 3.0);
        assert_eq!(a.intersection(&c), None);
    }

    #[test]
    fn point_serializes_as_pair() {
        let p = Point2D::new(12.5, 40.0);
        assert_eq!(serde_json::to_string(&p).unwrap(), "[12.5,40.0]");
        let q: Point2D = serde_json::from_str("[1,2]").unwrap();
        assert_eq!(q, Point2D::new(1.0, 2.0));
    }

    #[test]
    fn intrinsics_validation() {
        assert!(CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0).is_some());
        assert!(CameraIntrinsics::new(0.0, 500.0, 320.0, 240.0).is_none());
        assert!(CameraIntrinsics::new(500.0, 500.0, f64::NAN, 240.0).is_none());
    }
}
