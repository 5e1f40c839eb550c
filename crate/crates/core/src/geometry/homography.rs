use nalgebra::{DMatrix, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::types::Point2D;

use super::GeometryError;

const SINGULAR_DET: f64 = 1e-12;
const AT_INFINITY: f64 = 1e-12;

/// 3x3 projective transform `x' ~ H x`.
///
/// Stored with `H[2,2] == 1` when that entry is nonzero, otherwise scaled to
/// unit Frobenius norm. Serialized as 9 row-major floats.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 9]", into = "[f64; 9]")]
pub struct Homography {
    m: Matrix3<f64>,
}

impl Homography {
    pub fn identity() -> Self {
        Self {
            m: Matrix3::identity(),
        }
    }

    pub fn translation(du: f64, dv: f64) -> Self {
        Self {
            m: Matrix3::new(1.0, 0.0, du, 0.0, 1.0, dv, 0.0, 0.0, 1.0),
        }
    }

    /// Normalizes the scale and rejects singular or non-finite matrices.
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self, GeometryError> {
        if m.iter().any(|x| !x.is_finite()) {
            return Err(GeometryError::Singular);
        }
        let norm = m.norm();
        if norm == 0.0 {
            return Err(GeometryError::Singular);
        }
        let unit = m / norm;
        if unit.determinant().abs() < SINGULAR_DET {
            return Err(GeometryError::Singular);
        }
        let m = if unit[(2, 2)].abs() > SINGULAR_DET {
            m / m[(2, 2)]
        } else {
            unit
        };
        Ok(Self { m })
    }

    pub fn from_row_major(a: [f64; 9]) -> Result<Self, GeometryError> {
        Self::from_matrix(Matrix3::from_row_slice(&a))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    pub fn to_row_major(&self) -> [f64; 9] {
        let m = &self.m;
        [
            m[(0, 0)],
            m[(0, 1)],
            m[(0, 2)],
            m[(1, 0)],
            m[(1, 1)],
            m[(1, 2)],
            m[(2, 0)],
            m[(2, 1)],
            m[(2, 2)],
        ]
    }

    pub fn inverse(&self) -> Result<Self, GeometryError> {
        let inv = self.m.try_inverse().ok_or(GeometryError::Singular)?;
        Self::from_matrix(inv)
    }

    /// Maps a point; fails when it lands on the line at infinity.
    pub fn apply(&self, p: Point2D) -> Result<Point2D, GeometryError> {
        let x = self.m * Vector3::new(p.u, p.v, 1.0);
        if x.z.abs() <= AT_INFINITY || !x.z.is_finite() {
            return Err(GeometryError::PointAtInfinity);
        }
        Ok(Point2D::new(x.x / x.z, x.y / x.z))
    }
}

impl TryFrom<[f64; 9]> for Homography {
    type Error = GeometryError;

    fn try_from(a: [f64; 9]) -> Result<Self, Self::Error> {
        Self::from_row_major(a)
    }
}

impl From<Homography> for [f64; 9] {
    fn from(h: Homography) -> Self {
        h.to_row_major()
    }
}

/// A point match between two frames.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    pub src: Point2D,
    pub dst: Point2D,
}

impl Correspondence {
    pub const fn new(src: Point2D, dst: Point2D) -> Self {
        Self { src, dst }
    }
}

/// `h_bc * h_ab`: the transform from frame a to frame c.
pub fn compose(h_ab: &Homography, h_bc: &Homography) -> Homography {
    // A product of two nonsingular matrices is nonsingular; rescale only.
    Homography::from_matrix(h_bc.m * h_ab.m).unwrap_or_else(|_| {
        let m = h_bc.m * h_ab.m;
        Homography { m: m / m.norm() }
    })
}

/// Mean of the forward error `|H src - dst|` and backward error
/// `|H^-1 dst - src|`. Infinite when either transfer is undefined.
pub fn symmetric_transfer_error(h: &Homography, h_inv: &Homography, c: &Correspondence) -> f64 {
    let fwd = h.apply(c.src).map(|p| p.distance(&c.dst));
    let bwd = h_inv.apply(c.dst).map(|p| p.distance(&c.src));
    match (fwd, bwd) {
        (Ok(f), Ok(b)) => 0.5 * (f + b),
        _ => f64::INFINITY,
    }
}

/// Similarity that moves the centroid to the origin and the mean distance
/// from it to sqrt(2).
fn normalizing_transform(points: &[Point2D]) -> Result<Matrix3<f64>, GeometryError> {
    let n = points.len() as f64;
    let cu = points.iter().map(|p| p.u).sum::<f64>() / n;
    let cv = points.iter().map(|p| p.v).sum::<f64>() / n;
    let mean_dist = points
        .iter()
        .map(|p| (p.u - cu).hypot(p.v - cv))
        .sum::<f64>()
        / n;
    if !(mean_dist > 0.0 && mean_dist.is_finite()) {
        return Err(GeometryError::Degenerate);
    }
    let s = std::f64::consts::SQRT_2 / mean_dist;
    Ok(Matrix3::new(s, 0.0, -s * cu, 0.0, s, -s * cv, 0.0, 0.0, 1.0))
}

fn transform(t: &Matrix3<f64>, p: &Point2D) -> (f64, f64) {
    (
        t[(0, 0)] * p.u + t[(0, 2)],
        t[(1, 1)] * p.v + t[(1, 2)],
    )
}

fn has_collinear_triple(points: &[(f64, f64)]) -> bool {
    let n = points.len();
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let (a, b, c) = (points[i], points[j], points[k]);
                let cross = (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0);
                if cross.abs() < 1e-9 {
                    return true;
                }
            }
        }
    }
    false
}

/// Least-squares homography from four or more correspondences by the
/// normalized direct linear transform. Exact on noise-free data.
pub fn estimate_homography_dlt(corrs: &[Correspondence]) -> Result<Homography, GeometryError> {
    let n = corrs.len();
    if n < 4 {
        return Err(GeometryError::InsufficientCorrespondences(n));
    }
    if corrs.iter().any(|c| !c.src.is_finite() || !c.dst.is_finite()) {
        return Err(GeometryError::Degenerate);
    }
    let src: Vec<Point2D> = corrs.iter().map(|c| c.src).collect();
    let dst: Vec<Point2D> = corrs.iter().map(|c| c.dst).collect();
    let t_src = normalizing_transform(&src)?;
    let t_dst = normalizing_transform(&dst)?;
    let src_n: Vec<(f64, f64)> = src.iter().map(|p| transform(&t_src, p)).collect();
    let dst_n: Vec<(f64, f64)> = dst.iter().map(|p| transform(&t_dst, p)).collect();
    if n == 4 && (has_collinear_triple(&src_n) || has_collinear_triple(&dst_n)) {
        return Err(GeometryError::Degenerate);
    }

    // Pad with zero rows so the SVD always exposes all nine right singular
    // vectors.
    let rows = (2 * n).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (i, (&(x, y), &(u, v))) in src_n.iter().zip(&dst_n).enumerate() {
        let r = 2 * i;
        a[(r, 0)] = -x;
        a[(r, 1)] = -y;
        a[(r, 2)] = -1.0;
        a[(r, 6)] = u * x;
        a[(r, 7)] = u * y;
        a[(r, 8)] = u;
        a[(r + 1, 3)] = -x;
        a[(r + 1, 4)] = -y;
        a[(r + 1, 5)] = -1.0;
        a[(r + 1, 6)] = v * x;
        a[(r + 1, 7)] = v * y;
        a[(r + 1, 8)] = v;
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.ok_or(GeometryError::Degenerate)?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    let smallest = order[0];
    let second = svd.singular_values[order[1]];
    let largest = svd.singular_values[order[order.len() - 1]];
    // A second (near-)zero singular value means the solution is not unique.
    if second <= 1e-10 * largest {
        return Err(GeometryError::Degenerate);
    }
    let h = v_t.row(smallest);
    let h_n = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let t_dst_inv = t_dst.try_inverse().ok_or(GeometryError::Degenerate)?;
    Homography::from_matrix(t_dst_inv * h_n * t_src).map_err(|_| GeometryError::Degenerate)
}
