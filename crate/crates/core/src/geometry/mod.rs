//! Projective geometry for the annotation pipeline and pinhole lifting.

mod camera;
mod homography;
mod ransac;

pub use camera::{lift_to_3d, project_to_pixel};
pub use homography::{
    compose, estimate_homography_dlt, symmetric_transfer_error, Correspondence, Homography,
};
pub use ransac::{ransac_homography, RansacParams, RansacResult};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("insufficient correspondences: need at least 4, got {0}")]
    InsufficientCorrespondences(usize),
    #[error("degenerate point configuration")]
    Degenerate,
    #[error("homography is singular")]
    Singular,
    #[error("point maps to infinity")]
    PointAtInfinity,
    #[error("no model reached {required} inliers (best had {best})")]
    NoConsensus { best: usize, required: usize },
    #[error("invalid RANSAC parameters: {0}")]
    InvalidParams(&'static str),
    #[error("invalid depth {0}")]
    InvalidDepth(f64),
    #[error("invalid camera intrinsics")]
    InvalidIntrinsics,
}
