//! Toolkit for point-supervised affordance data.
//!
//! The crate covers the full life of an affordable-point annotation:
//!
//! - [`annotation`] recovers contact points from human videos by detecting
//!   skin inside the hand/object overlap and back-projecting the contacts to
//!   the first observation frame through a chain of RANSAC homographies.
//! - [`heatmap`] turns annotated points into Gaussian supervision maps and
//!   extracts the argmax point from predicted maps.
//! - [`metrics`] scores predicted maps with KLD, SIM, SIM_part and NSS.
//! - [`losses`] evaluates the soft focal + KL training objective together
//!   with its analytic gradient.
//! - [`geometry`] holds the projective machinery (normalized DLT, RANSAC,
//!   chaining) and pinhole lifting of 2D points into the camera frame.
//!
//! Dataset records, the `records.jsonl` schema and the `AHM1` binary map
//! format live in [`record`], [`dataset`] and [`ahm`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ahm;
pub mod annotation;
pub mod dataset;
pub mod geometry;
pub mod heatmap;
pub mod losses;
pub mod metrics;
pub mod numeric;
pub mod record;
pub mod synth;
pub mod types;

pub use types::{
    BBox, BinaryMask, CameraIntrinsics, Heatmap, MapError, Point2D, Point3D, ProbabilityMap,
};
