use crate::types::{CameraIntrinsics, Point2D, Point3D};

use super::GeometryError;

/// Back-projects a pixel at metric `depth` along its pinhole ray.
pub fn lift_to_3d(
    p: Point2D,
    depth: f64,
    k: &CameraIntrinsics,
) -> Result<Point3D, GeometryError> {
    if !(depth.is_finite() && depth > 0.0) {
        return Err(GeometryError::InvalidDepth(depth));
    }
    if !k.is_valid() {
        return Err(GeometryError::InvalidIntrinsics);
    }
    Ok(Point3D::new(
        (p.u - k.cx) * depth / k.fx,
        (p.v - k.cy) * depth / k.fy,
        depth,
    ))
}

/// Pinhole projection of a camera-frame point in front of the camera.
pub fn project_to_pixel(p: Point3D, k: &CameraIntrinsics) -> Result<Point2D, GeometryError> {
    if !(p.z.is_finite() && p.z > 0.0) {
        return Err(GeometryError::InvalidDepth(p.z));
    }
    if !k.is_valid() {
        return Err(GeometryError::InvalidIntrinsics);
    }
    Ok(Point2D::new(
        k.fx * p.x / p.z + k.cx,
        k.fy * p.y / p.z + k.cy,
    ))
}
