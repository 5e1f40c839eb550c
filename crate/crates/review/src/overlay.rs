//! Heatmap overlays composited over the record photo.

use std::io::Cursor;

use affordkit::heatmap::{render_gaussian, GaussianSpec, HeatmapError};
use affordkit::{Heatmap, Point2D};
use image::{ImageFormat, Rgb, RgbImage};

/// Peak-1 Gaussian map the overlay is drawn from.
pub fn overlay_source(
    points: &[Point2D],
    sigma: f64,
    width: usize,
    height: usize,
) -> Result<Heatmap, HeatmapError> {
    render_gaussian(points, GaussianSpec::with_sigma(sigma)?, width, height)
}

const MAX_ALPHA: f64 = 0.65;

/// Blends a red-to-yellow ramp over the photo with opacity proportional to
/// the map value.
pub fn composite(photo: &RgbImage, map: &Heatmap) -> RgbImage {
    RgbImage::from_fn(photo.width(), photo.height(), |u, v| {
        let m = map.get(u as usize, v as usize).clamp(0.0, 1.0);
        let alpha = MAX_ALPHA * m;
        let color = [255.0, 255.0 * m, 0.0];
        let px = photo.get_pixel(u, v).0;
        Rgb(std::array::from_fn(|c| {
            ((1.0 - alpha) * px[c] as f64 + alpha * color[c])
                .round()
                .clamp(0.0, 255.0) as u8
        }))
    })
}

pub fn render_overlay_png(
    photo: &RgbImage,
    points: &[Point2D],
    sigma: f64,
) -> Result<Vec<u8>, HeatmapError> {
    let map = overlay_source(points, sigma, photo.width() as usize, photo.height() as usize)?;
    Ok(encode_png(&composite(photo, &map)))
}

pub fn encode_png(img: &RgbImage) -> Vec<u8> {
    let mut bytes = Cursor::new(Vec::new());
    img.write_to(&mut bytes, ImageFormat::Png)
        .expect("in-memory PNG encoding");
    bytes.into_inner()
}
