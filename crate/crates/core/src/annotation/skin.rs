//! Skin classification and contact-point extraction inside the hand/object
//! overlap.

use std::collections::VecDeque;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::types::{BBox, Point2D};

use super::AnnotationError;

/// Per-pixel skin decision.
pub trait SkinClassifier: Send + Sync {
    fn is_skin(&self, rgb: [u8; 3]) -> bool;
}

/// Box rule in the full-range YCbCr space (ITU-R BT.601 / JFIF).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SkinConfig {
    pub cb_min: f64,
    pub cb_max: f64,
    pub cr_min: f64,
    pub cr_max: f64,
    /// Components with fewer pixels are discarded.
    pub min_area: usize,
}

impl Default for SkinConfig {
    fn default() -> Self {
        Self {
            cb_min: 77.0,
            cb_max: 127.0,
            cr_min: 133.0,
            cr_max: 173.0,
            min_area: 16,
        }
    }
}

pub fn rgb_to_cbcr([r, g, b]: [u8; 3]) -> (f64, f64) {
    let (r, g, b) = (r as f64, g as f64, b as f64);
    let cb = 128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b;
    let cr = 128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b;
    (cb, cr)
}

impl SkinClassifier for SkinConfig {
    fn is_skin(&self, rgb: [u8; 3]) -> bool {
        let (cb, cr) = rgb_to_cbcr(rgb);
        (self.cb_min..=self.cb_max).contains(&cb) && (self.cr_min..=self.cr_max).contains(&cr)
    }
}

/// Integer pixel range `[lo, hi]` whose centers lie inside the box, clipped
/// to the image. `None` if empty.
pub(crate) fn pixel_span(b: &BBox, width: u32, height: u32) -> Option<(u32, u32, u32, u32)> {
    let u0 = b.u_min.ceil().max(0.0);
    let v0 = b.v_min.ceil().max(0.0);
    let u1 = b.u_max.floor().min(width as f64 - 1.0);
    let v1 = b.v_max.floor().min(height as f64 - 1.0);
    (u0 <= u1 && v0 <= v1).then_some((u0 as u32, v0 as u32, u1 as u32, v1 as u32))
}

/// Skin components inside the hand/object overlap, one centroid per
/// component, largest component first.
pub fn detect_skin_contact(
    image: &RgbImage,
    hand: &BBox,
    object: &BBox,
    classifier: &(impl SkinClassifier + ?Sized),
    min_area: usize,
) -> Result<Vec<Point2D>, AnnotationError> {
    let overlap = hand.intersection(object).ok_or(AnnotationError::NoOverlap)?;
    let Some((u0, v0, u1, v1)) = pixel_span(&overlap, image.width(), image.height()) else {
        return Err(AnnotationError::NoOverlap);
    };
    let w = (u1 - u0 + 1) as usize;
    let h = (v1 - v0 + 1) as usize;
    let skin: Vec<bool> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .map(|(x, y)| classifier.is_skin(image.get_pixel(u0 + x as u32, v0 + y as u32).0))
        .collect();

    let mut label = vec![usize::MAX; w * h];
    // (size, sum_u, sum_v, first index)
    let mut components: Vec<(usize, f64, f64, usize)> = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if !skin[start] || label[start] != usize::MAX {
            continue;
        }
        let id = components.len();
        let mut comp = (0usize, 0.0, 0.0, start);
        label[start] = id;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            let (x, y) = (i % w, i / w);
            comp.0 += 1;
            comp.1 += (u0 as usize + x) as f64;
            comp.2 += (v0 as usize + y) as f64;
            let mut visit = |j: usize| {
                if skin[j] && label[j] == usize::MAX {
                    label[j] = id;
                    queue.push_back(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        components.push(comp);
    }
    components.retain(|c| c.0 >= min_area.max(1));
    components.sort_by(|a, b| b.0.cmp(&a.0).then(a.3.cmp(&b.3)));
    Ok(components
        .iter()
        .map(|&(n, su, sv, _)| Point2D::new(su / n as f64, sv / n as f64))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;

    pub(crate) const SKIN: [u8; 3] = [224, 172, 140];

    fn canvas() -> RgbImage {
        RgbImage::from_pixel(96, 80, Rgb([90, 90, 90]))
    }

    fn disk(img: &mut RgbImage, cu: i32, cv: i32, r: i32) {
        for v in cv - r..=cv + r {
            for u in cu - r..=cu + r {
                if (u - cu).pow(2) + (v - cv).pow(2) <= r * r {
                    img.put_pixel(u as u32, v as u32, Rgb(SKIN));
                }
            }
        }
    }

    #[test]
    fn skin_rule_examples() {
        let cfg = SkinConfig::default();
        assert!(cfg.is_skin(SKIN));
        assert!(!cfg.is_skin([90, 90, 90]));
        assert!(!cfg.is_skin([0, 0, 255]));
    }

    #[test]
    fn planted_disk_centroid() {
        let mut img = canvas();
        disk(&mut img, 40, 40, 6);
        let hand = BBox::new(20.0, 20.0, 70.0, 60.0);
        let obj = BBox::new(30.0, 25.0, 80.0, 75.0);
        let pts = detect_skin_contact(&img, &hand, &obj, &SkinConfig::default(), 16).unwrap();
        assert_eq!(pts.len(), 1);
        assert!(pts[0].distance(&Point2D::new(40.0, 40.0)) <= 1.0);
    }

    #[test]
    fn no_skin_gives_empty_list() {
        let img = canvas();
        let b = BBox::new(10.0, 10.0, 50.0, 50.0);
        let pts = detect_skin_contact(&img, &b, &b, &SkinConfig::default(), 16).unwrap();
        assert!(pts.is_empty());
    }

    #[test]
    fn larger_blob_first() {
        let mut img = canvas();
        disk(&mut img, 30, 30, 3);
        disk(&mut img, 60, 50, 7);
        let b = BBox::new(0.0, 0.0, 95.0, 79.0);
        let pts = detect_skin_contact(&img, &b, &b, &SkinConfig::default(), 5).unwrap();
        assert_eq!(pts.len(), 2);
        assert!(pts[0].distance(&Point2D::new(60.0, 50.0)) <= 1.0);
        assert!(pts[1].distance(&Point2D::new(30.0, 30.0)) <= 1.0);
        // min_area drops the small one
        let pts = detect_skin_contact(&img, &b, &b, &SkinConfig::default(), 50).unwrap();
        assert_eq!(pts.len(), 1);
    }

    #[test]
    fn disjoint_boxes_fail() {
        let img = canvas();
        let a = BBox::new(0.0, 0.0, 10.0, 10.0);
        let b = BBox::new(20.0, 20.0, 30.0, 30.0);
        assert!(matches!(
            detect_skin_contact(&img, &a, &b, &SkinConfig::default(), 1),
            Err(AnnotationError::NoOverlap)
        ));
    }
}
