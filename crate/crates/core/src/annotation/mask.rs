use crate::types::{BBox, BinaryMask};

use super::skin::pixel_span;

/// 1 where features may be matched; 0 inside every box grown by `dilation`
/// pixels on each side. Box edges are inclusive.
pub fn build_dynamic_mask(
    (width, height): (usize, usize),
    boxes: &[BBox],
    dilation: f64,
) -> BinaryMask {
    let mut mask = BinaryMask::filled(width, height, true).expect("nonzero image size");
    for b in boxes {
        let grown = BBox::new(
            b.u_min - dilation,
            b.v_min - dilation,
            b.u_max + dilation,
            b.v_max + dilation,
        );
        if let Some((u0, v0, u1, v1)) = pixel_span(&grown, width as u32, height as u32) {
            for v in v0..=v1 {
                for u in u0..=u1 {
                    mask.set(u as usize, v as usize, false);
                }
            }
        }
    }
    mask
}
