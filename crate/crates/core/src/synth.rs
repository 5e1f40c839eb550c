//! Seeded synthetic data: textured frames, planted-motion annotation
//! sequences and a small benchmark dataset with baseline predictions.

use std::fs;
use std::io;
use std::path::Path;

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ahm;
use crate::annotation::FrameSequence;
use crate::dataset::{save_mask_png, write_records_file, RECORDS_FILE};
use crate::heatmap::render_target;
use crate::record::{DatasetRecord, Split};
use crate::types::{BBox, BinaryMask, Heatmap, Point2D};

/// A color inside the default YCbCr skin box.
pub const SKIN_RGB: [u8; 3] = [224, 172, 140];

/// Random gray texture with features at two scales. Gray pixels never pass
/// the default skin rule.
pub fn textured_image(width: u32, height: u32, seed: u64) -> RgbImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let octaves: Vec<(f64, Vec<f64>, usize)> = [(7.0, 0.6), (3.0, 0.4)]
        .iter()
        .map(|&(cell, weight)| {
            let gw = (width as f64 / cell).ceil() as usize + 2;
            let gh = (height as f64 / cell).ceil() as usize + 2;
            let grid = (0..gw * gh).map(|_| weight * rng.random::<f64>()).collect();
            (cell, grid, gw)
        })
        .collect();
    RgbImage::from_fn(width, height, |u, v| {
        let mut value = 0.0;
        for (cell, grid, gw) in &octaves {
            let x = u as f64 / cell;
            let y = v as f64 / cell;
            let (x0, y0) = (x.floor() as usize, y.floor() as usize);
            let (fx, fy) = (x - x0 as f64, y - y0 as f64);
            let g = |i: usize, j: usize| grid[j * gw + i];
            value += (1.0 - fy) * ((1.0 - fx) * g(x0, y0) + fx * g(x0 + 1, y0))
                + fy * ((1.0 - fx) * g(x0, y0 + 1) + fx * g(x0 + 1, y0 + 1));
        }
        let level = (25.0 + 205.0 * value).round().clamp(0.0, 255.0) as u8;
        Rgb([level, level, level])
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SequenceSpec {
    pub width: u32,
    pub height: u32,
    pub observation_frames: usize,
    /// Image content moves by this many pixels from one frame to the next,
    /// going forward in time.
    pub shift_per_step: (i32, i32),
    /// Contact location in the contact frame.
    pub contact_point: Point2D,
    pub blob_radius: i32,
    pub plant_skin: bool,
    pub seed: u64,
}

impl Default for SequenceSpec {
    fn default() -> Self {
        Self {
            width: 160,
            height: 120,
            observation_frames: crate::annotation::DEFAULT_OBSERVATION_FRAMES,
            shift_per_step: (-2, 0),
            contact_point: Point2D::new(70.0, 60.0),
            blob_radius: 5,
            plant_skin: true,
            seed: 17,
        }
    }
}

pub struct SyntheticSequence {
    pub contact: RgbImage,
    /// o₁ first.
    pub observations: Vec<RgbImage>,
    pub hand_bbox: BBox,
    pub object_bbox: BBox,
    pub contact_point: Point2D,
    /// Where the contact point's scene location appears in o₁.
    pub initial_point: Point2D,
}

/// Frames cropped from one larger texture; frame `t` (0 = o₁, n = contact)
/// is offset by `t * shift_per_step`. A skin disk is drawn at the contact
/// point in the contact frame only.
pub fn synthetic_sequence(spec: &SequenceSpec) -> SyntheticSequence {
    let n = spec.observation_frames as i32;
    let (sx, sy) = spec.shift_per_step;
    let margin_u = sx.abs() * n;
    let margin_v = sy.abs() * n;
    let world = textured_image(
        spec.width + 2 * margin_u as u32,
        spec.height + 2 * margin_v as u32,
        spec.seed,
    );
    // Content shifts by +s per step, so frame t samples the world at -s*t.
    let frame = |t: i32| {
        RgbImage::from_fn(spec.width, spec.height, |u, v| {
            let wu = u as i32 + margin_u - sx * t;
            let wv = v as i32 + margin_v - sy * t;
            *world.get_pixel(wu as u32, wv as u32)
        })
    };
    let observations: Vec<RgbImage> = (0..n).map(frame).collect();
    let mut contact = frame(n);
    let c = spec.contact_point;
    if spec.plant_skin {
        let (cu, cv) = (c.u.round() as i32, c.v.round() as i32);
        let r = spec.blob_radius;
        for v in cv - r..=cv + r {
            for u in cu - r..=cu + r {
                let inside = (u - cu).pow(2) + (v - cv).pow(2) <= r * r;
                if inside && u >= 0 && v >= 0 && (u as u32) < spec.width && (v as u32) < spec.height
                {
                    contact.put_pixel(u as u32, v as u32, Rgb(SKIN_RGB));
                }
            }
        }
    }
    let initial_point = Point2D::new(c.u - (sx * n) as f64, c.v - (sy * n) as f64);
    SyntheticSequence {
        contact,
        observations,
        hand_bbox: BBox::new(c.u - 16.0, c.v - 30.0, c.u + 16.0, c.v + 8.0),
        object_bbox: BBox::new(c.u - 25.0, c.v - 6.0, c.u + 25.0, c.v + 20.0),
        contact_point: c,
        initial_point,
    }
}

/// Saves the frames of `synthetic_sequence(spec)` as PNGs under `dir/<id>/`
/// and returns the matching `sequences.jsonl` entry (paths relative to `dir`).
pub fn write_synthetic_sequence(dir: &Path, id: &str, spec: &SequenceSpec) -> io::Result<FrameSequence> {
    let seq = synthetic_sequence(spec);
    fs::create_dir_all(dir.join(id))?;
    let save = |img: &RgbImage, name: String| -> io::Result<String> {
        img.save(dir.join(&name)).map_err(|e| io::Error::other(e.to_string()))?;
        Ok(name)
    };
    let contact_frame = save(&seq.contact, format!("{id}/contact.png"))?;
    let observations = seq
        .observations
        .iter()
        .enumerate()
        .map(|(i, img)| save(img, format!("{id}/obs_{i:02}.png")))
        .collect::<io::Result<_>>()?;
    Ok(FrameSequence {
        id: id.to_string(),
        contact_frame,
        observations,
        hand_bbox: seq.hand_bbox,
        object_bbox: seq.object_bbox,
    })
}

/// Settings of the bundled mini benchmark.
#[derive(Clone, Debug, PartialEq)]
pub struct MiniDatasetSpec {
    pub records: usize,
    pub width: u32,
    pub height: u32,
    /// Gaussian width used for targets and perfect predictions.
    pub sigma: f64,
    /// Part masks extend this many pixels around each point.
    pub part_half_size: i64,
    pub seed: u64,
}

impl Default for MiniDatasetSpec {
    fn default() -> Self {
        Self {
            records: 20,
            width: 96,
            height: 96,
            sigma: 2.0,
            part_half_size: 22,
            seed: 2024,
        }
    }
}

pub const PREDICTION_SETS: [&str; 3] = ["perfect", "noisy", "uniform"];

const CATEGORIES: [(&str, &str); 5] = [
    ("mug", "hold"),
    ("knife", "cut"),
    ("kettle", "pour"),
    ("drawer", "open"),
    ("scissors", "cut"),
];

/// Writes `records.jsonl`, `images/`, `masks/` and
/// `predictions/{perfect,noisy,uniform}/<id>.ahm` under `dir`.
///
/// Perfect predictions are the rendered targets; noisy ones add small
/// uniform noise to the target; uniform ones are i.i.d. uniform noise.
pub fn generate_mini_dataset(dir: &Path, spec: &MiniDatasetSpec) -> io::Result<Vec<DatasetRecord>> {
    let to_io = |e: String| io::Error::other(e);
    for sub in ["images", "masks"] {
        fs::create_dir_all(dir.join(sub))?;
    }
    for set in PREDICTION_SETS {
        fs::create_dir_all(dir.join("predictions").join(set))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (w, h) = (spec.width as usize, spec.height as usize);
    let lo = 12.0;
    let mut records = Vec::with_capacity(spec.records);
    for i in 0..spec.records {
        let id = format!("mini-{i:03}");
        let count = if i % 4 == 3 { 2 } else { 1 };
        let points: Vec<Point2D> = (0..count)
            .map(|_| {
                Point2D::new(
                    rng.random_range(lo..w as f64 - lo).round(),
                    rng.random_range(lo..h as f64 - lo).round(),
                )
            })
            .collect();

        let image_ref = format!("images/{id}.png");
        textured_image(spec.width, spec.height, spec.seed ^ (i as u64 + 1))
            .save(dir.join(&image_ref))
            .map_err(|e| to_io(e.to_string()))?;

        let mut mask = BinaryMask::filled(w, h, false).expect("nonzero size");
        for p in &points {
            let (pu, pv) = (p.u as i64, p.v as i64);
            let r = spec.part_half_size;
            for v in (pv - r).max(0)..=(pv + r).min(h as i64 - 1) {
                for u in (pu - r).max(0)..=(pu + r).min(w as i64 - 1) {
                    mask.set(u as usize, v as usize, true);
                }
            }
        }
        let mask_ref = format!("masks/{id}.png");
        save_mask_png(&dir.join(&mask_ref), &mask).map_err(|e| to_io(e.to_string()))?;

        let target = render_target(&points, spec.sigma, w, h).map_err(|e| to_io(e.to_string()))?;
        let noisy = Heatmap::from_fn(w, h, |u, v| {
            target.get(u, v) + 0.001 + 0.02 * rng.random::<f64>()
        })
        .map_err(|e| to_io(e.to_string()))?;
        let uniform = Heatmap::from_fn(w, h, |_, _| rng.random::<f64>())
            .map_err(|e| to_io(e.to_string()))?;
        for (set, map) in PREDICTION_SETS.iter().zip([&target, &noisy, &uniform]) {
            let path = dir.join("predictions").join(set).join(format!("{id}.ahm"));
            ahm::save(&path, map).map_err(|e| to_io(e.to_string()))?;
        }

        let (category, action) = CATEGORIES[i % CATEGORIES.len()];
        records.push(DatasetRecord {
            id,
            image_ref,
            object_category: category.to_string(),
            action: action.to_string(),
            points,
            part_mask_ref: Some(mask_ref),
            split: Split::Test,
            source: "synthetic".to_string(),
        });
    }
    write_records_file(&dir.join(RECORDS_FILE), &records)?;
    Ok(records)
}
