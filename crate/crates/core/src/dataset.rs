//! Loading and writing `records.jsonl` datasets.
//!
//! A dataset directory holds `records.jsonl`; `image_ref` and
//! `part_mask_ref` paths are relative to that directory.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::record::{validate_record, DatasetRecord, Split};
use crate::types::{BinaryMask, MapError};

pub const RECORDS_FILE: &str = "records.jsonl";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("missing dataset file {0}")]
    MissingFile(PathBuf),
    #[error("i/o error reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("duplicate record id {id:?} on line {line} (first seen on line {first_line})")]
    DuplicateId {
        id: String,
        line: usize,
        first_line: usize,
    },
}

#[derive(Debug, Error)]
pub enum AssetError {
    #[error("cannot read image {path}: {message}")]
    Image { path: PathBuf, message: String },
    #[error("part mask {path} is {actual:?}, expected {expected:?}")]
    MaskSize {
        path: PathBuf,
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("part mask {0} has no positive pixel")]
    EmptyMask(PathBuf),
    #[error(transparent)]
    Map(#[from] MapError),
}

/// A per-line problem that does not abort loading.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LineError {
    /// 1-based line number in `records.jsonl`.
    pub line: usize,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Manifest {
    pub total: usize,
    pub per_split: BTreeMap<Split, usize>,
    pub object_categories: usize,
    pub actions: usize,
}

impl Manifest {
    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a DatasetRecord>) -> Self {
        let mut m = Manifest::default();
        let mut objects = BTreeSet::new();
        let mut actions = BTreeSet::new();
        for r in records {
            m.total += 1;
            *m.per_split.entry(r.split).or_default() += 1;
            objects.insert(r.object_category.as_str());
            actions.insert(r.action.as_str());
        }
        m.object_categories = objects.len();
        m.actions = actions.len();
        m
    }
}

#[derive(Clone, Debug)]
pub struct LoadedDataset {
    pub root: PathBuf,
    pub records: Vec<DatasetRecord>,
    /// Image size `(width, height)` of each record, parallel to `records`.
    pub image_sizes: Vec<(usize, usize)>,
    pub manifest: Manifest,
    pub line_errors: Vec<LineError>,
}

impl LoadedDataset {
    pub fn resolve(&self, relative: &str) -> PathBuf {
        self.root.join(relative)
    }

    pub fn find(&self, id: &str) -> Option<(usize, &DatasetRecord)> {
        self.records.iter().enumerate().find(|(_, r)| r.id == id)
    }

    /// Loads the record's part mask, if it has one.
    pub fn part_mask(&self, index: usize) -> Option<Result<BinaryMask, AssetError>> {
        let record = &self.records[index];
        let rel = record.part_mask_ref.as_deref()?;
        Some(load_part_mask(&self.resolve(rel), self.image_sizes[index]))
    }
}

/// `(line number, parse result)` for one non-blank line of `records.jsonl`.
pub type ParsedLine = (usize, Result<DatasetRecord, String>);

/// Parses a JSONL records file without touching the referenced images.
///
/// Returns one entry per non-blank line, in order.
pub fn parse_records_file(path: &Path) -> Result<Vec<ParsedLine>, DatasetError> {
    let file = fs::File::open(path).map_err(|e| {
        if e.kind() == io::ErrorKind::NotFound {
            DatasetError::MissingFile(path.to_path_buf())
        } else {
            DatasetError::Io {
                path: path.to_path_buf(),
                source: e,
            }
        }
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| DatasetError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<DatasetRecord>(&line).map_err(|e| e.to_string());
        out.push((i + 1, parsed));
    }
    Ok(out)
}

/// Loads `<dir>/records.jsonl`.
///
/// Malformed lines, records whose image cannot be read and records that fail
/// [`validate_record`] against their image size are reported in
/// `line_errors` and skipped. Duplicate ids abort the load.
pub fn load_dataset(dir: &Path) -> Result<LoadedDataset, DatasetError> {
    let parsed = parse_records_file(&dir.join(RECORDS_FILE))?;
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut records = Vec::new();
    let mut image_sizes = Vec::new();
    let mut line_errors = Vec::new();
    for (line, result) in parsed {
        let record = match result {
            Ok(r) => r,
            Err(message) => {
                line_errors.push(LineError {
                    line,
                    message: format!("malformed record: {message}"),
                });
                continue;
            }
        };
        if let Some(&first_line) = seen.get(&record.id) {
            return Err(DatasetError::DuplicateId {
                id: record.id,
                line,
                first_line,
            });
        }
        seen.insert(record.id.clone(), line);
        let size = match image_size(&dir.join(&record.image_ref)) {
            Ok(s) => s,
            Err(e) => {
                line_errors.push(LineError {
                    line,
                    message: format!("record {}: {e}", record.id),
                });
                continue;
            }
        };
        let report = validate_record(&record, size);
        if !report.is_valid() {
            line_errors.push(LineError {
                line,
                message: format!("record {}: {report}", record.id),
            });
            continue;
        }
        records.push(record);
        image_sizes.push(size);
    }
    let manifest = Manifest::from_records(&records);
    Ok(LoadedDataset {
        root: dir.to_path_buf(),
        records,
        image_sizes,
        manifest,
        line_errors,
    })
}

pub fn write_records<W: Write>(w: W, records: &[DatasetRecord]) -> io::Result<()> {
    let mut w = BufWriter::new(w);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn write_records_file(path: &Path, records: &[DatasetRecord]) -> io::Result<()> {
    write_records(fs::File::create(path)?, records)
}

/// `(width, height)` from the image header.
pub fn image_size(path: &Path) -> Result<(usize, usize), AssetError> {
    let (w, h) = image::image_dimensions(path).map_err(|e| AssetError::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok((w as usize, h as usize))
}

/// Reads an 8-bit mask image; any nonzero pixel is part of the mask.
pub fn load_part_mask(path: &Path, expected: (usize, usize)) -> Result<BinaryMask, AssetError> {
    let img = image::open(path).map_err(|e| AssetError::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let actual = (img.width() as usize, img.height() as usize);
    if actual != expected {
        return Err(AssetError::MaskSize {
            path: path.to_path_buf(),
            expected,
            actual,
        });
    }
    let bytes: Vec<u8> = match img {
        image::DynamicImage::ImageLuma8(g) => g.into_raw(),
        other => other
            .to_rgb8()
            .pixels()
            .map(|p| p.0.iter().any(|&c| c != 0) as u8)
            .collect(),
    };
    let mask = BinaryMask::from_bytes_nonzero(actual.0, actual.1, &bytes)?;
    if mask.count_ones() == 0 {
        return Err(AssetError::EmptyMask(path.to_path_buf()));
    }
    Ok(mask)
}

pub fn save_mask_png(path: &Path, mask: &BinaryMask) -> Result<(), AssetError> {
    let bytes: Vec<u8> = mask.values().iter().map(|&b| b * 255).collect();
    image::GrayImage::from_raw(mask.width() as u32, mask.height() as u32, bytes)
        .expect("mask buffer matches its dimensions")
        .save(path)
        .map_err(|e| AssetError::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
}
