//! `AHM1` affordance-map files.
//!
//! Layout: the magic bytes `AHM1`, little-endian `u32` width, little-endian
//! `u32` height, then `width * height` little-endian `f32` values in
//! row-major order. Nothing follows the last value.
//!
//! Values are stored as `f32`; maps whose values are already `f32`-exact
//! (see [`Heatmap::quantized_f32`]) round-trip bitwise.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::types::{Heatmap, MapError};

pub const MAGIC: &[u8; 4] = b"AHM1";
const HEADER_LEN: usize = 12;

#[derive(Debug, Error)]
pub enum AhmError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic bytes {0:?}, expected AHM1")]
    BadMagic([u8; 4]),
    #[error("truncated file: expected {expected} bytes, got {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("{0} trailing bytes after map data")]
    TrailingBytes(usize),
    #[error("invalid map: {0}")]
    Map(#[from] MapError),
}

pub fn encode(map: &Heatmap) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * map.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(map.width() as u32).to_le_bytes());
    out.extend_from_slice(&(map.height() as u32).to_le_bytes());
    for &x in map.values() {
        out.extend_from_slice(&(x as f32).to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<Heatmap, AhmError> {
    if bytes.len() < HEADER_LEN {
        return Err(AhmError::Truncated {
            expected: HEADER_LEN,
            actual: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if &magic != MAGIC {
        return Err(AhmError::BadMagic(magic));
    }
    let width = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let height = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or(AhmError::Truncated {
            expected: usize::MAX,
            actual: bytes.len(),
        })?;
    if bytes.len() < expected {
        return Err(AhmError::Truncated {
            expected,
            actual: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(AhmError::TrailingBytes(bytes.len() - expected));
    }
    let values = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Ok(Heatmap::new(width, height, values)?)
}

pub fn write<W: Write>(mut w: W, map: &Heatmap) -> Result<(), AhmError> {
    w.write_all(&encode(map))?;
    Ok(())
}

pub fn read<R: Read>(mut r: R) -> Result<Heatmap, AhmError> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    decode(&buf)
}

pub fn save(path: &Path, map: &Heatmap) -> Result<(), AhmError> {
    fs::write(path, encode(map))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Heatmap, AhmError> {
    decode(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout_is_exact() {
        let map = Heatmap::new(2, 1, vec![1.0, 0.5]).unwrap();
        let bytes = encode(&map);
        assert_eq!(
            bytes,
            [
                b'A', b'H', b'M', b'1', 2, 0, 0, 0, 1, 0, 0, 0, 0x00, 0x00, 0x80, 0x3f, 0x00, 0x00,
                0x00, 0x3f
            ]
        );
    }

    #[test]
    fn rejects_bad_magic_and_lengths() {
        let map = Heatmap::new(2, 2, vec![0.0; 4]).unwrap();
        let mut bytes = encode(&map);
        assert!(matches!(
            decode(&bytes[..bytes.len() - 1]),
            Err(AhmError::Truncated { .. })
        ));
        bytes.push(0);
        assert!(matches!(decode(&bytes), Err(AhmError::TrailingBytes(1))));
        bytes[0] = b'X';
        assert!(matches!(decode(&bytes), Err(AhmError::BadMagic(_))));
    }

    #[test]
    fn rejects_negative_values() {
        let mut bytes = encode(&Heatmap::new(1, 1, vec![0.0]).unwrap());
        bytes[12..16].copy_from_slice(&(-1.0f32).to_le_bytes());
        assert!(matches!(decode(&bytes), Err(AhmError::Map(_))));
    }

    proptest! {
        #[test]
        fn round_trip_is_bitwise(
            (w, h, vals) in (1usize..12, 1usize..12).prop_flat_map(|(w, h)| {
                (Just(w), Just(h), proptest::collection::vec(0.0f32..1e6, w * h))
            })
        ) {
            let map = Heatmap::new(w, h, vals.iter().map(|&x| x as f64).collect()).unwrap();
            let bytes = encode(&map);
            let back = decode(&bytes).unwrap();
            prop_assert_eq!(back.dims(), (w, h));
            for (a, b) in map.values().iter().zip(back.values()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
            prop_assert_eq!(encode(&back), bytes);
        }
    }
}
