//! `ALVF` frame files: magic `ALVF`, little-endian `u32` T and `u32` D, then
//! T×D `f32` values in row-major order.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::Mat;

pub const MAGIC: &[u8; 4] = b"ALVF";

pub fn encode_alvf(frames: &Mat) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + frames.data.len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(frames.rows as u32).to_le_bytes());
    out.extend_from_slice(&(frames.cols as u32).to_le_bytes());
    for v in &frames.data {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

pub fn decode_alvf(bytes: &[u8]) -> Result<Mat> {
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(Error::Format("missing ALVF header".into()));
    }
    let t = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let expected = t
        .checked_mul(d)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(12))
        .ok_or_else(|| Error::Format("ALVF header dimensions overflow".into()))?;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "ALVF body holds {} bytes, header declares {t}x{d}",
            bytes.len() - 12
        )));
    }
    let data = bytes[12..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Ok(Mat::from_vec(t, d, data))
}

pub fn write_alvf(path: &Path, frames: &Mat) -> Result<()> {
    fs::write(path, encode_alvf(frames)).map_err(|e| Error::io(path, e))
}

pub fn read_alvf(path: &Path) -> Result<Mat> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_alvf(&bytes)
}

/// Round every value through `f32` so in-memory frames equal their on-disk form.
pub fn quantize_to_f32(m: &mut Mat) {
    for v in &mut m.data {
        *v = *v as f32 as f64;
    }
}
