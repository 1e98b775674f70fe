//! On-disk formats: the `OCT1` tensor file and JSON helpers.
//!
//! An `OCT1` file is the 4-byte magic `OCT1`, a `u8` rank, `rank` little-endian
//! `u64` dimensions and then the row-major payload as little-endian `f32`.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"OCT1";

/// Serializes a tensor into `OCT1` bytes.
pub fn encode_tensor(tensor: &Tensor<f32>) -> Result<Vec<u8>> {
    let rank = u8::try_from(tensor.rank())
        .map_err(|_| Error::Shape(format!("rank {} does not fit the file header", tensor.rank())))?;
    let mut out = Vec::with_capacity(5 + 8 * tensor.rank() + 4 * tensor.len());
    out.extend_from_slice(MAGIC);
    out.push(rank);
    for &d in tensor.shape() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for &v in tensor.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

/// Parses `OCT1` bytes; `path` only labels errors.
pub fn decode_tensor(bytes: &[u8], path: &Path) -> Result<Tensor<f32>> {
    let bad = |reason: String| Error::TensorFormat { path: path.to_path_buf(), reason };
    if bytes.len() < 5 || &bytes[..4] != MAGIC {
        return Err(bad("missing OCT1 magic".into()));
    }
    let rank = bytes[4] as usize;
    let header = 5 + 8 * rank;
    if bytes.len() < header {
        return Err(bad(format!("truncated header for rank {rank}")));
    }
    let mut shape = Vec::with_capacity(rank);
    let mut count: u64 = 1;
    for chunk in bytes[5..header].chunks_exact(8) {
        let d = u64::from_le_bytes(chunk.try_into().unwrap());
        count = count.checked_mul(d).ok_or_else(|| bad("dimension product overflows".into()))?;
        shape.push(usize::try_from(d).map_err(|_| bad(format!("dimension {d} too large")))?);
    }
    let payload = &bytes[header..];
    if payload.len() as u64 != count.saturating_mul(4) {
        return Err(bad(format!("payload has {} bytes, shape {shape:?} needs {}", payload.len(), count * 4)));
    }
    let data = payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    Tensor::new(&shape, data)
}

pub fn write_tensor(path: &Path, tensor: &Tensor<f32>) -> Result<()> {
    write_bytes(path, &encode_tensor(tensor)?)
}

pub fn read_tensor(path: &Path) -> Result<Tensor<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_tensor(&bytes, path)
}

/// Writes pretty-printed JSON with a trailing newline.
pub fn write_json<V: Serialize + ?Sized>(path: &Path, value: &V) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

pub fn read_json<V: DeserializeOwned>(path: &Path) -> Result<V> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn create_dir_all(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}
