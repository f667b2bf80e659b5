//! MTF: a minimal binary tensor container.
//!
//! Layout, in order:
//!
//! 1. magic bytes `MTF1`;
//! 2. header length as a little-endian `u32`;
//! 3. UTF-8 JSON header `{"dtype":"f32le","shape":[C,H,W],"names":[...]}`;
//! 4. `C*H*W` little-endian 32-bit floats, row major (channel, row, column).
//!
//! The format is bit-exact and trivially parseable from any language.
//! Errors carry the byte offset at which reading failed.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use midbox_core::tensor::Tensor;

use crate::error::{AppError, Result};

pub const MAGIC: [u8; 4] = *b"MTF1";

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    dtype: String,
    shape: [usize; 3],
    names: Vec<String>,
}

/// Serializes a tensor with per-channel names into `writer`.
pub fn write_mtf_to(writer: &mut impl Write, tensor: &Tensor, names: &[String]) -> Result<()> {
    let shape = tensor.shape();
    if names.len() != shape[0] {
        return Err(AppError::internal(format!(
            "{} channel names for {} channels",
            names.len(),
            shape[0]
        )));
    }
    let header = Header {
        dtype: "f32le".to_string(),
        shape,
        names: names.to_vec(),
    };
    let header_bytes = serde_json::to_vec(&header)
        .map_err(|e| AppError::internal(format!("header serialization: {e}")))?;
    let header_len = u32::try_from(header_bytes.len())
        .map_err(|_| AppError::internal("header exceeds u32 length".to_string()))?;
    writer.write_all(&MAGIC)?;
    writer.write_all(&header_len.to_le_bytes())?;
    writer.write_all(&header_bytes)?;
    let mut buf = Vec::with_capacity(tensor.data().len() * 4);
    for v in tensor.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    writer.write_all(&buf)?;
    Ok(())
}

/// Writes a tensor to `path` (see [`write_mtf_to`]).
pub fn write_mtf(path: &Path, tensor: &Tensor, names: &[String]) -> Result<()> {
    let file = File::create(path)
        .map_err(|e| AppError::input(format!("cannot create {}: {e}", path.display())))?;
    let mut w = BufWriter::new(file);
    write_mtf_to(&mut w, tensor, names)?;
    w.flush()?;
    Ok(())
}

fn read_exact_at(r: &mut impl Read, buf: &mut [u8], offset: usize, what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        AppError::input(format!("truncated MTF: {what} at byte offset {offset}: {e}"))
    })
}

/// Parses a tensor and its channel names from `reader`.
pub fn read_mtf_from(reader: &mut impl Read) -> Result<(Tensor, Vec<String>)> {
    let mut magic = [0u8; 4];
    read_exact_at(reader, &mut magic, 0, "magic")?;
    if magic != MAGIC {
        return Err(AppError::input(format!(
            "bad magic {magic:?} at byte offset 0 (expected \"MTF1\")"
        )));
    }
    let mut len_bytes = [0u8; 4];
    read_exact_at(reader, &mut len_bytes, 4, "header length")?;
    let header_len = u32::from_le_bytes(len_bytes) as usize;
    let mut header_bytes = vec![0u8; header_len];
    read_exact_at(reader, &mut header_bytes, 8, "header")?;
    let header: Header = serde_json::from_slice(&header_bytes)
        .map_err(|e| AppError::input(format!("bad MTF header at byte offset 8: {e}")))?;
    if header.dtype != "f32le" {
        return Err(AppError::input(format!(
            "unsupported dtype {:?} (only \"f32le\")",
            header.dtype
        )));
    }
    let [c, h, w] = header.shape;
    if header.names.len() != c {
        return Err(AppError::input(format!(
            "{} channel names for {} channels",
            header.names.len(),
            c
        )));
    }
    let count = c
        .checked_mul(h)
        .and_then(|v| v.checked_mul(w))
        .ok_or_else(|| AppError::input(format!("shape {:?} overflows", header.shape)))?;
    let payload_offset = 8 + header_len;
    let mut payload = vec![0u8; count * 4];
    reader.read_exact(&mut payload).map_err(|e| {
        AppError::input(format!(
            "truncated MTF payload (expected {} bytes from byte offset {payload_offset}): {e}",
            count * 4
        ))
    })?;
    let mut extra = [0u8; 1];
    if reader.read(&mut extra)? != 0 {
        return Err(AppError::input(format!(
            "trailing bytes after payload at byte offset {}",
            payload_offset + count * 4
        )));
    }
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    let tensor = Tensor::from_vec(header.shape, data).map_err(|e| {
        AppError::input(format!("invalid MTF payload from byte offset {payload_offset}: {e}"))
    })?;
    Ok((tensor, header.names))
}

/// Reads a tensor from `path` (see [`read_mtf_from`]).
pub fn read_mtf(path: &Path) -> Result<(Tensor, Vec<String>)> {
    let file = File::open(path)
        .map_err(|e| AppError::input(format!("cannot open {}: {e}", path.display())))?;
    read_mtf_from(&mut BufReader::new(file))
}
