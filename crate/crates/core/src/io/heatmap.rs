//! The `TPEH` heatmap binary: magic `TPEH`, `u16` version 1, `u32` width,
//! `u32` height, then `W·H` little-endian `f32` values, row-major with the
//! top row first. Segmentation masks use the same container with class ids
//! stored as `0.0`, `1.0` or `2.0`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{GridDims, Heatmap, SegMask};

use super::{read_file, write_atomic};

pub const TPEH_MAGIC: [u8; 4] = *b"TPEH";
pub const TPEH_VERSION: u16 = 1;
const HEADER_LEN: usize = 14;

pub fn encode_heatmap(hm: &Heatmap) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * hm.values().len());
    out.extend_from_slice(&TPEH_MAGIC);
    out.extend_from_slice(&TPEH_VERSION.to_le_bytes());
    out.extend_from_slice(&(hm.width() as u32).to_le_bytes());
    out.extend_from_slice(&(hm.height() as u32).to_le_bytes());
    for v in hm.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_heatmap(bytes: &[u8]) -> Result<Heatmap> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!(
            "truncated header: {} of {HEADER_LEN} bytes",
            bytes.len()
        )));
    }
    if bytes[..4] != TPEH_MAGIC {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected \"TPEH\"",
            &bytes[..4]
        )));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != TPEH_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let dims = GridDims::new(u32_at(6), u32_at(10))?;
    let payload = &bytes[HEADER_LEN..];
    let expected = dims
        .width
        .checked_mul(dims.height)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Format(format!("dims {dims} overflow")))?;
    if payload.len() < expected {
        return Err(Error::Format(format!(
            "truncated payload: {dims} needs {expected} bytes, found {}",
            payload.len()
        )));
    }
    if payload.len() > expected {
        return Err(Error::Format(format!(
            "{} trailing bytes after the {dims} payload",
            payload.len() - expected
        )));
    }
    let values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Heatmap::from_vec(dims, values)
}

pub fn encode_mask(mask: &SegMask) -> Vec<u8> {
    let values = mask.ids().into_iter().map(f32::from).collect();
    encode_heatmap(&Heatmap::from_vec(mask.dims(), values).expect("class ids are finite"))
}

pub fn decode_mask(bytes: &[u8]) -> Result<SegMask> {
    let hm = decode_heatmap(bytes)?;
    let ids = hm
        .values()
        .iter()
        .enumerate()
        .map(|(i, &v)| match v {
            0.0 => Ok(0),
            1.0 => Ok(1),
            2.0 => Ok(2),
            _ => Err(Error::Format(format!(
                "cell ({}, {}) holds {v}, not a class id",
                i % hm.width(),
                i / hm.width()
            ))),
        })
        .collect::<Result<Vec<u8>>>()?;
    SegMask::from_ids(hm.dims(), &ids)
}

pub fn load_heatmap(path: &Path) -> Result<Heatmap> {
    decode_heatmap(&read_file(path)?)
}

pub fn save_heatmap(hm: &Heatmap, path: &Path) -> Result<()> {
    write_atomic(path, &encode_heatmap(hm))
}

pub fn load_mask(path: &Path) -> Result<SegMask> {
    decode_mask(&read_file(path)?)
}

pub fn save_mask(mask: &SegMask, path: &Path) -> Result<()> {
    write_atomic(path, &encode_mask(mask))
}
