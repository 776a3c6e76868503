//! Little-endian grid container shared by the feature-map (`VRFM`) and raw
//! image (`VRIM`) dumps: 4-byte magic, `u32` version, three `u32` dims,
//! then `f32` payload.

use std::io::{Read, Write};

use crate::error::{Error, Result};

pub const GRID_VERSION: u32 = 1;
const HEADER_LEN: usize = 20;
/// Upper bound on payload elements (16 GiB of f32) to reject corrupt headers early.
const MAX_ELEMENTS: u64 = 1 << 32;

pub fn write_grid<W: Write>(mut w: W, magic: &[u8; 4], dims: [u32; 3], data: &[f64]) -> Result<()> {
    let mut buf = Vec::with_capacity(HEADER_LEN + data.len() * 4);
    buf.extend_from_slice(magic);
    buf.extend_from_slice(&GRID_VERSION.to_le_bytes());
    for d in dims {
        buf.extend_from_slice(&d.to_le_bytes());
    }
    for v in data {
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_grid<R: Read>(mut r: R, magic: &[u8; 4]) -> Result<([usize; 3], Vec<f64>)> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    parse_grid(&bytes, magic)
}

pub fn parse_grid(bytes: &[u8], magic: &[u8; 4]) -> Result<([usize; 3], Vec<f64>)> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    if &bytes[..4] != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&bytes[..4]),
            String::from_utf8_lossy(magic)
        )));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap());
    let version = word(0);
    if version != GRID_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let dims = [word(1), word(2), word(3)];
    if dims.contains(&0) {
        return Err(Error::Format(format!("zero dimension in header {dims:?}")));
    }
    let count = dims.iter().try_fold(1u64, |acc, &d| acc.checked_mul(d as u64));
    let Some(count) = count.filter(|&c| c <= MAX_ELEMENTS) else {
        return Err(Error::Format(format!("header dims {dims:?} overflow the size limit")));
    };
    let expected = HEADER_LEN + count as usize * 4;
    if bytes.len() < expected {
        return Err(Error::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(Error::Format(format!(
            "{} trailing bytes after payload",
            bytes.len() - expected
        )));
    }
    let data = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Ok((dims.map(|d| d as usize), data))
}
