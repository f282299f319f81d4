//! `DMAP` depth-map files.
//!
//! Layout: `"DMAP"`, width (u32 LE), height (u32 LE), reserved u32 (0), then
//! five row-major f32 LE planes: depth, normal x, normal y, normal z, cost.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::depth_map::DepthMap;

pub const DMAP_MAGIC: &[u8; 4] = b"DMAP";
pub const DMAP_HEADER_LEN: usize = 16;

#[derive(Debug, Error)]
pub enum DmapError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("bad magic {0:?}, expected \"DMAP\"")]
    BadMagic(Vec<u8>),
    #[error("size mismatch: expected {expected} bytes, found {found}")]
    SizeMismatch { expected: usize, found: usize },
    #[error("reserved header field is {0}, expected 0")]
    Reserved(u32),
}

/// File size for a `width × height` map.
pub fn dmap_len(width: usize, height: usize) -> usize {
    DMAP_HEADER_LEN + 5 * width * height * 4
}

pub fn encode_depthmap(map: &DepthMap) -> Vec<u8> {
    let (w, h) = map.dims();
    let mut out = Vec::with_capacity(dmap_len(w, h));
    out.extend_from_slice(DMAP_MAGIC);
    out.extend_from_slice(&(w as u32).to_le_bytes());
    out.extend_from_slice(&(h as u32).to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    for &d in map.depths() {
        out.extend_from_slice(&d.to_le_bytes());
    }
    for axis in 0..3 {
        for n in map.normals() {
            out.extend_from_slice(&n[axis].to_le_bytes());
        }
    }
    for &c in map.costs() {
        out.extend_from_slice(&c.to_le_bytes());
    }
    out
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

fn plane(bytes: &[u8], index: usize, n: usize) -> impl Iterator<Item = f32> + '_ {
    let start = DMAP_HEADER_LEN + index * n * 4;
    bytes[start..start + n * 4]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
}

pub fn decode_depthmap(bytes: &[u8]) -> Result<DepthMap, DmapError> {
    if bytes.len() < DMAP_HEADER_LEN {
        if bytes.len() >= 4 && &bytes[..4] != DMAP_MAGIC {
            return Err(DmapError::BadMagic(bytes[..4].to_vec()));
        }
        return Err(DmapError::SizeMismatch {
            expected: DMAP_HEADER_LEN,
            found: bytes.len(),
        });
    }
    if &bytes[..4] != DMAP_MAGIC {
        return Err(DmapError::BadMagic(bytes[..4].to_vec()));
    }
    let w = read_u32(bytes, 4) as usize;
    let h = read_u32(bytes, 8) as usize;
    let reserved = read_u32(bytes, 12);
    if reserved != 0 {
        return Err(DmapError::Reserved(reserved));
    }
    let expected = w
        .checked_mul(h)
        .and_then(|n| n.checked_mul(20))
        .and_then(|n| n.checked_add(DMAP_HEADER_LEN));
    if expected != Some(bytes.len()) {
        return Err(DmapError::SizeMismatch {
            expected: expected.unwrap_or(usize::MAX),
            found: bytes.len(),
        });
    }
    let n = w * h;
    let depth: Vec<f32> = plane(bytes, 0, n).collect();
    let mut normal = vec![[0f32; 3]; n];
    for axis in 0..3 {
        for (dst, v) in normal.iter_mut().zip(plane(bytes, 1 + axis, n)) {
            dst[axis] = v;
        }
    }
    let cost: Vec<f32> = plane(bytes, 4, n).collect();
    Ok(DepthMap::from_planes(w, h, depth, normal, cost).expect("planes sized"))
}

pub fn write_depthmap(path: &Path, map: &DepthMap) -> io::Result<()> {
    fs::write(path, encode_depthmap(map))
}

pub fn read_depthmap(path: &Path) -> Result<DepthMap, DmapError> {
    decode_depthmap(&fs::read(path)?)
}
