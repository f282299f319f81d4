//! Binary little-endian PLY point clouds.
//!
//! Each vertex carries `x y z` (float32), `red green blue` (uint8), the class
//! `label` (uint8) and the fusion `support` count (uint8, clamped at 255).

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::semantic_fusion::FusedCloud;

/// Bytes per vertex in the payload.
pub const PLY_VERTEX_LEN: usize = 12 + 3 + 1 + 1;

#[derive(Debug, Error)]
pub enum PlyError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("malformed PLY: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlyVertex {
    pub position: [f32; 3],
    pub color: [u8; 3],
    pub label: u8,
    pub support: u8,
}

fn header(count: usize) -> String {
    format!(
        "ply\n\
         format binary_little_endian 1.0\n\
         element vertex {count}\n\
         property float x\n\
         property float y\n\
         property float z\n\
         property uchar red\n\
         property uchar green\n\
         property uchar blue\n\
         property uchar label\n\
         property uchar support\n\
         end_header\n"
    )
}

pub fn encode_ply(cloud: &FusedCloud) -> Vec<u8> {
    let head = header(cloud.points.len());
    let mut out = Vec::with_capacity(head.len() + cloud.points.len() * PLY_VERTEX_LEN);
    out.extend_from_slice(head.as_bytes());
    for p in &cloud.points {
        for c in p.position.iter() {
            out.extend_from_slice(&(*c as f32).to_le_bytes());
        }
        out.extend_from_slice(&p.color);
        out.push(p.label);
        out.push(p.support.min(255) as u8);
    }
    out
}

pub fn write_ply(path: &Path, cloud: &FusedCloud) -> io::Result<()> {
    fs::write(path, encode_ply(cloud))
}

/// Reads files in exactly the layout [`encode_ply`] produces.
pub fn decode_ply(bytes: &[u8]) -> Result<Vec<PlyVertex>, PlyError> {
    const END: &[u8] = b"end_header\n";
    let end = bytes
        .windows(END.len())
        .position(|w| w == END)
        .ok_or_else(|| PlyError::Malformed("missing end_header".into()))?;
    let head = std::str::from_utf8(&bytes[..end])
        .map_err(|_| PlyError::Malformed("header is not UTF-8".into()))?;
    let count: usize = head
        .lines()
        .find_map(|l| l.strip_prefix("element vertex "))
        .and_then(|n| n.trim().parse().ok())
        .ok_or_else(|| PlyError::Malformed("missing vertex count".into()))?;
    if head != header(count).trim_end_matches("end_header\n") {
        return Err(PlyError::Malformed("unexpected header layout".into()));
    }
    let body = &bytes[end + END.len()..];
    if body.len() != count * PLY_VERTEX_LEN {
        return Err(PlyError::Malformed(format!(
            "payload is {} bytes, expected {}",
            body.len(),
            count * PLY_VERTEX_LEN
        )));
    }
    Ok(body
        .chunks_exact(PLY_VERTEX_LEN)
        .map(|c| {
            let f = |i: usize| f32::from_le_bytes(c[i..i + 4].try_into().expect("4 bytes"));
            PlyVertex {
                position: [f(0), f(4), f(8)],
                color: [c[12], c[13], c[14]],
                label: c[15],
                support: c[16],
            }
        })
        .collect())
}

pub fn read_ply(path: &Path) -> Result<Vec<PlyVertex>, PlyError> {
    decode_ply(&fs::read(path)?)
}
