//! Binary PGM (P5) and PPM (P6) rasters, 8 bits per sample.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::raster::{GrayImage, LabelMap, RgbImage};

#[derive(Debug, Error)]
pub enum RasterError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("wrong magic: expected {expected}, found {found:?}")]
    WrongMagic {
        expected: &'static str,
        found: String,
    },
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("unsupported maxval {0} (only 255 is accepted)")]
    BadMaxval(u64),
    #[error("malformed header: {0}")]
    MalformedHeader(String),
}

struct Header {
    width: usize,
    height: usize,
    payload_offset: usize,
}

fn parse_header(bytes: &[u8], magic: &'static str) -> Result<Header, RasterError> {
    if bytes.len() < 2 {
        return Err(RasterError::WrongMagic {
            expected: magic,
            found: String::from_utf8_lossy(bytes).into_owned(),
        });
    }
    if &bytes[..2] != magic.as_bytes() {
        return Err(RasterError::WrongMagic {
            expected: magic,
            found: String::from_utf8_lossy(&bytes[..2]).into_owned(),
        });
    }
    let mut pos = 2;
    let mut fields = [0u64; 3];
    for (i, field) in fields.iter_mut().enumerate() {
        // Whitespace and comments before every field; at least one separator.
        let start = pos;
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while let Some(&c) = bytes.get(pos) {
                        pos += 1;
                        if c == b'\n' || c == b'\r' {
                            break;
                        }
                    }
                }
                Some(c) if c.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => {
                    return Err(RasterError::Truncated {
                        expected: pos + 1,
                        found: bytes.len(),
                    })
                }
            }
        }
        if pos == start {
            return Err(RasterError::MalformedHeader(format!(
                "missing separator before header field {i}"
            )));
        }
        let digits_start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if pos == digits_start {
            return Err(RasterError::MalformedHeader(format!(
                "header field {i} is not a decimal number"
            )));
        }
        let text = std::str::from_utf8(&bytes[digits_start..pos]).expect("ascii digits");
        *field = text
            .parse()
            .map_err(|_| RasterError::MalformedHeader(format!("header field {i} overflows")))?;
    }
    match bytes.get(pos) {
        Some(c) if c.is_ascii_whitespace() => pos += 1,
        Some(_) => {
            return Err(RasterError::MalformedHeader(
                "expected whitespace after maxval".into(),
            ))
        }
        None => {
            return Err(RasterError::Truncated {
                expected: pos + 1,
                found: bytes.len(),
            })
        }
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(RasterError::BadMaxval(maxval));
    }
    if width == 0 || height == 0 {
        return Err(RasterError::MalformedHeader(format!(
            "empty raster {width}x{height}"
        )));
    }
    let width = usize::try_from(width)
        .map_err(|_| RasterError::MalformedHeader("width too large".into()))?;
    let height = usize::try_from(height)
        .map_err(|_| RasterError::MalformedHeader("height too large".into()))?;
    Ok(Header {
        width,
        height,
        payload_offset: pos,
    })
}

fn payload<'a>(bytes: &'a [u8], header: &Header, channels: usize) -> Result<&'a [u8], RasterError> {
    let expected = header
        .width
        .checked_mul(header.height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| RasterError::MalformedHeader("raster size overflows".into()))?;
    let body = &bytes[header.payload_offset..];
    if body.len() < expected {
        return Err(RasterError::Truncated {
            expected,
            found: body.len(),
        });
    }
    Ok(&body[..expected])
}

/// Raw 8-bit samples of a P5 file.
pub fn decode_pgm_bytes(bytes: &[u8]) -> Result<LabelMap, RasterError> {
    let header = parse_header(bytes, "P5")?;
    let data = payload(bytes, &header, 1)?.to_vec();
    Ok(LabelMap::from_vec(header.width, header.height, data).expect("payload sized"))
}

/// P5 samples scaled into `[0, 1]`.
pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage, RasterError> {
    let raw = decode_pgm_bytes(bytes)?;
    let (w, h) = raw.dims();
    let data = raw
        .into_vec()
        .into_iter()
        .map(|b| b as f32 / 255.0)
        .collect();
    Ok(GrayImage::from_vec(w, h, data).expect("same size"))
}

pub fn decode_ppm(bytes: &[u8]) -> Result<RgbImage, RasterError> {
    let header = parse_header(bytes, "P6")?;
    let data = payload(bytes, &header, 3)?
        .chunks_exact(3)
        .map(|c| [c[0], c[1], c[2]])
        .collect();
    Ok(RgbImage::from_vec(header.width, header.height, data).expect("payload sized"))
}

pub fn load_pgm(path: &Path) -> Result<GrayImage, RasterError> {
    decode_pgm(&fs::read(path)?)
}

pub fn load_label_map(path: &Path) -> Result<LabelMap, RasterError> {
    decode_pgm_bytes(&fs::read(path)?)
}

pub fn load_ppm(path: &Path) -> Result<RgbImage, RasterError> {
    decode_ppm(&fs::read(path)?)
}

pub fn encode_pgm_bytes(raster: &LabelMap) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", raster.width(), raster.height()).into_bytes();
    out.extend_from_slice(raster.as_slice());
    out
}

/// Quantizes intensities to 8 bits (`round(v * 255)`, clamped).
pub fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn encode_pgm(image: &GrayImage) -> Vec<u8> {
    let (w, h) = image.dims();
    let bytes = image.as_slice().iter().map(|&v| quantize(v)).collect();
    encode_pgm_bytes(&LabelMap::from_vec(w, h, bytes).expect("same size"))
}

pub fn encode_ppm(image: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    for px in image.as_slice() {
        out.extend_from_slice(px);
    }
    out
}

pub fn write_pgm(path: &Path, image: &GrayImage) -> io::Result<()> {
    fs::write(path, encode_pgm(image))
}

pub fn write_label_map(path: &Path, labels: &LabelMap) -> io::Result<()> {
    fs::write(path, encode_pgm_bytes(labels))
}

pub fn write_ppm(path: &Path, image: &RgbImage) -> io::Result<()> {
    fs::write(path, encode_ppm(image))
}
