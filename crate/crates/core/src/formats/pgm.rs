//! Binary PGM (P5, maxval 255) heatmaps.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

/// Scales a map so its maximum is 255: `round(255·v / max)`. An all-zero (or
/// non-positive) map renders black.
pub fn heatmap<T: Scalar>(map: &Matrix<T>) -> GrayImage {
    let max = map.max_value().unwrap_or_else(T::zero);
    let pixels = map
        .as_slice()
        .iter()
        .map(|&v| {
            if max > T::zero() {
                (255.0 * (v / max).as_f64()).round().clamp(0.0, 255.0) as u8
            } else {
                0
            }
        })
        .collect();
    GrayImage {
        width: map.cols(),
        height: map.rows(),
        pixels,
    }
}

pub fn encode_pgm(image: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.extend_from_slice(&image.pixels);
    out
}

/// Reads the P5 files produced by [`encode_pgm`] (no comments, maxval 255).
pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let bad = |m: &str| Error::parse(1, format!("PGM: {m}"));
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ASCII header"))?);
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    if fields[0] != "P5" {
        return Err(bad("not a binary graymap"));
    }
    let width: usize = fields[1].parse().map_err(|_| bad("invalid width"))?;
    let height: usize = fields[2].parse().map_err(|_| bad("invalid height"))?;
    if fields[3] != "255" {
        return Err(bad("maxval must be 255"));
    }
    let raster = bytes.get(pos..).unwrap_or(&[]);
    if raster.len() != width * height {
        return Err(bad("raster size does not match header"));
    }
    Ok(GrayImage {
        width,
        height,
        pixels: raster.to_vec(),
    })
}
