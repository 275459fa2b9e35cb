//! Binary PGM (P5) reading and writing: 16-bit images and 8-bit label maps.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{DataError, Result};

/// Raw intensities are stored clamped to [0, IMAGE_RANGE].
pub const IMAGE_RANGE: f64 = 2.0;

/// A decoded PGM raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub max_value: u16,
    pub pixels: Vec<u16>,
}

pub fn encode_pgm(pgm: &Pgm) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n{}\n", pgm.width, pgm.height, pgm.max_value).into_bytes();
    if pgm.max_value > 255 {
        for &p in &pgm.pixels {
            out.extend_from_slice(&p.to_be_bytes());
        }
    } else {
        out.extend(pgm.pixels.iter().map(|&p| p as u8));
    }
    out
}

pub fn decode_pgm(bytes: &[u8], name: &str) -> Result<Pgm> {
    let bad = |reason: &str| DataError::Pgm {
        path: name.to_string(),
        reason: reason.to_string(),
    };
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
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
    if fields[0] != "P5" {
        return Err(bad("not a binary PGM (P5)"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad("malformed header number"));
    let (width, height, max_value) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
    if max_value == 0 || max_value > 65535 {
        return Err(bad("max value out of range"));
    }
    pos += 1; // single whitespace after the header
    let bpp = if max_value > 255 { 2 } else { 1 };
    let data = bytes.get(pos..).unwrap_or(&[]);
    if data.len() != width * height * bpp {
        return Err(bad("pixel data length does not match header"));
    }
    let pixels = if bpp == 2 {
        data.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
    } else {
        data.iter().map(|&b| b as u16).collect()
    };
    Ok(Pgm {
        width,
        height,
        max_value: max_value as u16,
        pixels,
    })
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(bytes)?;
    Ok(())
}

const IMAGE_LEVELS: f64 = 65535.0;

fn image_level(v: f64) -> u16 {
    ((v / IMAGE_RANGE).clamp(0.0, 1.0) * IMAGE_LEVELS).round() as u16
}

fn level_value(level: u16, max_value: u16) -> f64 {
    level as f64 * (IMAGE_RANGE / max_value as f64)
}

/// Snaps an intensity onto the 16-bit storage grid, so that writing and
/// reading it back is lossless.
pub fn quantize(v: f64) -> f64 {
    level_value(image_level(v), IMAGE_LEVELS as u16)
}

/// 16-bit image: [0, IMAGE_RANGE] mapped linearly onto 0..65535.
pub fn write_image(path: &Path, image: &[f64], size: usize) -> Result<()> {
    let pixels = image.iter().map(|&v| image_level(v)).collect();
    write_bytes(
        path,
        &encode_pgm(&Pgm {
            width: size,
            height: size,
            max_value: 65535,
            pixels,
        }),
    )
}

pub fn read_image(path: &Path) -> Result<(Vec<f64>, usize, usize)> {
    let pgm = decode_pgm(&fs::read(path)?, &path.display().to_string())?;
    let image = pgm.pixels.iter().map(|&p| level_value(p, pgm.max_value)).collect();
    Ok((image, pgm.height, pgm.width))
}

/// 8-bit label map holding raw class indices.
pub fn write_labels(path: &Path, labels: &[u8], size: usize) -> Result<()> {
    write_bytes(
        path,
        &encode_pgm(&Pgm {
            width: size,
            height: size,
            max_value: 255,
            pixels: labels.iter().map(|&l| l as u16).collect(),
        }),
    )
}

pub fn read_labels(path: &Path) -> Result<(Vec<u8>, usize, usize)> {
    let pgm = decode_pgm(&fs::read(path)?, &path.display().to_string())?;
    if pgm.max_value > 255 {
        return Err(DataError::Pgm {
            path: path.display().to_string(),
            reason: "label maps must be 8-bit".into(),
        });
    }
    Ok((pgm.pixels.iter().map(|&p| p as u8).collect(), pgm.height, pgm.width))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sixteen_bit_round_trip() {
        let pgm = Pgm {
            width: 3,
            height: 2,
            max_value: 65535,
            pixels: vec![0, 1, 256, 65535, 1234, 40000],
        };
        assert_eq!(decode_pgm(&encode_pgm(&pgm), "t").unwrap(), pgm);
    }

    #[test]
    fn comments_are_skipped_and_truncation_detected() {
        let mut bytes = b"P5\n# comment\n2 1\n255\n".to_vec();
        bytes.extend([3, 4]);
        assert_eq!(decode_pgm(&bytes, "t").unwrap().pixels, [3, 4]);
        bytes.pop();
        assert!(decode_pgm(&bytes, "t").is_err());
        assert!(decode_pgm(b"P2\n1 1\n255\n0", "t").is_err());
    }
}
