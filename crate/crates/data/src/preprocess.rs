//! Intensity normalization applied to every image before it reaches a
//! network: crop/pad to a square extent, illumination correction, histogram
//! equalization and standardization.

use crate::error::{DataError, Result};

/// Lower bound on the illumination estimate.
pub const ILLUMINATION_FLOOR: f64 = 1e-3;
pub const HISTOGRAM_BINS: usize = 256;

/// Result of [`preprocess`].
#[derive(Debug, Clone, PartialEq)]
pub struct Preprocessed {
    pub image: Vec<f64>,
    pub size: usize,
    /// True when the image had no contrast and was returned as zeros.
    pub constant: bool,
}

/// Centre crop or symmetric zero pad of an h×w image to size×size. Odd
/// differences put the extra row/column at the bottom/right.
pub fn crop_or_pad(image: &[f64], (h, w): (usize, usize), size: usize) -> Result<Vec<f64>> {
    if image.len() != h * w {
        return Err(DataError::InvalidParams("image buffer does not match its extent".into()));
    }
    let mut out = vec![0.0; size * size];
    // Offset of output row 0 in input coordinates (negative when padding).
    let off = |n: usize| (n as isize - size as isize).div_euclid(2);
    let (oy, ox) = (off(h), off(w));
    for r in 0..size {
        let sr = r as isize + oy;
        if sr < 0 || sr >= h as isize {
            continue;
        }
        for c in 0..size {
            let sc = c as isize + ox;
            if sc >= 0 && sc < w as isize {
                out[r * size + c] = image[sr as usize * w + sc as usize];
            }
        }
    }
    Ok(out)
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as usize;
    let k: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-0.5 * d * d / (sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = k.iter().sum();
    k.into_iter().map(|v| v / total).collect()
}

/// Separable Gaussian blur of a square image with edge replication.
pub fn gaussian_blur(image: &[f64], size: usize, sigma: f64) -> Vec<f64> {
    let k = gaussian_kernel(sigma);
    let radius = (k.len() / 2) as isize;
    let clamp = |i: isize| i.clamp(0, size as isize - 1) as usize;
    let mut tmp = vec![0.0; image.len()];
    for r in 0..size {
        for c in 0..size {
            tmp[r * size + c] = k
                .iter()
                .enumerate()
                .map(|(j, w)| w * image[r * size + clamp(c as isize + j as isize - radius)])
                .sum();
        }
    }
    let mut out = vec![0.0; image.len()];
    for r in 0..size {
        for c in 0..size {
            out[r * size + c] = k
                .iter()
                .enumerate()
                .map(|(j, w)| w * tmp[clamp(r as isize + j as isize - radius) * size + c])
                .sum();
        }
    }
    out
}

/// Divides by a Gaussian-blurred copy of the image (σ = width/8), clamped
/// below at [`ILLUMINATION_FLOOR`].
pub fn correct_illumination(image: &[f64], size: usize) -> Vec<f64> {
    let field = gaussian_blur(image, size, size as f64 / 8.0);
    image
        .iter()
        .zip(&field)
        .map(|(v, f)| v / f.max(ILLUMINATION_FLOOR))
        .collect()
}

/// Global histogram equalization with [`HISTOGRAM_BINS`] bins spanning the
/// image range, mapping each bin through the normalized CDF to [0, 1]. A
/// constant image maps to zeros.
pub fn equalize_histogram(image: &[f64]) -> Vec<f64> {
    let (lo, hi) = image
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if image.is_empty() || hi <= lo {
        return vec![0.0; image.len()];
    }
    let bin = |v: f64| (((v - lo) / (hi - lo) * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1);
    let mut cdf = [0usize; HISTOGRAM_BINS];
    for &v in image {
        cdf[bin(v)] += 1;
    }
    for i in 1..HISTOGRAM_BINS {
        cdf[i] += cdf[i - 1];
    }
    let first = cdf.iter().copied().find(|&c| c > 0).unwrap_or(0);
    let denom = (image.len() - first) as f64;
    image
        .iter()
        .map(|&v| if denom > 0.0 { (cdf[bin(v)] - first) as f64 / denom } else { 0.0 })
        .collect()
}

/// Zero mean, unit (population) standard deviation. Returns `None` for an
/// image without variance.
pub fn standardize(image: &[f64]) -> Option<Vec<f64>> {
    let n = image.len() as f64;
    let mean = image.iter().sum::<f64>() / n;
    let var = image.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    if !(sd > 1e-12) {
        return None;
    }
    let mut out: Vec<f64> = image.iter().map(|v| (v - mean) / sd).collect();
    // One correction pass removes the rounding residue of the first.
    let m2 = out.iter().sum::<f64>() / n;
    out.iter_mut().for_each(|v| *v -= m2);
    Some(out)
}

/// Full pipeline for an h×w raw image.
pub fn preprocess(raw: &[f64], extent: (usize, usize), size: usize) -> Result<Preprocessed> {
    let framed = crop_or_pad(raw, extent, size)?;
    let corrected = correct_illumination(&framed, size);
    let equalized = equalize_histogram(&corrected);
    Ok(match standardize(&equalized) {
        Some(image) => Preprocessed {
            image,
            size,
            constant: false,
        },
        None => Preprocessed {
            image: vec![0.0; size * size],
            size,
            constant: true,
        },
    })
}
