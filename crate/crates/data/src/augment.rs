//! Random rigid augmentation with consistent ground-truth pose updates.

use omega_core::spatial::{compose_similarity, decompose_similarity, warp_image, warp_labels_nearest, RigidParams};
use rand::Rng;

use crate::error::Result;

/// Half-widths of the uniform augmentation draws.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentRanges {
    /// Maximum shift per axis as a fraction of the image width.
    pub translation: f64,
    /// Maximum rotation in radians.
    pub rotation: f64,
    /// Scale factors are drawn from [1 − scale, 1 + scale].
    pub scale: f64,
}

impl Default for AugmentRanges {
    fn default() -> Self {
        Self {
            translation: 0.15,
            rotation: 15f64.to_radians(),
            scale: 0.15,
        }
    }
}

impl AugmentRanges {
    pub const NONE: AugmentRanges = AugmentRanges {
        translation: 0.0,
        rotation: 0.0,
        scale: 0.0,
    };

    pub fn is_identity(&self) -> bool {
        self.translation == 0.0 && self.rotation == 0.0 && self.scale == 0.0
    }

    /// Draws an augmentation transform. Exactly four values are consumed
    /// from `rng` regardless of the ranges.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> RigidParams<f64> {
        // The normalized coordinate span of the image width is 2.
        let t = 2.0 * self.translation;
        let mut sym = |half: f64| rng.gen_range(-1.0..=1.0) * half;
        let tx = sym(t);
        let ty = sym(t);
        let theta = sym(self.rotation);
        let s = 1.0 + sym(self.scale);
        RigidParams::new(tx, ty, theta, s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Augmented {
    pub image: Vec<f64>,
    pub labels: Vec<u8>,
    pub params: RigidParams<f64>,
}

/// Warps image (bilinear) and labels (nearest) by a random A and replaces the
/// pose M by A⁻¹·M, so resampling the augmented image with the new pose still
/// yields the canonical orientation.
pub fn augment<R: Rng + ?Sized>(
    image: &[f64],
    labels: &[u8],
    size: usize,
    params: &RigidParams<f64>,
    rng: &mut R,
    ranges: &AugmentRanges,
) -> Result<Augmented> {
    let a = ranges.draw(rng);
    if ranges.is_identity() {
        return Ok(Augmented {
            image: image.to_vec(),
            labels: labels.to_vec(),
            params: *params,
        });
    }
    apply_augmentation(image, labels, size, params, &a)
}

/// Deterministic part of [`augment`] for a given transform `a`.
pub fn apply_augmentation(
    image: &[f64],
    labels: &[u8],
    size: usize,
    params: &RigidParams<f64>,
    a: &RigidParams<f64>,
) -> Result<Augmented> {
    let m_a = compose_similarity(a);
    let extent = (size, size);
    let new_pose = m_a.inverse().mul(&compose_similarity(params));
    Ok(Augmented {
        image: warp_image(image, extent, &m_a, extent)?,
        labels: warp_labels_nearest(labels, extent, &m_a, extent)?,
        params: decompose_similarity(&new_pose)?,
    })
}
