//! Rigid (translation, rotation, uniform scale) transformation module:
//! similarity-matrix algebra, wrapped-phase regression losses, sampling grids,
//! bilinear resampling, and the localization head.

mod grid;
mod locnet;
mod losses;
mod similarity;

pub use grid::{
    apply_affine, bilinear_sample, generate_grid, linspace_value, transform_grid, warp_image,
    warp_labels_nearest, SampleGrid,
};
pub use locnet::{LocNet, LOCNET_HIDDEN};
pub use losses::{image_losses, image_losses_graph, matrix_losses, matrix_losses_graph, ImageLosses, MatrixLosses};
pub use similarity::{compose_similarity, decompose_similarity, wrap, GridKind, RigidParams, SimilarityMatrix};
