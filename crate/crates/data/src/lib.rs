//! Synthetic cardiac MR data with exact ground-truth poses, and the
//! preprocessing, augmentation, fold partitioning and file formats used to
//! train and evaluate the segmentation networks.

pub mod augment;
pub mod dataset;
pub mod error;
pub mod folds;
pub mod pgm;
pub mod phantom;
pub mod preprocess;
pub mod seed;

pub use augment::{augment, apply_augmentation, AugmentRanges, Augmented};
pub use dataset::{
    fmt17, generate_dataset, prepare, read_dataset, sample_id, subject_counts, write_dataset, DatasetConfig,
    Prepared,
};
pub use error::{DataError, Result};
pub use folds::{partition_folds, FoldAssignment};
pub use phantom::{generate_phantom, Corruption, Sample, Scene, SubjectTraits, View, ViewFamily, NUM_CLASSES};
pub use preprocess::{preprocess, Preprocessed};
pub use seed::{mix_seed, stream_seed};
