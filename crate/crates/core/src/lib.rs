//! Canonical-orientation cardiac MR segmentation: a U-Net front end, a
//! rigid spatial transformer that resamples the image into a canonical
//! pose, and stacked U-Nets that segment in that pose.
//!
//! All numerical code is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the crate root name the concrete instantiations.

pub mod autodiff;
pub mod error;
pub mod gradsuite;
pub mod metrics;
pub mod nn;
pub mod omega;
pub mod scalar;
pub mod spatial;
pub mod tensor;
pub mod unet;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::Tensor;

pub type Tensor32 = tensor::Tensor<f32>;
pub type Tensor64 = tensor::Tensor<f64>;
pub type Graph32 = autodiff::Graph<f32>;
pub type Graph64 = autodiff::Graph<f64>;
pub type ParamStore32 = nn::ParamStore<f32>;
pub type ParamStore64 = nn::ParamStore<f64>;
pub type RigidParams32 = spatial::RigidParams<f32>;
pub type RigidParams64 = spatial::RigidParams<f64>;
pub type SimilarityMatrix32 = spatial::SimilarityMatrix<f32>;
pub type SimilarityMatrix64 = spatial::SimilarityMatrix<f64>;
