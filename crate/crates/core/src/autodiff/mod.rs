//! Reverse-mode automatic differentiation over the operation set used by the
//! segmentation networks.
//!
//! A [`Graph`] records operations in the order they are issued; node ids are
//! therefore already a topological order and [`Graph::backward`] walks them in
//! reverse. Parameters and inputs enter as leaves; gradients are kept only for
//! leaves once backward completes.

mod conv;
mod elementwise;
mod gradcheck;
mod graph;
mod loss;
mod norm;
mod pool;
mod sampler;

pub use gradcheck::{check_gradient, check_gradient_at};
pub use graph::{Graph, Mode, Var};
pub use loss::{CCE_CLIP, PARAM_COUNT};
pub use norm::{BatchStats, BN_EPSILON};
pub use sampler::{pixel_coord, sample_bilinear_into, Strides};

pub(crate) fn sampler_strides(chan: usize, pix: usize) -> Strides {
    Strides { chan, pix }
}
