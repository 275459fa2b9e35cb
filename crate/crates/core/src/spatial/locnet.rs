use rand::Rng;

use crate::autodiff::{Var, PARAM_COUNT};
use crate::error::{Error, Result};
use crate::nn::{BatchNorm, Conv2d, Ctx, Linear, ParamStore};
use crate::scalar::Scalar;

pub const LOCNET_HIDDEN: usize = 64;

/// Localization head regressing (t_x, t_y, θ, s) from U-Net bottleneck
/// features: two [conv3×3 → BN → ReLU → maxpool2] blocks, global average
/// pooling, then two fully connected layers.
#[derive(Debug, Clone)]
pub struct LocNet {
    convs: [Conv2d; 2],
    norms: [BatchNorm; 2],
    hidden: Linear,
    out: Linear,
}

impl LocNet {
    pub fn new(prefix: &str, in_channels: usize, filters: usize, hidden: usize) -> Self {
        Self {
            convs: [
                Conv2d::new(&format!("{prefix}.conv1"), in_channels, filters, 3),
                Conv2d::new(&format!("{prefix}.conv2"), filters, filters, 3),
            ],
            norms: [
                BatchNorm::new(&format!("{prefix}.bn1"), filters),
                BatchNorm::new(&format!("{prefix}.bn2"), filters),
            ],
            hidden: Linear::new(&format!("{prefix}.fc1"), filters, hidden),
            out: Linear::new(&format!("{prefix}.fc2"), hidden, PARAM_COUNT),
        }
    }

    pub fn declare<T: Scalar, R: Rng + ?Sized>(&self, store: &mut ParamStore<T>, rng: &mut R) -> Result<()> {
        for (c, n) in self.convs.iter().zip(&self.norms) {
            c.declare(store, rng)?;
            n.declare(store)?;
        }
        self.hidden.declare(store, rng)?;
        self.out.declare(store, rng)
    }

    /// Name of the final layer's bias, laid out as (t_x, t_y, θ, s).
    pub fn output_bias(&self) -> &str {
        &self.out.bias
    }

    /// N×C×h×w bottleneck → N×4 (t_x, t_y, θ, s) predictions.
    pub fn forward<T: Scalar>(&self, ctx: &mut Ctx<'_, T>, bottleneck: Var) -> Result<Var> {
        let (_, _, h, w) = ctx.graph.value(bottleneck).dims4()?;
        if h < 4 || w < 4 {
            return Err(Error::Config(format!(
                "localization head needs at least 4×4 bottleneck features, got {h}×{w}"
            )));
        }
        let mut x = bottleneck;
        for (c, n) in self.convs.iter().zip(&self.norms) {
            x = c.forward(ctx, x)?;
            x = n.forward(ctx, x)?;
            x = ctx.graph.relu(x);
            x = ctx.graph.maxpool2(x)?;
        }
        x = ctx.graph.global_avg_pool(x)?;
        x = self.hidden.forward(ctx, x)?;
        x = ctx.graph.relu(x);
        self.out.forward(ctx, x)
    }
}
