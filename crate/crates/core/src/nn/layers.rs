use rand::Rng;

use crate::autodiff::{Mode, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::init::orthogonal_init;
use super::params::{Ctx, ParamStore};

/// Running statistics keep this fraction of their previous value per update.
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub weight: String,
    pub bias: String,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
}

impl Conv2d {
    pub fn new(prefix: &str, in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        Self {
            weight: format!("{prefix}.weight"),
            bias: format!("{prefix}.bias"),
            in_channels,
            out_channels,
            kernel,
        }
    }

    pub fn declare<T: Scalar, R: Rng + ?Sized>(&self, store: &mut ParamStore<T>, rng: &mut R) -> Result<()> {
        let shape = [self.out_channels, self.in_channels, self.kernel, self.kernel];
        store.insert(&self.weight, orthogonal_init(&shape, rng)?, true)?;
        store.insert(&self.bias, Tensor::zeros(&[self.out_channels]), true)
    }

    pub fn forward<T: Scalar>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let w = ctx.param(&self.weight)?;
        let b = ctx.param(&self.bias)?;
        ctx.graph.conv2d(x, w, b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub prefix: String,
    pub channels: usize,
}

impl BatchNorm {
    pub fn new(prefix: &str, channels: usize) -> Self {
        Self {
            prefix: prefix.to_string(),
            channels,
        }
    }

    fn name(&self, suffix: &str) -> String {
        format!("{}.{suffix}", self.prefix)
    }

    pub fn declare<T: Scalar>(&self, store: &mut ParamStore<T>) -> Result<()> {
        let c = self.channels;
        store.insert(self.name("gamma"), Tensor::full(&[c], T::one()), true)?;
        store.insert(self.name("beta"), Tensor::zeros(&[c]), true)?;
        store.insert(self.name("running_mean"), Tensor::zeros(&[c]), false)?;
        store.insert(self.name("running_var"), Tensor::full(&[c], T::one()), false)?;
        store.insert(self.name("tracked"), Tensor::zeros(&[1]), false)
    }

    /// Training mode normalizes with batch statistics and records them on the
    /// context; inference mode uses the running averages and fails if no
    /// training update has ever been folded in.
    pub fn forward<T: Scalar>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let gamma = ctx.param(&self.name("gamma"))?;
        let beta = ctx.param(&self.name("beta"))?;
        match ctx.mode() {
            Mode::Training => {
                let (y, stats) = ctx.graph.batchnorm_train(x, gamma, beta)?;
                ctx.record_batch_stats(&self.prefix, stats);
                Ok(y)
            }
            Mode::Inference => {
                if ctx.buffer(&self.name("tracked"))?.data()[0] <= T::zero() {
                    return Err(Error::Config(format!(
                        "batch norm {} has no running statistics yet",
                        self.prefix
                    )));
                }
                let mean = ctx.buffer(&self.name("running_mean"))?.data().to_vec();
                let var = ctx.buffer(&self.name("running_var"))?.data().to_vec();
                ctx.graph.batchnorm_eval(x, gamma, beta, &mean, &var)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: String,
    pub bias: String,
    pub in_features: usize,
    pub out_features: usize,
}

impl Linear {
    pub fn new(prefix: &str, in_features: usize, out_features: usize) -> Self {
        Self {
            weight: format!("{prefix}.weight"),
            bias: format!("{prefix}.bias"),
            in_features,
            out_features,
        }
    }

    pub fn declare<T: Scalar, R: Rng + ?Sized>(&self, store: &mut ParamStore<T>, rng: &mut R) -> Result<()> {
        store.insert(
            &self.weight,
            orthogonal_init(&[self.out_features, self.in_features], rng)?,
            true,
        )?;
        store.insert(&self.bias, Tensor::zeros(&[self.out_features]), true)
    }

    pub fn forward<T: Scalar>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let w = ctx.param(&self.weight)?;
        let b = ctx.param(&self.bias)?;
        ctx.graph.linear(x, w, b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inference_before_training_is_an_error() {
        let mut store = ParamStore::<f64>::new();
        let bn = BatchNorm::new("bn", 2);
        bn.declare(&mut store).unwrap();
        let mut ctx = Ctx::new(&store, Mode::Inference);
        let x = ctx.graph.constant(Tensor::zeros(&[1, 2, 2, 2]));
        assert!(bn.forward(&mut ctx, x).is_err());
    }

    #[test]
    fn running_stats_follow_momentum() {
        let mut store = ParamStore::<f64>::new();
        let bn = BatchNorm::new("bn", 1);
        bn.declare(&mut store).unwrap();
        let updates = {
            let mut ctx = Ctx::new(&store, Mode::Training);
            let x = ctx.graph.constant(Tensor::from_f64(&[2, 1], &[1.0, 3.0]).unwrap());
            bn.forward(&mut ctx, x).unwrap();
            ctx.take_batch_stats()
        };
        store.apply_bn_updates(&updates, BN_MOMENTUM).unwrap();
        assert!((store.get("bn.running_mean").unwrap().data()[0] - 0.2).abs() < 1e-12);
        assert!((store.get("bn.running_var").unwrap().data()[0] - (0.9 + 0.2)).abs() < 1e-12);
        let mut ctx = Ctx::new(&store, Mode::Inference);
        let x = ctx.graph.constant(Tensor::from_f64(&[1, 1], &[0.2]).unwrap());
        let y = bn.forward(&mut ctx, x).unwrap();
        assert!(ctx.graph.value(y).data()[0].abs() < 1e-12);
    }
}
