//! Configurable U-Net: the initial segmenter and the repeated unit of the
//! stacked hourglass.

use rand::Rng;

use crate::autodiff::Var;
use crate::error::{shape_err, Error, Result};
use crate::nn::{BatchNorm, Conv2d, Ctx, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UNetConfig {
    /// Number of 2×2 pooling steps.
    pub depth: usize,
    /// Channels at full resolution; doubled at every level below.
    pub base_filters: usize,
    pub in_channels: usize,
    pub num_classes: usize,
    /// Kernel of the final class projection (1 or 3).
    pub head_kernel: usize,
}

impl UNetConfig {
    pub fn desk(in_channels: usize, num_classes: usize) -> Self {
        Self {
            depth: 3,
            base_filters: 8,
            in_channels,
            num_classes,
            head_kernel: 3,
        }
    }

    pub fn paper_scale(in_channels: usize, num_classes: usize) -> Self {
        Self {
            depth: 4,
            base_filters: 16,
            ..Self::desk(in_channels, num_classes)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Config("a U-Net needs at least two classes".into()));
        }
        if self.depth == 0 || self.base_filters == 0 || self.in_channels == 0 {
            return Err(Error::Config("U-Net depth, width and input channels must be positive".into()));
        }
        if self.head_kernel % 2 == 0 {
            return Err(Error::Config("head kernel must be odd".into()));
        }
        Ok(())
    }

    pub fn level_channels(&self, level: usize) -> usize {
        self.base_filters << level
    }

    /// Channels of the exposed bottleneck (output of the last pooling step).
    pub fn bottleneck_channels(&self) -> usize {
        self.level_channels(self.depth - 1)
    }

    pub fn check_extent(&self, h: usize, w: usize) -> Result<()> {
        let f = 1usize << self.depth;
        if h % f != 0 || w % f != 0 || h == 0 || w == 0 {
            return shape_err(format!(
                "input {h}×{w} is not divisible by 2^{} = {f}",
                self.depth
            ));
        }
        Ok(())
    }
}

/// [conv3×3 → BN → ReLU] × 2
#[derive(Debug, Clone)]
struct DoubleConv {
    convs: [Conv2d; 2],
    norms: [BatchNorm; 2],
}

impl DoubleConv {
    fn new(prefix: &str, cin: usize, cout: usize) -> Self {
        Self {
            convs: [
                Conv2d::new(&format!("{prefix}.conv1"), cin, cout, 3),
                Conv2d::new(&format!("{prefix}.conv2"), cout, cout, 3),
            ],
            norms: [
                BatchNorm::new(&format!("{prefix}.bn1"), cout),
                BatchNorm::new(&format!("{prefix}.bn2"), cout),
            ],
        }
    }

    fn declare<T: Scalar, R: Rng + ?Sized>(&self, store: &mut ParamStore<T>, rng: &mut R) -> Result<()> {
        for (c, n) in self.convs.iter().zip(&self.norms) {
            c.declare(store, rng)?;
            n.declare(store)?;
        }
        Ok(())
    }

    fn forward<T: Scalar>(&self, ctx: &mut Ctx<'_, T>, mut x: Var) -> Result<Var> {
        for (c, n) in self.convs.iter().zip(&self.norms) {
            x = c.forward(ctx, x)?;
            x = n.forward(ctx, x)?;
            x = ctx.graph.relu(x);
        }
        Ok(x)
    }
}

#[derive(Debug, Clone)]
struct UpLevel {
    up_conv: Conv2d,
    block: DoubleConv,
}

/// Graph handles produced by [`UNet::forward`].
#[derive(Debug, Clone, Copy)]
pub struct UNetOutput {
    pub logits: Var,
    pub probs: Var,
    /// Features right after the last max pooling step.
    pub bottleneck: Var,
}

#[derive(Debug, Clone)]
pub struct UNet {
    pub config: UNetConfig,
    pub prefix: String,
    down: Vec<DoubleConv>,
    bottom: DoubleConv,
    up: Vec<UpLevel>,
    head: Conv2d,
}

impl UNet {
    pub fn new(prefix: &str, config: UNetConfig) -> Result<Self> {
        config.validate()?;
        let ch = |l: usize| config.level_channels(l);
        let down = (0..config.depth)
            .map(|l| {
                let cin = if l == 0 { config.in_channels } else { ch(l - 1) };
                DoubleConv::new(&format!("{prefix}.down{l}"), cin, ch(l))
            })
            .collect();
        let bottom = DoubleConv::new(
            &format!("{prefix}.bottom"),
            ch(config.depth - 1),
            ch(config.depth),
        );
        let up = (0..config.depth)
            .rev()
            .map(|l| UpLevel {
                up_conv: Conv2d::new(&format!("{prefix}.up{l}.conv"), ch(l + 1), ch(l), 3),
                block: DoubleConv::new(&format!("{prefix}.up{l}"), 2 * ch(l), ch(l)),
            })
            .collect();
        let head = Conv2d::new(
            &format!("{prefix}.head"),
            ch(0),
            config.num_classes,
            config.head_kernel,
        );
        Ok(Self {
            config,
            prefix: prefix.to_string(),
            down,
            bottom,
            up,
            head,
        })
    }

    pub fn declare<T: Scalar, R: Rng + ?Sized>(&self, store: &mut ParamStore<T>, rng: &mut R) -> Result<()> {
        for d in &self.down {
            d.declare(store, rng)?;
        }
        self.bottom.declare(store, rng)?;
        for u in &self.up {
            u.up_conv.declare(store, rng)?;
            u.block.declare(store, rng)?;
        }
        self.head.declare(store, rng)
    }

    /// Contracting path with skip connections, expanding path
    /// (upsample → ReLU → conv, concatenated with the skip, then a double
    /// convolution) and a class projection followed by a channel softmax.
    pub fn forward<T: Scalar>(&self, ctx: &mut Ctx<'_, T>, image: Var) -> Result<UNetOutput> {
        let (_, c, h, w) = ctx.graph.value(image).dims4()?;
        if c != self.config.in_channels {
            return shape_err(format!(
                "{} expects {} input channels, got {c}",
                self.prefix, self.config.in_channels
            ));
        }
        self.config.check_extent(h, w)?;
        let mut skips = Vec::with_capacity(self.config.depth);
        let mut x = image;
        for level in &self.down {
            let features = level.forward(ctx, x)?;
            skips.push(features);
            x = ctx.graph.maxpool2(features)?;
        }
        let bottleneck = x;
        x = self.bottom.forward(ctx, x)?;
        for level in &self.up {
            let skip = skips.pop().expect("one skip per level");
            x = ctx.graph.upsample2(x)?;
            x = ctx.graph.relu(x);
            x = level.up_conv.forward(ctx, x)?;
            x = ctx.graph.concat_channels(&[x, skip])?;
            x = level.block.forward(ctx, x)?;
        }
        let logits = self.head.forward(ctx, x)?;
        let probs = ctx.graph.softmax_channels(logits)?;
        Ok(UNetOutput {
            logits,
            probs,
            bottleneck,
        })
    }
}

/// Categorical cross-entropy of softmax output against (one-hot or soft)
/// targets of the same shape.
pub fn cce_loss<T: Scalar>(ctx: &mut Ctx<'_, T>, probs: Var, target: &Tensor<T>) -> Result<Var> {
    ctx.graph.cce(probs, target)
}

/// One-hot N×K×H×W encoding of integer label maps.
pub fn one_hot<T: Scalar>(labels: &[&[u8]], num_classes: usize, h: usize, w: usize) -> Result<Tensor<T>> {
    let hw = h * w;
    let mut data = vec![T::zero(); labels.len() * num_classes * hw];
    for (s, map) in labels.iter().enumerate() {
        if map.len() != hw {
            return shape_err("label map does not match extent");
        }
        for (p, &l) in map.iter().enumerate() {
            let l = l as usize;
            if l >= num_classes {
                return Err(Error::InvalidArgument(format!("label {l} ≥ {num_classes} classes")));
            }
            data[(s * num_classes + l) * hw + p] = T::one();
        }
    }
    Tensor::new(&[labels.len(), num_classes, h, w], data)
}

/// Per-pixel argmax over channels (first maximal class on ties).
pub fn argmax_labels<T: Scalar>(probs: &Tensor<T>) -> Result<Vec<Vec<u8>>> {
    let (n, k, h, w) = probs.dims4()?;
    let hw = h * w;
    let d = probs.data();
    Ok((0..n)
        .map(|s| {
            (0..hw)
                .map(|p| {
                    let mut best = 0;
                    for c in 1..k {
                        if d[(s * k + c) * hw + p] > d[(s * k + best) * hw + p] {
                            best = c;
                        }
                    }
                    best as u8
                })
                .collect()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Mode;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn build(config: UNetConfig) -> (UNet, ParamStore<f64>) {
        let net = UNet::new("u", config).unwrap();
        let mut store = ParamStore::new();
        net.declare(&mut store, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        (net, store)
    }

    #[test]
    fn desk_shapes() {
        let (net, store) = build(UNetConfig::desk(1, 6));
        let mut ctx = Ctx::new(&store, Mode::Training);
        let x = ctx.graph.constant(Tensor::full(&[1, 1, 64, 64], 0.1));
        let out = net.forward(&mut ctx, x).unwrap();
        assert_eq!(ctx.graph.shape(out.bottleneck), &[1, 8 << 2, 8, 8]);
        assert_eq!(ctx.graph.shape(out.probs), &[1, 6, 64, 64]);
    }

    #[test]
    fn paper_scale_bottleneck_is_16() {
        let net = UNet::new("u", UNetConfig::paper_scale(1, 6)).unwrap();
        assert_eq!(net.config.depth, 4);
        assert_eq!(256 >> net.config.depth, 16);
    }

    #[test]
    fn probabilities_sum_to_one() {
        let (net, store) = build(UNetConfig {
            depth: 2,
            base_filters: 4,
            in_channels: 1,
            num_classes: 3,
            head_kernel: 1,
        });
        let mut ctx = Ctx::new(&store, Mode::Training);
        let v: Vec<f64> = (0..2 * 32).map(|i| (i as f64).sin()).collect();
        let x = ctx.graph.constant(Tensor::new(&[2, 1, 4, 8], v).unwrap());
        let out = net.forward(&mut ctx, x).unwrap();
        let p = ctx.graph.value(out.probs);
        for s in 0..2 {
            for q in 0..32 {
                let total: f64 = (0..3).map(|c| p.data()[(s * 3 + c) * 32 + q]).sum();
                assert!((total - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn indivisible_extent_is_rejected() {
        let (net, store) = build(UNetConfig::desk(1, 2));
        let mut ctx = Ctx::new(&store, Mode::Training);
        let x = ctx.graph.constant(Tensor::zeros(&[1, 1, 36, 36]));
        assert!(net.forward(&mut ctx, x).is_err());
    }

    #[test]
    fn argmax_prefers_first_on_ties() {
        let p = Tensor::<f64>::from_f64(&[1, 3, 1, 2], &[0.2, 0.5, 0.4, 0.5, 0.4, 0.0]).unwrap();
        assert_eq!(argmax_labels(&p).unwrap(), vec![vec![1, 0]]);
    }
}
