//! The full pipeline: an initial U-Net, a localization head that predicts
//! the rigid pose, a spatial transformer that resamples the image into the
//! canonical orientation, and D further U-Nets ("hourglass") that segment
//! the canonical image in series.

use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use rand::Rng;

use crate::autodiff::{Mode, Var, PARAM_COUNT};
use crate::error::{Error, Result};
use crate::nn::{Adam, Ctx, ParamStore, BN_MOMENTUM};
use crate::scalar::Scalar;
use crate::spatial::{
    compose_similarity, image_losses_graph, matrix_losses_graph, warp_image, warp_labels_nearest,
    GridKind, LocNet, RigidParams, LOCNET_HIDDEN,
};
use crate::tensor::Tensor;
use crate::unet::{argmax_labels, one_hot, UNet, UNetConfig, UNetOutput};

/// Network variants: A is the initial U-Net alone; B, C and D add the
/// transformer and 1, 2 or 3 hourglass U-Nets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    A,
    B,
    C,
    D,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::A, Variant::B, Variant::C, Variant::D];

    /// Number of hourglass U-Nets.
    pub fn depth(self) -> usize {
        match self {
            Variant::A => 0,
            Variant::B => 1,
            Variant::C => 2,
            Variant::D => 3,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = match self {
            Variant::A => "A",
            Variant::B => "B",
            Variant::C => "C",
            Variant::D => "D",
        };
        f.write_str(c)
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(Variant::A),
            "B" => Ok(Variant::B),
            "C" => Ok(Variant::C),
            "D" => Ok(Variant::D),
            other => Err(Error::Config(format!("unknown variant {other:?} (expected A, B, C or D)"))),
        }
    }
}

/// Which label maps supervise the hourglass U-Nets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HourglassTargets {
    /// Ground truth warped by the predicted pose, i.e. aligned with the
    /// image the hourglass actually sees.
    Predicted,
    /// Ground truth warped by the true pose.
    GroundTruth,
}

impl FromStr for HourglassTargets {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "predicted" => Ok(HourglassTargets::Predicted),
            "ground_truth" => Ok(HourglassTargets::GroundTruth),
            other => Err(Error::Config(format!(
                "unknown hourglass target mode {other:?} (expected predicted or ground_truth)"
            ))),
        }
    }
}

impl fmt::Display for HourglassTargets {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HourglassTargets::Predicted => "predicted",
            HourglassTargets::GroundTruth => "ground_truth",
        })
    }
}

/// Weights of the four loss groups: initial segmentation, parameter
/// regression, image losses, hourglass segmentation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub alpha4: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha1: 100.0,
            alpha2: 100.0,
            alpha3: 0.1,
            alpha4: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub variant: Variant,
    pub image_size: usize,
    pub num_classes: usize,
    /// Depth and width shared by every U-Net; channel counts are filled in
    /// per U-Net.
    pub unet_depth: usize,
    pub base_filters: usize,
    pub head_kernel: usize,
    pub locnet_filters: usize,
    pub locnet_hidden: usize,
    pub weights: LossWeights,
    pub hourglass_targets: HourglassTargets,
}

impl NetworkConfig {
    /// 64×64 images, depth-3 U-Nets with 8 base filters.
    pub fn desk(variant: Variant) -> Self {
        Self {
            variant,
            image_size: 64,
            num_classes: 6,
            unet_depth: 3,
            base_filters: 8,
            head_kernel: 3,
            locnet_filters: 64,
            locnet_hidden: LOCNET_HIDDEN,
            weights: LossWeights::default(),
            hourglass_targets: HourglassTargets::Predicted,
        }
    }

    /// 256×256 images, depth-4 U-Nets with 16 base filters.
    pub fn paper_scale(variant: Variant) -> Self {
        Self {
            image_size: 256,
            unet_depth: 4,
            base_filters: 16,
            ..Self::desk(variant)
        }
    }

    pub fn depth(&self) -> usize {
        self.variant.depth()
    }

    pub fn initial_unet(&self) -> UNetConfig {
        UNetConfig {
            depth: self.unet_depth,
            base_filters: self.base_filters,
            in_channels: 1,
            num_classes: self.num_classes,
            head_kernel: self.head_kernel,
        }
    }

    /// Hourglass U-Nets see the canonical image plus the previous softmax.
    pub fn hourglass_unet(&self) -> UNetConfig {
        UNetConfig {
            in_channels: 1 + self.num_classes,
            ..self.initial_unet()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.initial_unet().validate()?;
        self.initial_unet().check_extent(self.image_size, self.image_size)?;
        if self.num_classes < 2 {
            return Err(Error::Config("at least two classes are required".into()));
        }
        if self.depth() > 0 && self.image_size >> self.unet_depth < 4 {
            return Err(Error::Config(format!(
                "image size {} leaves a bottleneck smaller than 4×4 at depth {}",
                self.image_size, self.unet_depth
            )));
        }
        let w = &self.weights;
        if ![w.alpha1, w.alpha2, w.alpha3, w.alpha4].iter().all(|a| a.is_finite() && *a >= 0.0) {
            return Err(Error::Config("loss weights must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// Graph handles of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub initial: UNetOutput,
    /// N×4 predicted (t_x, t_y, θ, s); absent for variant A.
    pub params: Option<Var>,
    /// Canonically oriented image I′ = trans(I, S·R·T).
    pub transformed: Option<Var>,
    /// Softmax output of each hourglass U-Net, in order.
    pub hourglass: Vec<Var>,
}

/// Loss values of one forward pass. Transformer terms are `None` for
/// variant A.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub su: f64,
    pub matrix: Option<[f64; 4]>,
    pub image: Option<[f64; 3]>,
    pub sh: Vec<f64>,
    pub total: f64,
}

/// α₁·L_SU + α₂·(L_tx + L_ty + L_θ + L_s) + α₃·(L_It + L_Iθ + L_Is) + α₄·Σ L_SH.
/// Group sums are formed first, then weighted, so the graph total and this
/// value agree bit for bit.
pub fn combine_losses(
    weights: &LossWeights,
    su: f64,
    matrix: Option<&[f64; 4]>,
    image: Option<&[f64; 3]>,
    sh: &[f64],
) -> f64 {
    let mut total = weights.alpha1 * su;
    if let Some(m) = matrix {
        total += weights.alpha2 * (m[0] + m[1] + m[2] + m[3]);
    }
    if let Some(i) = image {
        total += weights.alpha3 * (i[0] + i[1] + i[2]);
    }
    if !sh.is_empty() {
        total += weights.alpha4 * sh.iter().sum::<f64>();
    }
    total
}

/// Handles of the loss graph.
#[derive(Debug, Clone)]
pub struct LossTrace {
    pub total: Var,
    pub breakdown: LossBreakdown,
}

/// A training or evaluation batch: N×1×H×W images with integer label maps
/// and ground-truth pose parameters.
#[derive(Debug, Clone)]
pub struct Batch<T> {
    pub images: Tensor<T>,
    pub labels: Vec<Vec<u8>>,
    pub params: Vec<RigidParams<T>>,
}

impl<T: Scalar> Batch<T> {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn label_refs(&self) -> Vec<&[u8]> {
        self.labels.iter().map(|l| l.as_slice()).collect()
    }
}

/// Inference output.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub params: Option<Vec<RigidParams<f64>>>,
    /// `labels[u][n]`: label map of sample n from U-Net u (0 = initial),
    /// hourglass maps warped back to the input frame.
    pub labels: Vec<Vec<Vec<u8>>>,
    /// Hourglass maps in the canonical frame, `canonical[d][n]`.
    pub canonical: Vec<Vec<Vec<u8>>>,
}

#[derive(Debug, Clone)]
pub struct OmegaNet {
    pub config: NetworkConfig,
    initial: UNet,
    locnet: Option<LocNet>,
    hourglass: Vec<UNet>,
}

impl OmegaNet {
    pub fn new(config: NetworkConfig) -> Result<Self> {
        config.validate()?;
        let initial = UNet::new("unet0", config.initial_unet())?;
        let (locnet, hourglass) = if config.depth() == 0 {
            (None, Vec::new())
        } else {
            let loc = LocNet::new(
                "locnet",
                config.initial_unet().level_channels(config.unet_depth - 1),
                config.locnet_filters,
                config.locnet_hidden,
            );
            let hg = (1..=config.depth())
                .map(|d| UNet::new(&format!("unet{d}"), config.hourglass_unet()))
                .collect::<Result<Vec<_>>>()?;
            (Some(loc), hg)
        };
        Ok(Self {
            config,
            initial,
            locnet,
            hourglass,
        })
    }

    /// Registers every parameter with orthogonal weights and zero biases,
    /// except the scale output of the localization head, whose bias starts
    /// at 1 so the initial transform is not degenerate.
    pub fn declare<T: Scalar, R: Rng + ?Sized>(&self, store: &mut ParamStore<T>, rng: &mut R) -> Result<()> {
        self.initial.declare(store, rng)?;
        if let Some(loc) = &self.locnet {
            loc.declare(store, rng)?;
            let bias = store.get_mut(loc.output_bias())?;
            bias.data_mut()[3] = T::one();
        }
        for u in &self.hourglass {
            u.declare(store, rng)?;
        }
        Ok(())
    }

    pub fn init_params<T: Scalar, R: Rng + ?Sized>(&self, rng: &mut R) -> Result<ParamStore<T>> {
        let mut store = ParamStore::new();
        self.declare(&mut store, rng)?;
        Ok(store)
    }

    pub fn initial_unet(&self) -> &UNet {
        &self.initial
    }

    pub fn hourglass_unets(&self) -> &[UNet] {
        &self.hourglass
    }

    /// Image batch (N×1×H×W) → initial segmentation, pose, canonical image
    /// and hourglass segmentations.
    pub fn forward<T: Scalar>(&self, ctx: &mut Ctx<'_, T>, image: Var) -> Result<ForwardTrace> {
        let (_, _, h, w) = ctx.graph.value(image).dims4()?;
        if h != self.config.image_size || w != self.config.image_size {
            return Err(Error::Shape(format!(
                "network expects {0}×{0} images, got {h}×{w}",
                self.config.image_size
            )));
        }
        let initial = self.initial.forward(ctx, image)?;
        let Some(loc) = &self.locnet else {
            return Ok(ForwardTrace {
                initial,
                params: None,
                transformed: None,
                hourglass: Vec::new(),
            });
        };
        let params = loc.forward(ctx, initial.bottleneck)?;
        let grid = ctx.graph.similarity_grid(params, GridKind::Full, h, w)?;
        let transformed = ctx.graph.bilinear_sample(image, grid)?;
        let mut previous = ctx.graph.bilinear_sample(initial.probs, grid)?;
        let mut hourglass = Vec::with_capacity(self.hourglass.len());
        for unet in &self.hourglass {
            let input = ctx.graph.concat_channels(&[transformed, previous])?;
            let out = unet.forward(ctx, input)?;
            hourglass.push(out.probs);
            previous = out.probs;
        }
        Ok(ForwardTrace {
            initial,
            params: Some(params),
            transformed: Some(transformed),
            hourglass,
        })
    }

    /// One-hot hourglass targets: each label map warped (nearest neighbour)
    /// into the canonical frame of the configured pose source. `predicted`
    /// is N×4 and required for [`HourglassTargets::Predicted`].
    pub fn hourglass_targets<T: Scalar>(
        &self,
        batch: &Batch<T>,
        predicted: Option<&Tensor<T>>,
    ) -> Result<Tensor<T>> {
        let n = self.config.image_size;
        let warped = (0..batch.len())
            .map(|i| {
                let p = match self.config.hourglass_targets {
                    HourglassTargets::GroundTruth => batch.params[i],
                    HourglassTargets::Predicted => {
                        let pred = predicted.ok_or_else(|| {
                            Error::InvalidArgument("predicted pose required for hourglass targets".into())
                        })?;
                        RigidParams::from_slice(&pred.data()[i * PARAM_COUNT..(i + 1) * PARAM_COUNT])
                    }
                };
                warp_labels_nearest(&batch.labels[i], (n, n), &compose_similarity(&p), (n, n))
            })
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&[u8]> = warped.iter().map(|l| l.as_slice()).collect();
        one_hot(&refs, self.config.num_classes, n, n)
    }

    /// Composite loss of a training forward pass. `hourglass_targets`
    /// overrides the targets derived from the batch (used to hold them fixed
    /// while probing gradients numerically).
    pub fn loss<T: Scalar>(
        &self,
        ctx: &mut Ctx<'_, T>,
        trace: &ForwardTrace,
        image: Var,
        batch: &Batch<T>,
        hourglass_targets: Option<&Tensor<T>>,
    ) -> Result<LossTrace> {
        let n = self.config.image_size;
        let refs = batch.label_refs();
        let seg_target = one_hot(&refs, self.config.num_classes, n, n)?;
        let su = ctx.graph.cce(trace.initial.probs, &seg_target)?;
        let mut named: Vec<(String, Var)> = vec![("L_SU".into(), su)];
        let w = &self.config.weights;
        let alpha = |a: f64| T::from_f64c(a);
        let mut groups = vec![(su, alpha(w.alpha1))];
        let mut matrix = None;
        let mut image_terms = None;
        let mut sh = Vec::new();
        if let Some(params) = trace.params {
            let m = matrix_losses_graph(&mut ctx.graph, params, &batch.params)?;
            let (i, _) = image_losses_graph(&mut ctx.graph, image, params, &batch.params)?;
            for (name, v) in ["L_tx", "L_ty", "L_theta", "L_s"].iter().zip(m) {
                named.push((name.to_string(), v));
            }
            for (name, v) in ["L_It", "L_Itheta", "L_Is"].iter().zip(i) {
                named.push((name.to_string(), v));
            }
            let one = T::one();
            let msum = ctx.graph.weighted_sum(&m.map(|v| (v, one)))?;
            let isum = ctx.graph.weighted_sum(&i.map(|v| (v, one)))?;
            groups.push((msum, alpha(w.alpha2)));
            groups.push((isum, alpha(w.alpha3)));
            matrix = Some(m);
            image_terms = Some(i);
            let owned;
            let targets = match hourglass_targets {
                Some(t) => t,
                None => {
                    let pred = ctx.graph.value(params).clone();
                    owned = self.hourglass_targets(batch, Some(&pred))?;
                    &owned
                }
            };
            for (d, &probs) in trace.hourglass.iter().enumerate() {
                let l = ctx.graph.cce(probs, targets)?;
                named.push((format!("L_SH_{}", d + 1), l));
                sh.push(l);
            }
            if !sh.is_empty() {
                let hsum = ctx.graph.weighted_sum(&sh.iter().map(|&v| (v, one)).collect::<Vec<_>>())?;
                groups.push((hsum, alpha(w.alpha4)));
            }
        }
        for (name, v) in &named {
            if !ctx.graph.item(*v).is_finite() {
                return Err(Error::NonFinite(format!("loss component {name}")));
            }
        }
        let total = ctx.graph.weighted_sum(&groups)?;
        let item = |v: Var| ctx.graph.item(v).to_f64c();
        let breakdown = LossBreakdown {
            su: item(su),
            matrix: matrix.map(|m| m.map(item)),
            image: image_terms.map(|i| i.map(item)),
            sh: sh.iter().map(|&v| item(v)).collect(),
            total: item(total),
        };
        if !breakdown.total.is_finite() {
            return Err(Error::NonFinite("loss component L_total".into()));
        }
        Ok(LossTrace { total, breakdown })
    }

    /// Forward, loss and backward in training mode; returns the gradients,
    /// the batch statistics to fold into running averages, and the losses.
    pub fn gradients<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        batch: &Batch<T>,
        hourglass_targets: Option<&Tensor<T>>,
    ) -> Result<(IndexMap<String, Tensor<T>>, Vec<(String, crate::autodiff::BatchStats<T>)>, LossBreakdown)> {
        let mut ctx = Ctx::new(store, Mode::Training);
        let image = ctx.graph.constant(batch.images.clone());
        let trace = self.forward(&mut ctx, image)?;
        let loss = self.loss(&mut ctx, &trace, image, batch, hourglass_targets)?;
        ctx.graph.backward(loss.total)?;
        let grads = ctx.gradients();
        let stats = ctx.take_batch_stats();
        Ok((grads, stats, loss.breakdown))
    }

    /// One optimization step on `batch`.
    pub fn train_step<T: Scalar>(
        &self,
        store: &mut ParamStore<T>,
        optimizer: &mut Adam<T>,
        batch: &Batch<T>,
        lr: f64,
    ) -> Result<LossBreakdown> {
        let (grads, stats, breakdown) = self.gradients(store, batch, None)?;
        optimizer.step(store, &grads, lr)?;
        store.apply_bn_updates(&stats, T::from_f64c(BN_MOMENTUM))?;
        Ok(breakdown)
    }

    /// Loss of a batch without updating anything (batch statistics are used
    /// for normalization, as in training).
    pub fn training_loss<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        batch: &Batch<T>,
        hourglass_targets: Option<&Tensor<T>>,
    ) -> Result<LossBreakdown> {
        let mut ctx = Ctx::new(store, Mode::Training);
        let image = ctx.graph.constant(batch.images.clone());
        let trace = self.forward(&mut ctx, image)?;
        Ok(self.loss(&mut ctx, &trace, image, batch, hourglass_targets)?.breakdown)
    }

    /// Predicted pose (N×4) of a batch in training mode; used to freeze
    /// hourglass targets.
    pub fn training_pose<T: Scalar>(&self, store: &ParamStore<T>, images: &Tensor<T>) -> Result<Option<Tensor<T>>> {
        let mut ctx = Ctx::new(store, Mode::Training);
        let image = ctx.graph.constant(images.clone());
        let trace = self.forward(&mut ctx, image)?;
        Ok(trace.params.map(|p| ctx.graph.value(p).clone()))
    }

    /// Inference with running normalization statistics. Hourglass
    /// probabilities are warped back to the input frame with the inverse of
    /// the predicted transform before the argmax; pixels that map outside
    /// the canonical view become background.
    pub fn predict<T: Scalar>(&self, store: &ParamStore<T>, images: &Tensor<T>) -> Result<Prediction> {
        let mut ctx = Ctx::new(store, Mode::Inference);
        let image = ctx.graph.constant(images.clone());
        let trace = self.forward(&mut ctx, image)?;
        let mut labels = vec![argmax_labels(ctx.graph.value(trace.initial.probs))?];
        let mut canonical = Vec::new();
        let params = match trace.params {
            None => None,
            Some(p) => {
                let v = ctx.graph.value(p);
                Some(
                    v.data()
                        .chunks(PARAM_COUNT)
                        .map(|r| RigidParams::from_slice(r).cast::<f64>())
                        .collect::<Vec<_>>(),
                )
            }
        };
        if let Some(params) = &params {
            let n = self.config.image_size;
            let k = self.config.num_classes;
            for &probs in &trace.hourglass {
                let pv = ctx.graph.value(probs);
                canonical.push(argmax_labels(pv)?);
                let mut back = vec![T::zero(); pv.len()];
                for (i, p) in params.iter().enumerate() {
                    let inverse = compose_similarity(&p.cast::<T>()).inverse();
                    for c in 0..k {
                        let off = (i * k + c) * n * n;
                        let plane = warp_image(&pv.data()[off..off + n * n], (n, n), &inverse, (n, n))?;
                        back[off..off + n * n].copy_from_slice(&plane);
                    }
                }
                labels.push(argmax_labels(&Tensor::new(pv.shape(), back)?)?);
            }
        }
        Ok(Prediction {
            params,
            labels,
            canonical,
        })
    }
}

/// One probed parameter element of [`check_loss_gradient`].
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeCheck {
    pub name: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    /// |analytic − numeric| / max(1, |analytic|, |numeric|).
    pub rel_error: f64,
    /// Whether the one-sided slopes agree within [`KINK_TOLERANCE`]. ReLU,
    /// max-pool and bilinear sampling make the loss piecewise smooth; a
    /// probe whose ±ε interval straddles a kink has no meaningful central
    /// difference.
    pub smooth: bool,
}

/// Relative disagreement of the one-sided slopes above which a probe is
/// taken to straddle a kink.
pub const KINK_TOLERANCE: f64 = 1e-4;

/// Central-difference check of ∂L_Ω/∂θ on selected parameter elements,
/// holding the hourglass targets fixed at their base-point values.
pub fn check_loss_gradient(
    net: &OmegaNet,
    store: &ParamStore<f64>,
    batch: &Batch<f64>,
    probes: &[(String, usize)],
    eps: f64,
) -> Result<Vec<ProbeCheck>> {
    let targets = match net.training_pose(store, &batch.images)? {
        Some(pose) => Some(net.hourglass_targets(batch, Some(&pose))?),
        None => None,
    };
    let (grads, _, _) = net.gradients(store, batch, targets.as_ref())?;
    let base = net.training_loss(store, batch, targets.as_ref())?.total;
    let mut out = Vec::with_capacity(probes.len());
    for (name, index) in probes {
        let analytic = grads
            .get(name)
            .map(|g| g.data()[*index])
            .ok_or_else(|| Error::InvalidArgument(format!("no gradient for {name}")))?;
        let probe = |delta: f64| -> Result<f64> {
            let mut s = store.clone();
            s.get_mut(name)?.data_mut()[*index] += delta;
            Ok(net.training_loss(&s, batch, targets.as_ref())?.total)
        };
        let (plus, minus) = (probe(eps)?, probe(-eps)?);
        let numeric = (plus - minus) / (2.0 * eps);
        let (forward, backward) = ((plus - base) / eps, (base - minus) / eps);
        let scale = 1f64.max(forward.abs()).max(backward.abs());
        out.push(ProbeCheck {
            name: name.clone(),
            index: *index,
            analytic,
            numeric,
            rel_error: (analytic - numeric).abs() / 1f64.max(analytic.abs()).max(numeric.abs()),
            smooth: (forward - backward).abs() <= KINK_TOLERANCE * scale,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small(variant: Variant) -> NetworkConfig {
        NetworkConfig {
            image_size: 32,
            unet_depth: 2,
            base_filters: 4,
            locnet_filters: 8,
            locnet_hidden: 8,
            ..NetworkConfig::desk(variant)
        }
    }

    fn batch(n: usize, size: usize) -> Batch<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let images: Vec<f64> = (0..n * size * size).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let labels = (0..n)
            .map(|_| (0..size * size).map(|_| rng.gen_range(0..6u8)).collect())
            .collect();
        let params = (0..n)
            .map(|_| {
                RigidParams::new(
                    rng.gen_range(-0.2..0.2),
                    rng.gen_range(-0.2..0.2),
                    rng.gen_range(-3.0..3.0),
                    rng.gen_range(0.6..1.0),
                )
            })
            .collect();
        Batch {
            images: Tensor::new(&[n, 1, size, size], images).unwrap(),
            labels,
            params,
        }
    }

    #[test]
    fn variant_depths() {
        let depths: Vec<usize> = Variant::ALL.iter().map(|v| v.depth()).collect();
        assert_eq!(depths, [0, 1, 2, 3]);
        assert_eq!("c".parse::<Variant>().unwrap(), Variant::C);
        assert!("E".parse::<Variant>().is_err());
    }

    #[test]
    fn default_weights() {
        let w = LossWeights::default();
        assert_eq!((w.alpha1, w.alpha2, w.alpha3, w.alpha4), (100.0, 100.0, 0.1, 1.0));
    }

    #[test]
    fn combined_loss_examples() {
        let w = LossWeights::default();
        assert_eq!(combine_losses(&w, 1.0, Some(&[1.0; 4]), Some(&[1.0; 3]), &[1.0]), 501.3);
        assert_eq!(combine_losses(&w, 0.0, Some(&[0.0; 4]), Some(&[0.0; 3]), &[0.0]), 0.0);
        assert_eq!(combine_losses(&w, 0.5, None, None, &[]), 50.0);
    }

    #[test]
    fn trace_sizes_follow_variant() {
        for v in Variant::ALL {
            let net = OmegaNet::new(small(v)).unwrap();
            let store: ParamStore<f64> = net.init_params(&mut ChaCha8Rng::seed_from_u64(1)).unwrap();
            let b = batch(2, 32);
            let mut ctx = Ctx::new(&store, Mode::Training);
            let x = ctx.graph.constant(b.images.clone());
            let t = net.forward(&mut ctx, x).unwrap();
            assert_eq!(t.hourglass.len(), v.depth());
            assert_eq!(t.params.is_none(), v == Variant::A);
            if let Some(tr) = t.transformed {
                assert_eq!(ctx.graph.shape(tr), &[2, 1, 32, 32]);
            }
            let l = net.loss(&mut ctx, &t, x, &b, None).unwrap();
            assert_eq!(l.breakdown.sh.len(), v.depth());
            assert!(l.breakdown.total.is_finite());
        }
    }

    #[test]
    fn initial_unet_shared_across_variants() {
        let shapes = |v| {
            let net = OmegaNet::new(small(v)).unwrap();
            let store: ParamStore<f64> = net.init_params(&mut ChaCha8Rng::seed_from_u64(1)).unwrap();
            store
                .iter()
                .filter(|(n, _, _)| n.starts_with("unet0."))
                .map(|(n, t, _)| (n.to_string(), t.shape().to_vec()))
                .collect::<Vec<_>>()
        };
        let a = shapes(Variant::A);
        assert!(!a.is_empty());
        for v in [Variant::B, Variant::C, Variant::D] {
            assert_eq!(shapes(v), a);
        }
    }

    #[test]
    fn breakdown_matches_graph_total() {
        let net = OmegaNet::new(small(Variant::B)).unwrap();
        let store: ParamStore<f64> = net.init_params(&mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let b = batch(2, 32);
        let l = net.training_loss(&store, &b, None).unwrap();
        let recomputed = combine_losses(&net.config.weights, l.su, l.matrix.as_ref(), l.image.as_ref(), &l.sh);
        assert_eq!(recomputed, l.total);
    }

    #[test]
    fn predict_emits_one_map_per_unet() {
        let net = OmegaNet::new(small(Variant::B)).unwrap();
        let mut store: ParamStore<f64> = net.init_params(&mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = batch(2, 32);
        let mut adam = Adam::new(Default::default());
        net.train_step(&mut store, &mut adam, &b, 1e-3).unwrap();
        let p = net.predict(&store, &b.images).unwrap();
        assert_eq!(p.labels.len(), 2);
        assert_eq!(p.params.as_ref().unwrap().len(), 2);
        assert!(p.labels.iter().flatten().flatten().all(|&l| l < 6));
    }
}
