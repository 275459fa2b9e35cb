use crate::error::{shape_err, Result};
use crate::scalar::Scalar;
use crate::spatial::wrap;
use crate::tensor::Tensor;

use super::graph::{Graph, Op, Var};

/// Probabilities are clipped to [CCE_CLIP, 1 − CCE_CLIP] before the log.
pub const CCE_CLIP: f64 = 1e-7;

/// Width of a rigid parameter row: (t_x, t_y, θ, s).
pub const PARAM_COUNT: usize = 4;

impl<T: Scalar> Graph<T> {
    /// Softmax across the channel axis of an N×K×H×W tensor, stabilized by
    /// subtracting the per-pixel maximum.
    pub fn softmax_channels(&mut self, input: Var) -> Result<Var> {
        let i = self.index(input);
        let (n, k, h, w) = self.node_value(i).dims4()?;
        if k < 2 {
            return shape_err("softmax needs at least two channels");
        }
        let hw = h * w;
        let x = self.node_value(i).data();
        let mut out = vec![T::zero(); x.len()];
        for s in 0..n {
            let base = s * k * hw;
            for p in 0..hw {
                let mut m = x[base + p];
                for c in 1..k {
                    m = m.max(x[base + c * hw + p]);
                }
                let mut total = T::zero();
                for c in 0..k {
                    let e = (x[base + c * hw + p] - m).exp();
                    out[base + c * hw + p] = e;
                    total += e;
                }
                let inv = T::one() / total;
                for c in 0..k {
                    out[base + c * hw + p] *= inv;
                }
            }
        }
        let requires = self.node_requires(i);
        let value = Tensor::new(&[n, k, h, w], out)?;
        Ok(self.push(value, Op::Softmax { input: i }, requires))
    }

    /// Categorical cross-entropy −(1/(N·H·W)) Σ target·log(clip(probs)).
    pub fn cce(&mut self, probs: Var, target: &Tensor<T>) -> Result<Var> {
        let pi = self.index(probs);
        let pv = self.node_value(pi);
        let (n, _, h, w) = pv.dims4()?;
        if pv.shape() != target.shape() {
            return shape_err(format!(
                "cce shape mismatch: probs {:?}, target {:?}",
                pv.shape(),
                target.shape()
            ));
        }
        let lo = T::from_f64c(CCE_CLIP);
        let hi = T::one() - lo;
        let total: T = pv
            .data()
            .iter()
            .zip(target.data())
            .filter(|(_, &t)| t != T::zero())
            .map(|(&p, &t)| t * p.max(lo).min(hi).ln())
            .sum();
        let loss = -total / T::from_usize_c(n * h * w);
        let requires = self.node_requires(pi);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::Cce {
                probs: pi,
                target: target.clone(),
            },
            requires,
        ))
    }

    /// Batch mean of ½d² where d = pred[:, index] − target[:, index], with d
    /// wrapped into [−π, π) when `wrapped`. `pred` is N×4 and `target` holds
    /// N rows of four values.
    pub fn param_loss(
        &mut self,
        pred: Var,
        target: &[[T; PARAM_COUNT]],
        index: usize,
        wrapped: bool,
    ) -> Result<Var> {
        let pi = self.index(pred);
        let pv = self.node_value(pi);
        if pv.shape() != [target.len(), PARAM_COUNT] || index >= PARAM_COUNT {
            return shape_err(format!(
                "param_loss expects N×{PARAM_COUNT} predictions for {} targets, got {:?}",
                target.len(),
                pv.shape()
            ));
        }
        let flat: Vec<T> = target.iter().flat_map(|r| r.iter().copied()).collect();
        let half = T::from_f64c(0.5);
        let total: T = pv
            .data()
            .chunks(PARAM_COUNT)
            .zip(target)
            .map(|(p, t)| {
                let d = residual(p[index], t[index], wrapped);
                half * d * d
            })
            .sum();
        let loss = total / T::from_usize_c(target.len());
        let requires = self.node_requires(pi);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::ParamLoss {
                pred: pi,
                target: flat,
                index,
                wrapped,
            },
            requires,
        ))
    }
}

fn residual<T: Scalar>(pred: T, target: T, wrapped: bool) -> T {
    let d = pred - target;
    if wrapped {
        wrap(d)
    } else {
        d
    }
}

pub(super) fn softmax_backward<T: Scalar>(
    g: &Graph<T>,
    input: usize,
    out: &Tensor<T>,
    grad: &[T],
    result: &mut Vec<(usize, Vec<T>)>,
) -> Result<()> {
    if !g.node_requires(input) {
        return Ok(());
    }
    let (n, k, h, w) = out.dims4()?;
    let hw = h * w;
    let y = out.data();
    let mut dx = vec![T::zero(); y.len()];
    for s in 0..n {
        let base = s * k * hw;
        for p in 0..hw {
            let mut dot = T::zero();
            for c in 0..k {
                dot += grad[base + c * hw + p] * y[base + c * hw + p];
            }
            for c in 0..k {
                let idx = base + c * hw + p;
                dx[idx] = y[idx] * (grad[idx] - dot);
            }
        }
    }
    result.push((input, dx));
    Ok(())
}

pub(super) fn cce_backward<T: Scalar>(
    g: &Graph<T>,
    probs: usize,
    target: &Tensor<T>,
    upstream: T,
    result: &mut Vec<(usize, Vec<T>)>,
) {
    if !g.node_requires(probs) {
        return;
    }
    let pv = g.node_value(probs);
    let (n, _, h, w) = pv.dims4().expect("validated in forward");
    let lo = T::from_f64c(CCE_CLIP);
    let hi = T::one() - lo;
    let scale = -upstream / T::from_usize_c(n * h * w);
    let dp = pv
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            if t == T::zero() || p < lo || p > hi {
                T::zero()
            } else {
                scale * t / p
            }
        })
        .collect();
    result.push((probs, dp));
}

pub(super) fn param_loss_backward<T: Scalar>(
    g: &Graph<T>,
    pred: usize,
    target: &[T],
    index: usize,
    wrapped: bool,
    upstream: T,
    result: &mut Vec<(usize, Vec<T>)>,
) {
    if !g.node_requires(pred) {
        return;
    }
    let pv = g.node_value(pred).data();
    let n = pv.len() / PARAM_COUNT;
    let scale = upstream / T::from_usize_c(n);
    let mut dp = vec![T::zero(); pv.len()];
    for r in 0..n {
        let off = r * PARAM_COUNT + index;
        dp[off] = scale * residual(pv[off], target[off], wrapped);
    }
    result.push((pred, dp));
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Mode;

    fn softmax_of(logits: &[f64], k: usize) -> Vec<f64> {
        let mut g = Graph::<f64>::new(Mode::Training);
        let x = g.constant(Tensor::from_f64(&[1, k, 1, logits.len() / k], logits).unwrap());
        let y = g.softmax_channels(x).unwrap();
        g.value(y).data().to_vec()
    }

    #[test]
    fn equal_logits_give_uniform_distribution() {
        let p = softmax_of(&[0.3; 6], 6);
        assert!(p.iter().all(|&v| (v - 1.0 / 6.0).abs() < 1e-15));
    }

    #[test]
    fn large_logits_do_not_overflow() {
        let p = softmax_of(&[1000.0, 0.0], 2);
        assert_eq!(p, vec![1.0, 0.0]);
    }

    #[test]
    fn log_two_logit_gives_two_thirds() {
        let p = softmax_of(&[2f64.ln(), 0.0], 2);
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((p[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    fn cce_of(probs: &[f64], target: &[f64], k: usize) -> f64 {
        let shape = [1, k, 1, probs.len() / k];
        let mut g = Graph::<f64>::new(Mode::Training);
        let p = g.constant(Tensor::from_f64(&shape, probs).unwrap());
        let l = g.cce(p, &Tensor::from_f64(&shape, target).unwrap()).unwrap();
        g.item(l)
    }

    #[test]
    fn perfect_prediction_is_near_zero() {
        let l = cce_of(&[0., 1., 0.], &[0., 1., 0.], 3);
        assert!(l > 0.0 && l < 2e-7);
    }

    #[test]
    fn uniform_six_class_prediction_costs_ln6() {
        let l = cce_of(&[1.0 / 6.0; 6], &[0., 0., 1., 0., 0., 0.], 6);
        assert!((l - 6f64.ln()).abs() < 1e-12);
        assert!((l - 1.791759).abs() < 1e-6);
    }

    #[test]
    fn quarter_probability_costs_ln4() {
        let l = cce_of(&[0.25, 0.75], &[1., 0.], 2);
        assert!((l - 1.386294).abs() < 1e-6);
    }

    #[test]
    fn softmax_cce_gradient_matches_closed_form() {
        let logits = [0.2, -1.0, 0.5, 2.0, 0.1, -0.3];
        let target = [1., 0., 1., 0., 1., 0.];
        let shape = [1, 2, 1, 3];
        let mut g = Graph::<f64>::new(Mode::Training);
        let x = g.leaf(Tensor::from_f64(&shape, &logits).unwrap());
        let p = g.softmax_channels(x).unwrap();
        let probs = g.value(p).data().to_vec();
        let l = g.cce(p, &Tensor::from_f64(&shape, &target).unwrap()).unwrap();
        g.backward(l).unwrap();
        for ((d, p), t) in g.grad(x).unwrap().iter().zip(&probs).zip(&target) {
            assert!((d - (p - t) / 3.0).abs() < 1e-12);
        }
    }
}
