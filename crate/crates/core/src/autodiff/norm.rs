//! Per-channel batch normalization.

use crate::error::{shape_err, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::graph::{Graph, Op, Var};

pub const BN_EPSILON: f64 = 1e-5;

/// Statistics of the batch seen by a training-mode normalization, used for
/// running-average updates. `var` is the unbiased estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

fn layout(shape: &[usize]) -> Result<(usize, usize, usize)> {
    if shape.len() < 2 {
        return shape_err(format!("batchnorm needs N×C[×…] input, got {shape:?}"));
    }
    Ok((shape[0], shape[1], shape[2..].iter().product()))
}

impl<T: Scalar> Graph<T> {
    fn check_affine(&self, c: usize, gamma: usize, beta: usize) -> Result<()> {
        for (name, id) in [("gamma", gamma), ("beta", beta)] {
            if self.node_value(id).shape() != [c] {
                return shape_err(format!(
                    "batchnorm {name} must have shape [{c}], got {:?}",
                    self.node_value(id).shape()
                ));
            }
        }
        Ok(())
    }

    /// Normalizes with batch statistics and returns them alongside the output.
    pub fn batchnorm_train(
        &mut self,
        input: Var,
        gamma: Var,
        beta: Var,
    ) -> Result<(Var, BatchStats<T>)> {
        let (i, gi, bi) = (self.index(input), self.index(gamma), self.index(beta));
        let (n, c, inner) = layout(self.node_value(i).shape())?;
        self.check_affine(c, gi, bi)?;
        let count = n * inner;
        let eps = T::from_f64c(BN_EPSILON);
        let x = self.node_value(i).data();
        let mut mean = vec![T::zero(); c];
        let mut var = vec![T::zero(); c];
        for s in 0..n {
            for ch in 0..c {
                let off = (s * c + ch) * inner;
                mean[ch] += x[off..off + inner].iter().copied().sum::<T>();
            }
        }
        let inv_count = T::one() / T::from_usize_c(count);
        mean.iter_mut().for_each(|m| *m *= inv_count);
        for s in 0..n {
            for ch in 0..c {
                let off = (s * c + ch) * inner;
                let m = mean[ch];
                var[ch] += x[off..off + inner]
                    .iter()
                    .map(|&v| (v - m) * (v - m))
                    .sum::<T>();
            }
        }
        let inv_std: Vec<T> = var
            .iter()
            .map(|&v| T::one() / (v * inv_count + eps).sqrt())
            .collect();
        let unbiased: Vec<T> = var
            .iter()
            .map(|&v| {
                if count > 1 {
                    v / T::from_usize_c(count - 1)
                } else {
                    T::zero()
                }
            })
            .collect();
        let out = self.normalize(i, gi, bi, &mean, &inv_std, n, c, inner)?;
        let requires = self.any_requires(&[i, gi, bi]);
        let stats = BatchStats {
            mean: mean.clone(),
            var: unbiased,
        };
        let v = self.push(
            out,
            Op::BatchNorm {
                input: i,
                gamma: gi,
                beta: bi,
                mean,
                inv_std,
                batch_stats: true,
            },
            requires,
        );
        Ok((v, stats))
    }

    /// Normalizes with externally supplied running statistics.
    pub fn batchnorm_eval(
        &mut self,
        input: Var,
        gamma: Var,
        beta: Var,
        running_mean: &[T],
        running_var: &[T],
    ) -> Result<Var> {
        let (i, gi, bi) = (self.index(input), self.index(gamma), self.index(beta));
        let (n, c, inner) = layout(self.node_value(i).shape())?;
        self.check_affine(c, gi, bi)?;
        if running_mean.len() != c || running_var.len() != c {
            return shape_err("running statistics do not match channel count");
        }
        let eps = T::from_f64c(BN_EPSILON);
        let inv_std: Vec<T> = running_var
            .iter()
            .map(|&v| T::one() / (v + eps).sqrt())
            .collect();
        let mean = running_mean.to_vec();
        let out = self.normalize(i, gi, bi, &mean, &inv_std, n, c, inner)?;
        let requires = self.any_requires(&[i, gi, bi]);
        Ok(self.push(
            out,
            Op::BatchNorm {
                input: i,
                gamma: gi,
                beta: bi,
                mean,
                inv_std,
                batch_stats: false,
            },
            requires,
        ))
    }

    #[allow(clippy::too_many_arguments)]
    fn normalize(
        &self,
        i: usize,
        gi: usize,
        bi: usize,
        mean: &[T],
        inv_std: &[T],
        n: usize,
        c: usize,
        inner: usize,
    ) -> Result<Tensor<T>> {
        let x = self.node_value(i).data();
        let gamma = self.node_value(gi).data();
        let beta = self.node_value(bi).data();
        let mut out = Vec::with_capacity(x.len());
        for s in 0..n {
            for ch in 0..c {
                let off = (s * c + ch) * inner;
                let (m, is, ga, be) = (mean[ch], inv_std[ch], gamma[ch], beta[ch]);
                out.extend(x[off..off + inner].iter().map(|&v| ga * ((v - m) * is) + be));
            }
        }
        Tensor::new(self.node_value(i).shape(), out)
    }
}

pub(super) fn backward<T: Scalar>(
    g: &Graph<T>,
    [input, gamma, beta]: [usize; 3],
    mean: &[T],
    inv_std: &[T],
    batch_stats: bool,
    grad: &[T],
    result: &mut Vec<(usize, Vec<T>)>,
) {
    let xv = g.node_value(input);
    let (n, c, inner) = layout(xv.shape()).expect("validated in forward");
    let x = xv.data();
    let gam = g.node_value(gamma).data();
    let mut sum_dy = vec![T::zero(); c];
    let mut sum_dy_xhat = vec![T::zero(); c];
    for s in 0..n {
        for ch in 0..c {
            let off = (s * c + ch) * inner;
            let (m, is) = (mean[ch], inv_std[ch]);
            for (&xv, &dy) in x[off..off + inner].iter().zip(&grad[off..off + inner]) {
                sum_dy[ch] += dy;
                sum_dy_xhat[ch] += dy * (xv - m) * is;
            }
        }
    }
    if g.node_requires(input) {
        let mut dx = vec![T::zero(); x.len()];
        let count = T::from_usize_c(n * inner);
        for s in 0..n {
            for ch in 0..c {
                let off = (s * c + ch) * inner;
                let (m, is, ga) = (mean[ch], inv_std[ch], gam[ch]);
                let dst = &mut dx[off..off + inner];
                let src = &x[off..off + inner];
                let gs = &grad[off..off + inner];
                if batch_stats {
                    let k = ga * is / count;
                    let (sd, sdx) = (sum_dy[ch], sum_dy_xhat[ch]);
                    for ((d, &xv), &dy) in dst.iter_mut().zip(src).zip(gs) {
                        let xhat = (xv - m) * is;
                        *d = k * (count * dy - sd - xhat * sdx);
                    }
                } else {
                    for (d, &dy) in dst.iter_mut().zip(gs) {
                        *d = dy * ga * is;
                    }
                }
            }
        }
        result.push((input, dx));
    }
    if g.node_requires(gamma) {
        result.push((gamma, sum_dy_xhat));
    }
    if g.node_requires(beta) {
        result.push((beta, sum_dy));
    }
}
