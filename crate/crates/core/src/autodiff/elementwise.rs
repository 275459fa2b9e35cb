use crate::error::{shape_err, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::graph::{Graph, Op, Var};

impl<T: Scalar> Graph<T> {
    pub fn relu(&mut self, input: Var) -> Var {
        let i = self.index(input);
        let value = self.node_value(i).map(|v| if v > T::zero() { v } else { T::zero() });
        let requires = self.node_requires(i);
        self.push(value, Op::Relu { input: i }, requires)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ai, bi) = (self.index(a), self.index(b));
        let (av, bv) = (self.node_value(ai), self.node_value(bi));
        if av.shape() != bv.shape() {
            return shape_err(format!("add shape mismatch {:?} vs {:?}", av.shape(), bv.shape()));
        }
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| x + y).collect();
        let value = Tensor::new(av.shape(), data)?;
        let requires = self.any_requires(&[ai, bi]);
        Ok(self.push(value, Op::Add { a: ai, b: bi }, requires))
    }

    pub fn scale(&mut self, input: Var, factor: T) -> Var {
        let i = self.index(input);
        let value = self.node_value(i).map(|v| v * factor);
        let requires = self.node_requires(i);
        self.push(value, Op::Scale { input: i, factor }, requires)
    }

    /// Σ wᵢ·xᵢ over one-element nodes.
    pub fn weighted_sum(&mut self, terms: &[(Var, T)]) -> Result<Var> {
        let mut ids = Vec::with_capacity(terms.len());
        let mut total = T::zero();
        for &(v, w) in terms {
            let id = self.index(v);
            if self.node_value(id).len() != 1 {
                return shape_err("weighted_sum terms must be scalars");
            }
            total += w * self.node_value(id).data()[0];
            ids.push((id, w));
        }
        let requires = self.any_requires(&ids.iter().map(|t| t.0).collect::<Vec<_>>());
        Ok(self.push(Tensor::scalar(total), Op::WeightedSum { terms: ids }, requires))
    }

    pub fn mean_all(&mut self, input: Var) -> Var {
        let i = self.index(input);
        let x = self.node_value(i);
        let m = x.data().iter().copied().sum::<T>() / T::from_usize_c(x.len());
        let requires = self.node_requires(i);
        self.push(Tensor::scalar(m), Op::MeanAll { input: i }, requires)
    }

    /// mean((a − b)²)
    pub fn mse_mean(&mut self, a: Var, b: Var) -> Result<Var> {
        self.mse_impl(a, b, false)
    }

    /// mean(½(a − b)²)
    pub fn half_mse(&mut self, a: Var, b: Var) -> Result<Var> {
        self.mse_impl(a, b, true)
    }

    fn mse_impl(&mut self, a: Var, b: Var, half: bool) -> Result<Var> {
        let (ai, bi) = (self.index(a), self.index(b));
        let (av, bv) = (self.node_value(ai), self.node_value(bi));
        if av.shape() != bv.shape() {
            return shape_err(format!("mse shape mismatch {:?} vs {:?}", av.shape(), bv.shape()));
        }
        let sq: T = av
            .data()
            .iter()
            .zip(bv.data())
            .map(|(&x, &y)| (x - y) * (x - y))
            .sum();
        let mut m = sq / T::from_usize_c(av.len());
        if half {
            m *= T::from_f64c(0.5);
        }
        let requires = self.any_requires(&[ai, bi]);
        Ok(self.push(Tensor::scalar(m), Op::MseMean { a: ai, b: bi, half }, requires))
    }

    /// Fully connected layer: `input` N×In, `weight` Out×In, `bias` Out.
    pub fn linear(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let (i, wi, bi) = (self.index(input), self.index(weight), self.index(bias));
        let (n, fin) = match *self.node_value(i).shape() {
            [n, f] => (n, f),
            ref s => return shape_err(format!("linear input must be N×In, got {s:?}")),
        };
        let (fout, win) = match *self.node_value(wi).shape() {
            [o, f] => (o, f),
            ref s => return shape_err(format!("linear weight must be Out×In, got {s:?}")),
        };
        if win != fin || self.node_value(bi).shape() != [fout] {
            return shape_err(format!(
                "linear shapes disagree: input {fin}, weight {fout}×{win}, bias {:?}",
                self.node_value(bi).shape()
            ));
        }
        let mut out = Vec::with_capacity(n * fout);
        for _ in 0..n {
            out.extend_from_slice(self.node_value(bi).data());
        }
        T::gemm(
            n,
            fin,
            fout,
            T::one(),
            self.node_value(i).data(),
            (fin as isize, 1),
            self.node_value(wi).data(),
            (1, fin as isize),
            T::one(),
            &mut out,
            (fout as isize, 1),
        );
        let requires = self.any_requires(&[i, wi, bi]);
        let value = Tensor::new(&[n, fout], out)?;
        Ok(self.push(
            value,
            Op::Linear {
                input: i,
                weight: wi,
                bias: bi,
            },
            requires,
        ))
    }

    pub fn reshape(&mut self, input: Var, shape: &[usize]) -> Result<Var> {
        let i = self.index(input);
        let value = self.node_value(i).clone().reshape(shape)?;
        let requires = self.node_requires(i);
        Ok(self.push(value, Op::Reshape { input: i }, requires))
    }

    /// Concatenates N×Cᵢ×H×W tensors along the channel axis, in order.
    pub fn concat_channels(&mut self, inputs: &[Var]) -> Result<Var> {
        let mut parts = Vec::with_capacity(inputs.len());
        let mut dims: Option<(usize, usize, usize)> = None;
        let mut total_c = 0;
        for &v in inputs {
            let id = self.index(v);
            let (n, c, h, w) = self.node_value(id).dims4()?;
            match dims {
                None => dims = Some((n, h, w)),
                Some(d) if d != (n, h, w) => {
                    return shape_err(format!(
                        "concat mismatch: {:?} vs N={n},H={h},W={w}",
                        d
                    ))
                }
                _ => {}
            }
            total_c += c;
            parts.push((id, c));
        }
        let Some((n, h, w)) = dims else {
            return shape_err("concat of zero tensors");
        };
        let hw = h * w;
        let mut out = Vec::with_capacity(n * total_c * hw);
        for s in 0..n {
            for &(id, c) in &parts {
                out.extend_from_slice(&self.node_value(id).data()[s * c * hw..(s + 1) * c * hw]);
            }
        }
        let requires = self.any_requires(&parts.iter().map(|p| p.0).collect::<Vec<_>>());
        let value = Tensor::new(&[n, total_c, h, w], out)?;
        Ok(self.push(value, Op::Concat { inputs: parts }, requires))
    }
}

pub(super) fn relu_backward<T: Scalar>(
    g: &Graph<T>,
    input: usize,
    grad: &[T],
    result: &mut Vec<(usize, Vec<T>)>,
) {
    if !g.node_requires(input) {
        return;
    }
    let dx = g
        .node_value(input)
        .data()
        .iter()
        .zip(grad)
        .map(|(&x, &gv)| if x > T::zero() { gv } else { T::zero() })
        .collect();
    result.push((input, dx));
}

pub(super) fn mse_backward<T: Scalar>(
    g: &Graph<T>,
    a: usize,
    b: usize,
    half: bool,
    upstream: T,
    result: &mut Vec<(usize, Vec<T>)>,
) {
    let (av, bv) = (g.node_value(a), g.node_value(b));
    let factor = if half { T::one() } else { T::from_f64c(2.0) } * upstream
        / T::from_usize_c(av.len());
    let diff: Vec<T> = av
        .data()
        .iter()
        .zip(bv.data())
        .map(|(&x, &y)| factor * (x - y))
        .collect();
    if a == b {
        return;
    }
    if g.node_requires(b) {
        result.push((b, diff.iter().map(|&d| -d).collect()));
    }
    if g.node_requires(a) {
        result.push((a, diff));
    }
}

pub(super) fn linear_backward<T: Scalar>(
    g: &Graph<T>,
    input: usize,
    weight: usize,
    bias: usize,
    grad: &[T],
    result: &mut Vec<(usize, Vec<T>)>,
) {
    let x = g.node_value(input);
    let (n, fin) = (x.shape()[0], x.shape()[1]);
    let w = g.node_value(weight);
    let fout = w.shape()[0];
    if g.node_requires(bias) {
        let mut db = vec![T::zero(); fout];
        for row in grad.chunks(fout) {
            db.iter_mut().zip(row).for_each(|(d, &gv)| *d += gv);
        }
        result.push((bias, db));
    }
    if g.node_requires(weight) {
        let mut dw = vec![T::zero(); fout * fin];
        T::gemm(
            fout,
            n,
            fin,
            T::one(),
            grad,
            (1, fout as isize),
            x.data(),
            (fin as isize, 1),
            T::zero(),
            &mut dw,
            (fin as isize, 1),
        );
        result.push((weight, dw));
    }
    if g.node_requires(input) {
        let mut dx = vec![T::zero(); n * fin];
        T::gemm(
            n,
            fout,
            fin,
            T::one(),
            grad,
            (fout as isize, 1),
            w.data(),
            (fin as isize, 1),
            T::zero(),
            &mut dx,
            (fin as isize, 1),
        );
        result.push((input, dx));
    }
}

pub(super) fn concat_backward<T: Scalar>(
    g: &Graph<T>,
    inputs: &[(usize, usize)],
    out_shape: &[usize],
    grad: &[T],
    result: &mut Vec<(usize, Vec<T>)>,
) {
    let (n, total_c, hw) = (out_shape[0], out_shape[1], out_shape[2] * out_shape[3]);
    let mut offset = 0;
    for &(id, c) in inputs {
        if g.node_requires(id) {
            let mut d = Vec::with_capacity(n * c * hw);
            for s in 0..n {
                let start = (s * total_c + offset) * hw;
                d.extend_from_slice(&grad[start..start + c * hw]);
            }
            result.push((id, d));
        }
        offset += c;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Mode;

    #[test]
    fn relu_clamps_negatives() {
        let mut g = Graph::<f64>::new(Mode::Training);
        let x = g.constant(Tensor::from_f64(&[2], &[-1.0, 2.0]).unwrap());
        let y = g.relu(x);
        assert_eq!(g.value(y).data(), &[0.0, 2.0]);
    }

    #[test]
    fn concat_preserves_channel_order() {
        let mut g = Graph::<f64>::new(Mode::Training);
        let a = g.constant(Tensor::full(&[1, 2, 1, 1], 1.0));
        let b = g.constant(Tensor::from_f64(&[1, 3, 1, 1], &[2., 3., 4.]).unwrap());
        let y = g.concat_channels(&[a, b]).unwrap();
        assert_eq!(g.shape(y), &[1, 5, 1, 1]);
        assert_eq!(g.value(y).data(), &[1., 1., 2., 3., 4.]);
    }

    #[test]
    fn mse_of_equal_tensors_is_zero() {
        let mut g = Graph::<f64>::new(Mode::Training);
        let a = g.constant(Tensor::from_f64(&[2], &[1., 2.]).unwrap());
        let b = g.constant(Tensor::from_f64(&[2], &[1., 2.]).unwrap());
        let m = g.mse_mean(a, b).unwrap();
        assert_eq!(g.item(m), 0.0);
    }

    #[test]
    fn linear_computes_affine_map() {
        let mut g = Graph::<f64>::new(Mode::Training);
        let x = g.constant(Tensor::from_f64(&[1, 2], &[1., 2.]).unwrap());
        let w = g.constant(Tensor::from_f64(&[3, 2], &[1., 0., 0., 1., 1., 1.]).unwrap());
        let b = g.constant(Tensor::from_f64(&[3], &[0.5, 0., -1.]).unwrap());
        let y = g.linear(x, w, b).unwrap();
        assert_eq!(g.value(y).data(), &[1.5, 2.0, 2.0]);
    }

    #[test]
    fn shape_mismatches_are_errors() {
        let mut g = Graph::<f64>::new(Mode::Training);
        let a = g.constant(Tensor::zeros(&[2]));
        let b = g.constant(Tensor::zeros(&[3]));
        assert!(g.add(a, b).is_err());
        assert!(g.mse_mean(a, b).is_err());
    }
}
