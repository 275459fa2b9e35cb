use crate::error::{shape_err, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::graph::{Graph, Op, Var};

impl<T: Scalar> Graph<T> {
    /// 2×2 max pooling with stride 2. Backward routes each gradient to the
    /// first (row-major) maximal element of its block.
    pub fn maxpool2(&mut self, input: Var) -> Result<Var> {
        let i = self.index(input);
        let (n, c, h, w) = self.node_value(i).dims4()?;
        if h % 2 != 0 || w % 2 != 0 {
            return shape_err(format!("maxpool2 needs even H and W, got {h}×{w}"));
        }
        let (oh, ow) = (h / 2, w / 2);
        let x = self.node_value(i).data();
        let mut out = Vec::with_capacity(n * c * oh * ow);
        let mut argmax = Vec::with_capacity(n * c * oh * ow);
        for plane in x.chunks(h * w) {
            for oy in 0..oh {
                for ox in 0..ow {
                    let base = 2 * oy * w + 2 * ox;
                    let mut best = base;
                    for cand in [base + 1, base + w, base + w + 1] {
                        if plane[cand] > plane[best] {
                            best = cand;
                        }
                    }
                    out.push(plane[best]);
                    argmax.push(best as u32);
                }
            }
        }
        let requires = self.node_requires(i);
        let value = Tensor::new(&[n, c, oh, ow], out)?;
        Ok(self.push(value, Op::MaxPool2 { input: i, argmax }, requires))
    }

    /// Nearest-neighbour 2× up-sampling.
    pub fn upsample2(&mut self, input: Var) -> Result<Var> {
        let i = self.index(input);
        let (n, c, h, w) = self.node_value(i).dims4()?;
        let (oh, ow) = (2 * h, 2 * w);
        let x = self.node_value(i).data();
        let mut out = vec![T::zero(); n * c * oh * ow];
        for (src, dst) in x.chunks(h * w).zip(out.chunks_mut(oh * ow)) {
            for y in 0..oh {
                let srow = &src[(y / 2) * w..(y / 2 + 1) * w];
                let drow = &mut dst[y * ow..(y + 1) * ow];
                for (xx, d) in drow.iter_mut().enumerate() {
                    *d = srow[xx / 2];
                }
            }
        }
        let requires = self.node_requires(i);
        let value = Tensor::new(&[n, c, oh, ow], out)?;
        Ok(self.push(value, Op::Upsample2 { input: i }, requires))
    }

    /// Spatial mean per channel: N×C×H×W → N×C.
    pub fn global_avg_pool(&mut self, input: Var) -> Result<Var> {
        let i = self.index(input);
        let (n, c, h, w) = self.node_value(i).dims4()?;
        let inv = T::one() / T::from_usize_c(h * w);
        let out: Vec<T> = self
            .node_value(i)
            .data()
            .chunks(h * w)
            .map(|p| p.iter().copied().sum::<T>() * inv)
            .collect();
        let requires = self.node_requires(i);
        let value = Tensor::new(&[n, c], out)?;
        Ok(self.push(value, Op::GlobalAvgPool { input: i }, requires))
    }
}

pub(super) fn maxpool_backward<T: Scalar>(
    g: &Graph<T>,
    input: usize,
    argmax: &[u32],
    grad: &[T],
    result: &mut Vec<(usize, Vec<T>)>,
) {
    if !g.node_requires(input) {
        return;
    }
    let (_, _, h, w) = g.node_value(input).dims4().expect("4-d");
    let per_out = (h / 2) * (w / 2);
    let mut dx = vec![T::zero(); g.node_value(input).len()];
    for (plane, (gs, idx)) in grad.chunks(per_out).zip(argmax.chunks(per_out)).enumerate() {
        let base = plane * h * w;
        for (&gv, &a) in gs.iter().zip(idx) {
            dx[base + a as usize] += gv;
        }
    }
    result.push((input, dx));
}

pub(super) fn upsample_backward<T: Scalar>(
    g: &Graph<T>,
    input: usize,
    grad: &[T],
    result: &mut Vec<(usize, Vec<T>)>,
) {
    if !g.node_requires(input) {
        return;
    }
    let (_, _, h, w) = g.node_value(input).dims4().expect("4-d");
    let (oh, ow) = (2 * h, 2 * w);
    let mut dx = vec![T::zero(); g.node_value(input).len()];
    for (src, dst) in grad.chunks(oh * ow).zip(dx.chunks_mut(h * w)) {
        for y in 0..oh {
            for x in 0..ow {
                dst[(y / 2) * w + x / 2] += src[y * ow + x];
            }
        }
    }
    result.push((input, dx));
}

pub(super) fn global_avg_backward<T: Scalar>(
    g: &Graph<T>,
    input: usize,
    grad: &[T],
    result: &mut Vec<(usize, Vec<T>)>,
) {
    if !g.node_requires(input) {
        return;
    }
    let (_, _, h, w) = g.node_value(input).dims4().expect("4-d");
    let inv = T::one() / T::from_usize_c(h * w);
    let mut dx = Vec::with_capacity(g.node_value(input).len());
    for &gv in grad {
        dx.extend(std::iter::repeat(gv * inv).take(h * w));
    }
    result.push((input, dx));
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Mode;

    #[test]
    fn maxpool_takes_block_maximum() {
        let mut g = Graph::<f64>::new(Mode::Training);
        let x = g.constant(Tensor::from_f64(&[1, 1, 2, 2], &[1., 2., 3., 4.]).unwrap());
        let y = g.maxpool2(x).unwrap();
        assert_eq!(g.value(y).data(), &[4.0]);
    }

    #[test]
    fn maxpool_on_ramp() {
        let ramp: Vec<f64> = (0..16).map(f64::from).collect();
        let mut g = Graph::<f64>::new(Mode::Training);
        let x = g.constant(Tensor::from_f64(&[1, 1, 4, 4], &ramp).unwrap());
        let y = g.maxpool2(x).unwrap();
        assert_eq!(g.value(y).data(), &[5., 7., 13., 15.]);
    }

    #[test]
    fn maxpool_ties_route_to_first_element() {
        let mut g = Graph::<f64>::new(Mode::Training);
        let x = g.leaf(Tensor::full(&[1, 1, 2, 4], 7.0));
        let y = g.maxpool2(x).unwrap();
        assert_eq!(g.value(y).data(), &[7.0, 7.0]);
        let s = g.mean_all(y);
        let s = g.scale(s, 2.0);
        g.backward(s).unwrap();
        assert_eq!(
            g.grad(x).unwrap(),
            &[1., 0., 1., 0., 0., 0., 0., 0.]
        );
    }

    #[test]
    fn maxpool_rejects_odd_extent() {
        let mut g = Graph::<f64>::new(Mode::Training);
        let x = g.constant(Tensor::zeros(&[1, 1, 3, 4]));
        assert!(g.maxpool2(x).is_err());
    }

    #[test]
    fn upsample_replicates_and_sums_back() {
        let mut g = Graph::<f64>::new(Mode::Training);
        let x = g.leaf(Tensor::from_f64(&[1, 1, 2, 2], &[1., 2., 3., 4.]).unwrap());
        let y = g.upsample2(x).unwrap();
        assert_eq!(
            g.value(y).data(),
            &[1., 1., 2., 2., 1., 1., 2., 2., 3., 3., 4., 4., 3., 3., 4., 4.]
        );
        let s = g.mean_all(y);
        let s = g.scale(s, 16.0);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[4.0; 4]);
    }

    #[test]
    fn upsample_single_value() {
        let mut g = Graph::<f64>::new(Mode::Training);
        let x = g.constant(Tensor::full(&[1, 1, 1, 1], 3.0));
        let y = g.upsample2(x).unwrap();
        assert_eq!(g.value(y).data(), &[3.0; 4]);
    }
}
