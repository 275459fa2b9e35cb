//! Stride-1 zero-padded convolution with odd square kernels via im2col + GEMM.

use crate::error::{shape_err, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::graph::{Graph, Op, Var};

/// Unfolds one C×H×W sample into a (C·k·k)×(H·W) column matrix.
fn im2col<T: Scalar>(x: &[T], c: usize, h: usize, w: usize, k: usize, cols: &mut [T]) {
    let pad = k / 2;
    let hw = h * w;
    for ci in 0..c {
        let plane = &x[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let dst = &mut cols[row * hw..(row + 1) * hw];
                let dx = kx as isize - pad as isize;
                let dy = ky as isize - pad as isize;
                let x_lo = (-dx).max(0) as usize;
                let x_hi = (w as isize - dx).min(w as isize).max(0) as usize;
                for oy in 0..h {
                    let iy = oy as isize + dy;
                    let drow = &mut dst[oy * w..(oy + 1) * w];
                    if iy < 0 || iy >= h as isize {
                        drow.fill(T::zero());
                        continue;
                    }
                    let srow = &plane[iy as usize * w..(iy as usize + 1) * w];
                    drow[..x_lo.min(w)].fill(T::zero());
                    if x_hi > x_lo {
                        let s0 = (x_lo as isize + dx) as usize;
                        drow[x_lo..x_hi].copy_from_slice(&srow[s0..s0 + (x_hi - x_lo)]);
                    }
                    drow[x_hi.max(x_lo)..].fill(T::zero());
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters columns back onto the padded image.
fn col2im<T: Scalar>(cols: &[T], c: usize, h: usize, w: usize, k: usize, dx_out: &mut [T]) {
    let pad = k / 2;
    let hw = h * w;
    for ci in 0..c {
        let plane = &mut dx_out[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let src = &cols[row * hw..(row + 1) * hw];
                let dx = kx as isize - pad as isize;
                let dy = ky as isize - pad as isize;
                let x_lo = (-dx).max(0) as usize;
                let x_hi = (w as isize - dx).min(w as isize).max(0) as usize;
                if x_hi <= x_lo {
                    continue;
                }
                for oy in 0..h {
                    let iy = oy as isize + dy;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let s0 = (x_lo as isize + dx) as usize;
                    let drow = &mut plane[iy as usize * w + s0..iy as usize * w + s0 + (x_hi - x_lo)];
                    let srow = &src[oy * w + x_lo..oy * w + x_hi];
                    drow.iter_mut().zip(srow).for_each(|(d, &s)| *d += s);
                }
            }
        }
    }
}

fn kernel_dims(shape: &[usize]) -> Result<(usize, usize, usize)> {
    match *shape {
        [f, c, kh, kw] if kh == kw && kh % 2 == 1 => Ok((f, c, kh)),
        _ => shape_err(format!(
            "convolution kernel must be F×C×k×k with odd k, got {shape:?}"
        )),
    }
}

impl<T: Scalar> Graph<T> {
    /// Same-padded stride-1 convolution: `input` N×C×H×W, `kernel` F×C×k×k
    /// (k odd), `bias` F.
    pub fn conv2d(&mut self, input: Var, kernel: Var, bias: Var) -> Result<Var> {
        let (i, ki, bi) = (self.index(input), self.index(kernel), self.index(bias));
        let (n, c, h, w) = self.node_value(i).dims4()?;
        let (f, kc, k) = kernel_dims(self.node_value(ki).shape())?;
        if kc != c {
            return shape_err(format!(
                "conv2d channel mismatch: input has {c}, kernel expects {kc}"
            ));
        }
        if self.node_value(bi).shape() != [f] {
            return shape_err(format!(
                "conv2d bias must have shape [{f}], got {:?}",
                self.node_value(bi).shape()
            ));
        }
        let hw = h * w;
        let ckk = c * k * k;
        let x = self.node_value(i).data();
        let weights = self.node_value(ki).data();
        let b = self.node_value(bi).data();
        let mut out = vec![T::zero(); n * f * hw];
        let mut cols = if k == 1 { Vec::new() } else { vec![T::zero(); ckk * hw] };
        for s in 0..n {
            let xs = &x[s * c * hw..(s + 1) * c * hw];
            let ys = &mut out[s * f * hw..(s + 1) * f * hw];
            for (fi, row) in ys.chunks_mut(hw).enumerate() {
                row.fill(b[fi]);
            }
            let src: &[T] = if k == 1 {
                xs
            } else {
                im2col(xs, c, h, w, k, &mut cols);
                &cols
            };
            T::gemm(
                f,
                ckk,
                hw,
                T::one(),
                weights,
                (ckk as isize, 1),
                src,
                (hw as isize, 1),
                T::one(),
                ys,
                (hw as isize, 1),
            );
        }
        let requires = self.any_requires(&[i, ki, bi]);
        let value = Tensor::new(&[n, f, h, w], out)?;
        Ok(self.push(
            value,
            Op::Conv2d {
                input: i,
                kernel: ki,
                bias: bi,
            },
            requires,
        ))
    }
}

pub(super) fn backward<T: Scalar>(
    g: &Graph<T>,
    input: usize,
    kernel: usize,
    bias: usize,
    grad: &[T],
    result: &mut Vec<(usize, Vec<T>)>,
) {
    let xv = g.node_value(input);
    let (n, c, h, w) = xv.dims4().expect("validated in forward");
    let kv = g.node_value(kernel);
    let (f, _, k) = kernel_dims(kv.shape()).expect("validated in forward");
    let hw = h * w;
    let ckk = c * k * k;
    let x = xv.data();
    let weights = kv.data();

    let want_x = g.node_requires(input);
    let want_k = g.node_requires(kernel);
    let want_b = g.node_requires(bias);

    if want_b {
        let mut db = vec![T::zero(); f];
        for s in 0..n {
            for (fi, acc) in db.iter_mut().enumerate() {
                let off = (s * f + fi) * hw;
                *acc += grad[off..off + hw].iter().copied().sum::<T>();
            }
        }
        result.push((bias, db));
    }

    if !want_x && !want_k {
        return;
    }
    let mut dk = if want_k { vec![T::zero(); f * ckk] } else { Vec::new() };
    let mut dx = if want_x { vec![T::zero(); n * c * hw] } else { Vec::new() };
    let mut cols = if k == 1 { Vec::new() } else { vec![T::zero(); ckk * hw] };
    let mut dcols = if want_x && k != 1 { vec![T::zero(); ckk * hw] } else { Vec::new() };
    for s in 0..n {
        let gs = &grad[s * f * hw..(s + 1) * f * hw];
        let xs = &x[s * c * hw..(s + 1) * c * hw];
        if want_k {
            let src: &[T] = if k == 1 {
                xs
            } else {
                im2col(xs, c, h, w, k, &mut cols);
                &cols
            };
            // dK += dY · colsᵀ
            T::gemm(
                f,
                hw,
                ckk,
                T::one(),
                gs,
                (hw as isize, 1),
                src,
                (1, hw as isize),
                T::one(),
                &mut dk,
                (ckk as isize, 1),
            );
        }
        if want_x {
            let dxs = &mut dx[s * c * hw..(s + 1) * c * hw];
            if k == 1 {
                T::gemm(
                    ckk,
                    f,
                    hw,
                    T::one(),
                    weights,
                    (1, ckk as isize),
                    gs,
                    (hw as isize, 1),
                    T::one(),
                    dxs,
                    (hw as isize, 1),
                );
            } else {
                // dcols = Kᵀ · dY
                T::gemm(
                    ckk,
                    f,
                    hw,
                    T::one(),
                    weights,
                    (1, ckk as isize),
                    gs,
                    (hw as isize, 1),
                    T::zero(),
                    &mut dcols,
                    (hw as isize, 1),
                );
                col2im(&dcols, c, h, w, k, dxs);
            }
        }
    }
    if want_k {
        result.push((kernel, dk));
    }
    if want_x {
        result.push((input, dx));
    }
}
