//! Grid generation and bilinear sampling as differentiable graph operations.

use crate::error::{shape_err, Result};
use crate::scalar::Scalar;
use crate::spatial::{linspace_value, GridKind, RigidParams};
use crate::tensor::Tensor;

use super::graph::{Graph, Op, Var};
use super::loss::PARAM_COUNT;

/// Maps a normalized coordinate in [−1, 1] to a 0-based pixel coordinate
/// over `extent` pixels: p = (g + 1)(extent − 1)/2. Values within a few ulps
/// of an integer are snapped onto it so that an untransformed grid lands
/// exactly on pixel centres.
#[inline]
pub fn pixel_coord<T: Scalar>(g: T, extent: usize) -> T {
    let span = T::from_usize_c(extent.saturating_sub(1));
    let p = (g + T::one()) * span * T::from_f64c(0.5);
    let r = p.round();
    let tol = T::epsilon() * T::from_f64c(8.0) * (span + T::one());
    if (p - r).abs() <= tol {
        r
    } else {
        p
    }
}

#[inline]
fn tent<T: Scalar>(p: T, i: isize) -> T {
    let d = T::one() - (p - T::from_isize(i).expect("pixel index")).abs();
    if d > T::zero() {
        d
    } else {
        T::zero()
    }
}

/// Lower neighbour index, or `None` when the point has no support inside
/// `0..extent`.
#[inline]
fn lower_index<T: Scalar>(p: T, extent: usize) -> Option<isize> {
    if !p.is_finite() || p <= -T::one() || p >= T::from_usize_c(extent) {
        return None;
    }
    Some(p.floor().to_isize().expect("bounded coordinate"))
}

/// Layout of one image or output buffer: element (c, y, x) lives at
/// `c * chan + (y * width + x) * pix`.
#[derive(Debug, Clone, Copy)]
pub struct Strides {
    pub chan: usize,
    pub pix: usize,
}

/// Bilinear sampling of every channel of `image` (height × width × channels,
/// addressed through `src`) at the points `(ys[i], xs[i])` given in normalized
/// coordinates. Out-of-image support contributes zero. Terms are accumulated
/// in row-major neighbour order.
#[allow(clippy::too_many_arguments)]
pub fn sample_bilinear_into<T: Scalar>(
    image: &[T],
    (height, width, channels): (usize, usize, usize),
    src: Strides,
    ys: &[T],
    xs: &[T],
    out: &mut [T],
    dst: Strides,
) {
    for (i, (&gy, &gx)) in ys.iter().zip(xs).enumerate() {
        let py = pixel_coord(gy, height);
        let px = pixel_coord(gx, width);
        for c in 0..channels {
            out[c * dst.chan + i * dst.pix] = T::zero();
        }
        let (Some(y0), Some(x0)) = (lower_index(py, height), lower_index(px, width)) else {
            continue;
        };
        for yy in [y0, y0 + 1] {
            if yy < 0 || yy >= height as isize {
                continue;
            }
            let ky = tent(py, yy);
            for xx in [x0, x0 + 1] {
                if xx < 0 || xx >= width as isize {
                    continue;
                }
                let kx = tent(px, xx);
                let pix = (yy as usize * width + xx as usize) * src.pix;
                for c in 0..channels {
                    out[c * dst.chan + i * dst.pix] += image[c * src.chan + pix] * ky * kx;
                }
            }
        }
    }
}

impl<T: Scalar> Graph<T> {
    /// Uniform H′×W′ grid over [−1, 1]² transformed by the partial similarity
    /// `kind` of each row of `params` (N×4: t_x, t_y, θ, s). Output is
    /// N×2×H′×W′ with channel 0 holding y and channel 1 holding x.
    pub fn similarity_grid(
        &mut self,
        params: Var,
        kind: GridKind,
        height: usize,
        width: usize,
    ) -> Result<Var> {
        let pi = self.index(params);
        let pv = self.node_value(pi);
        let n = match *pv.shape() {
            [n, PARAM_COUNT] => n,
            ref s => return shape_err(format!("grid params must be N×4, got {s:?}")),
        };
        if height < 2 || width < 2 {
            return shape_err("grid extents must be at least 2");
        }
        let hw = height * width;
        let mut out = vec![T::zero(); n * 2 * hw];
        for (row, dst) in pv.data().chunks(PARAM_COUNT).zip(out.chunks_mut(2 * hw)) {
            let m = kind.matrix(&RigidParams::from_slice(row)).affine_rows();
            let (ys, xs) = dst.split_at_mut(hw);
            for i in 0..height {
                let y = linspace_value(i, height);
                for j in 0..width {
                    let x = linspace_value(j, width);
                    let (tx, ty) = crate::spatial::apply_affine(&m, x, y);
                    xs[i * width + j] = tx;
                    ys[i * width + j] = ty;
                }
            }
        }
        let requires = self.node_requires(pi);
        let value = Tensor::new(&[n, 2, height, width], out)?;
        Ok(self.push(value, Op::SimilarityGrid { params: pi, kind }, requires))
    }

    /// Samples `image` (N×C×H×W) at `grid` (N×2×H′×W′) → N×C×H′×W′.
    pub fn bilinear_sample(&mut self, image: Var, grid: Var) -> Result<Var> {
        let (ii, gi) = (self.index(image), self.index(grid));
        let (n, c, h, w) = self.node_value(ii).dims4()?;
        let (gn, two, oh, ow) = self.node_value(gi).dims4()?;
        if gn != n || two != 2 {
            return shape_err(format!(
                "grid {:?} does not match image batch {n}",
                self.node_value(gi).shape()
            ));
        }
        let (hw, ohw) = (h * w, oh * ow);
        let img = self.node_value(ii).data();
        let grd = self.node_value(gi).data();
        let mut out = vec![T::zero(); n * c * ohw];
        for s in 0..n {
            let gs = &grd[s * 2 * ohw..(s + 1) * 2 * ohw];
            let (ys, xs) = gs.split_at(ohw);
            sample_bilinear_into(
                &img[s * c * hw..(s + 1) * c * hw],
                (h, w, c),
                Strides { chan: hw, pix: 1 },
                ys,
                xs,
                &mut out[s * c * ohw..(s + 1) * c * ohw],
                Strides { chan: ohw, pix: 1 },
            );
        }
        let requires = self.any_requires(&[ii, gi]);
        let value = Tensor::new(&[n, c, oh, ow], out)?;
        Ok(self.push(value, Op::BilinearSample { image: ii, grid: gi }, requires))
    }
}

pub(super) fn grid_backward<T: Scalar>(
    g: &Graph<T>,
    params: usize,
    kind: GridKind,
    out_shape: &[usize],
    grad: &[T],
    result: &mut Vec<(usize, Vec<T>)>,
) {
    if !g.node_requires(params) {
        return;
    }
    let (height, width) = (out_shape[2], out_shape[3]);
    let hw = height * width;
    let pv = g.node_value(params).data();
    let mut dp = vec![T::zero(); pv.len()];
    for ((row, gs), d) in pv
        .chunks(PARAM_COUNT)
        .zip(grad.chunks(2 * hw))
        .zip(dp.chunks_mut(PARAM_COUNT))
    {
        // dL/dm for the 2×3 affine rows.
        let mut dm = [[T::zero(); 3]; 2];
        let (gy, gx) = gs.split_at(hw);
        for i in 0..height {
            let y = linspace_value::<T>(i, height);
            for j in 0..width {
                let x = linspace_value::<T>(j, width);
                let (ax, ay) = (gx[i * width + j], gy[i * width + j]);
                dm[0][0] += ax * x;
                dm[0][1] += ax * y;
                dm[0][2] += ax;
                dm[1][0] += ay * x;
                dm[1][1] += ay * y;
                dm[1][2] += ay;
            }
        }
        let p = RigidParams::from_slice(row);
        let grads = kind.param_gradient(&p, &dm);
        d.copy_from_slice(&grads);
    }
    result.push((params, dp));
}

pub(super) fn sample_backward<T: Scalar>(
    g: &Graph<T>,
    image: usize,
    grid: usize,
    grad: &[T],
    result: &mut Vec<(usize, Vec<T>)>,
) {
    let want_img = g.node_requires(image);
    let want_grid = g.node_requires(grid);
    if !want_img && !want_grid {
        return;
    }
    let iv = g.node_value(image);
    let (n, c, h, w) = iv.dims4().expect("validated in forward");
    let gv = g.node_value(grid);
    let (_, _, oh, ow) = gv.dims4().expect("validated in forward");
    let (hw, ohw) = (h * w, oh * ow);
    let img = iv.data();
    let grd = gv.data();
    let mut dimg = if want_img { vec![T::zero(); img.len()] } else { Vec::new() };
    let mut dgrid = if want_grid { vec![T::zero(); grd.len()] } else { Vec::new() };
    let half_h = T::from_usize_c(h - 1) * T::from_f64c(0.5);
    let half_w = T::from_usize_c(w - 1) * T::from_f64c(0.5);
    for s in 0..n {
        let gs = &grd[s * 2 * ohw..(s + 1) * 2 * ohw];
        let up = &grad[s * c * ohw..(s + 1) * c * ohw];
        let im = &img[s * c * hw..(s + 1) * c * hw];
        for o in 0..ohw {
            let py = pixel_coord(gs[o], h);
            let px = pixel_coord(gs[ohw + o], w);
            let (Some(y0), Some(x0)) = (lower_index(py, h), lower_index(px, w)) else {
                continue;
            };
            let mut d_py = T::zero();
            let mut d_px = T::zero();
            for yy in [y0, y0 + 1] {
                if yy < 0 || yy >= h as isize {
                    continue;
                }
                let ky = tent(py, yy);
                let dky = tent_slope(py, yy);
                for xx in [x0, x0 + 1] {
                    if xx < 0 || xx >= w as isize {
                        continue;
                    }
                    let kx = tent(px, xx);
                    let dkx = tent_slope(px, xx);
                    let pix = yy as usize * w + xx as usize;
                    for ch in 0..c {
                        let u = up[ch * ohw + o];
                        if want_img {
                            dimg[s * c * hw + ch * hw + pix] += u * ky * kx;
                        }
                        if want_grid {
                            let v = im[ch * hw + pix] * u;
                            d_py += v * dky * kx;
                            d_px += v * ky * dkx;
                        }
                    }
                }
            }
            if want_grid {
                dgrid[s * 2 * ohw + o] = d_py * half_h;
                dgrid[s * 2 * ohw + ohw + o] = d_px * half_w;
            }
        }
    }
    if want_img {
        result.push((image, dimg));
    }
    if want_grid {
        result.push((grid, dgrid));
    }
}

/// Derivative of max(0, 1 − |p − i|) with respect to p (zero at kinks).
#[inline]
fn tent_slope<T: Scalar>(p: T, i: isize) -> T {
    let d = p - T::from_isize(i).expect("pixel index");
    if d.abs() >= T::one() || d == T::zero() {
        T::zero()
    } else if d > T::zero() {
        -T::one()
    } else {
        T::one()
    }
}
