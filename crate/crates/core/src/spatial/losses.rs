use crate::autodiff::{Graph, Var, PARAM_COUNT};
use crate::error::{shape_err, Result};
use crate::scalar::Scalar;

use super::grid::warp_image;
use super::similarity::{wrap, GridKind, RigidParams};

/// Regression losses on the four rigid parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatrixLosses<T> {
    pub tx: T,
    pub ty: T,
    pub theta: T,
    pub s: T,
}

/// Image losses for the T, R·T and S·R·T warps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageLosses<T> {
    pub t: T,
    pub theta: T,
    pub s: T,
}

/// ½(t_x − t̂_x)², ½(t_y − t̂_y)², ½ wrap(θ − θ̂)², ½(s − ŝ)².
pub fn matrix_losses<T: Scalar>(p: &RigidParams<T>, gt: &RigidParams<T>) -> MatrixLosses<T> {
    let half = T::from_f64c(0.5);
    let sq = |d: T| half * d * d;
    MatrixLosses {
        tx: sq(p.tx - gt.tx),
        ty: sq(p.ty - gt.ty),
        theta: sq(wrap(p.theta - gt.theta)),
        s: sq(p.s - gt.s),
    }
}

/// ½·mean((trans(I, M) − trans(I, M̂))²) for M ∈ {T, RT, SRT} on a
/// single-channel H×W image, sampled onto a grid of the same extent.
pub fn image_losses<T: Scalar>(
    image: &[T],
    extent: (usize, usize),
    p: &RigidParams<T>,
    gt: &RigidParams<T>,
) -> Result<ImageLosses<T>> {
    let mut out = [T::zero(); 3];
    for (slot, kind) in out.iter_mut().zip(GridKind::ALL) {
        let a = warp_image(image, extent, &kind.matrix(p), extent)?;
        let b = warp_image(image, extent, &kind.matrix(gt), extent)?;
        let sq: T = a.iter().zip(&b).map(|(&x, &y)| (x - y) * (x - y)).sum();
        *slot = T::from_f64c(0.5) * sq / T::from_usize_c(a.len());
    }
    Ok(ImageLosses {
        t: out[0],
        theta: out[1],
        s: out[2],
    })
}

/// Graph form of [`matrix_losses`], averaged over the batch: returns
/// (L_tx, L_ty, L_θ, L_s).
pub fn matrix_losses_graph<T: Scalar>(
    g: &mut Graph<T>,
    pred: Var,
    gt: &[RigidParams<T>],
) -> Result<[Var; 4]> {
    let target: Vec<[T; PARAM_COUNT]> = gt.iter().map(|p| p.to_array()).collect();
    Ok([
        g.param_loss(pred, &target, 0, false)?,
        g.param_loss(pred, &target, 1, false)?,
        g.param_loss(pred, &target, 2, true)?,
        g.param_loss(pred, &target, 3, false)?,
    ])
}

/// Graph form of [`image_losses`] for an N×1×H×W image batch: returns
/// (L_It, L_Iθ, L_Is) plus the predicted S·R·T grid for reuse. Gradients flow
/// only into `pred`.
pub fn image_losses_graph<T: Scalar>(
    g: &mut Graph<T>,
    image: Var,
    pred: Var,
    gt: &[RigidParams<T>],
) -> Result<([Var; 3], Var)> {
    let (n, c, h, w) = g.value(image).dims4()?;
    if c != 1 || gt.len() != n {
        return shape_err(format!(
            "image losses need N×1×H×W images with N ground-truth rows, got {:?} and {}",
            g.shape(image),
            gt.len()
        ));
    }
    let gt_flat: Vec<T> = gt.iter().flat_map(|p| p.to_array()).collect();
    let gt_var = g.constant(crate::tensor::Tensor::new(&[n, PARAM_COUNT], gt_flat)?);
    let mut losses = Vec::with_capacity(3);
    let mut full_grid = None;
    for kind in GridKind::ALL {
        let grid = g.similarity_grid(pred, kind, h, w)?;
        let warped = g.bilinear_sample(image, grid)?;
        let gt_grid = g.similarity_grid(gt_var, kind, h, w)?;
        let gt_warped = g.bilinear_sample(image, gt_grid)?;
        losses.push(g.half_mse(warped, gt_warped)?);
        if kind == GridKind::Full {
            full_grid = Some(grid);
        }
    }
    Ok((
        [losses[0], losses[1], losses[2]],
        full_grid.expect("full grid built"),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Mode;
    use crate::tensor::Tensor;
    use std::f64::consts::PI;

    #[test]
    fn equal_params_give_zero_losses() {
        let p = RigidParams::new(0.1, -0.2, 2.0, 0.8);
        let m = matrix_losses(&p, &p);
        assert_eq!([m.tx, m.ty, m.theta, m.s], [0.0; 4]);
        let img: Vec<f64> = (0..64).map(|i| (i as f64 * 0.3).sin()).collect();
        let l = image_losses(&img, (8, 8), &p, &p).unwrap();
        assert_eq!([l.t, l.theta, l.s], [0.0; 3]);
    }

    #[test]
    fn opposite_pi_rotations_are_synonymous() {
        let a = RigidParams::new(0.0, 0.0, -PI, 1.0);
        let b = RigidParams::new(0.0, 0.0, PI, 1.0);
        assert_eq!(matrix_losses(&a, &b).theta, 0.0);
    }

    #[test]
    fn small_rotation_difference() {
        let a = RigidParams::<f64>::new(0.0, 0.0, 0.5, 1.0);
        let b = RigidParams::new(0.0, 0.0, 0.2, 1.0);
        assert!((matrix_losses(&a, &b).theta - 0.045).abs() < 1e-12);
    }

    #[test]
    fn graph_losses_match_pure_versions() {
        let img: Vec<f64> = (0..100).map(|i| ((i * 37) % 11) as f64 / 11.0).collect();
        let p = RigidParams::new(0.05, -0.1, 0.4, 0.9);
        let gt = RigidParams::new(0.0, 0.02, 0.3, 0.8);
        let pure_m = matrix_losses(&p, &gt);
        let pure_i = image_losses(&img, (10, 10), &p, &gt).unwrap();
        let mut g = Graph::<f64>::new(Mode::Training);
        let image = g.constant(Tensor::new(&[1, 1, 10, 10], img).unwrap());
        let pred = g.leaf(Tensor::new(&[1, 4], p.to_array().to_vec()).unwrap());
        let m = matrix_losses_graph(&mut g, pred, &[gt]).unwrap();
        let (i, _) = image_losses_graph(&mut g, image, pred, &[gt]).unwrap();
        let mv: Vec<f64> = m.iter().map(|&v| g.item(v)).collect();
        assert_eq!(mv, vec![pure_m.tx, pure_m.ty, pure_m.theta, pure_m.s]);
        let iv: Vec<f64> = i.iter().map(|&v| g.item(v)).collect();
        for (a, b) in iv.iter().zip([pure_i.t, pure_i.theta, pure_i.s]) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}
