use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Orthogonal initialization with unit gain. The weight is viewed as a
/// (shape[0]) × (product of remaining dims) matrix; its rows are orthonormal
/// when rows ≤ cols, its columns otherwise.
pub fn orthogonal_init<T: Scalar, R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Result<Tensor<T>> {
    let rows = *shape.first().unwrap_or(&0);
    let cols: usize = shape.iter().skip(1).product();
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidArgument(format!(
            "orthogonal init needs a non-empty shape, got {shape:?}"
        )));
    }
    // Orthonormalize the `short` vectors of length `long` (rows or columns).
    let (short, long) = (rows.min(cols), rows.max(cols));
    let mut vecs: Vec<Vec<f64>> = (0..short)
        .map(|_| (0..long).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    for i in 0..short {
        // Two Gram-Schmidt passes keep the result orthogonal to machine precision.
        for _ in 0..2 {
            for j in 0..i {
                let (head, tail) = vecs.split_at_mut(i);
                let dot: f64 = head[j].iter().zip(&tail[0]).map(|(a, b)| a * b).sum();
                tail[0].iter_mut().zip(&head[j]).for_each(|(v, q)| *v -= dot * q);
            }
        }
        let norm = vecs[i].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-12 {
            return Err(Error::InvalidArgument("degenerate random draw in orthogonal init".into()));
        }
        vecs[i].iter_mut().for_each(|v| *v /= norm);
    }
    let mut data = vec![T::zero(); rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            let v = if rows <= cols { vecs[r][c] } else { vecs[c][r] };
            data[r * cols + c] = T::from_f64c(v);
        }
    }
    Tensor::new(shape, data)
}
