//! Central-difference verification of analytic gradients.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::graph::{Graph, Mode, Var};

fn evaluate<F>(f: &F, x: Tensor<f64>) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, Var) -> Result<Var>,
{
    let mut g = Graph::new(Mode::Training);
    let v = g.constant(x);
    let out = f(&mut g, v)?;
    let value = g.item(out);
    if !value.is_finite() {
        return Err(Error::NonFinite("function value at a probe point".into()));
    }
    Ok(value)
}

/// Maximum over all elements of
/// |analytic − numeric| / max(1, |analytic|, |numeric|).
pub fn check_gradient<F>(f: F, x: &Tensor<f64>, eps: f64) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, Var) -> Result<Var>,
{
    let all: Vec<usize> = (0..x.len()).collect();
    check_gradient_at(f, x, eps, &all)
}

/// As [`check_gradient`], probing only the listed element indices.
pub fn check_gradient_at<F>(f: F, x: &Tensor<f64>, eps: f64, probes: &[usize]) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, Var) -> Result<Var>,
{
    let mut g = Graph::new(Mode::Training);
    let v = g.leaf(x.clone());
    let out = f(&mut g, v)?;
    if !g.item(out).is_finite() {
        return Err(Error::NonFinite("function value at the base point".into()));
    }
    g.backward(out)?;
    let analytic = g.grad(v).map(|s| s.to_vec()).unwrap_or_else(|| vec![0.0; x.len()]);
    let mut worst = 0.0f64;
    for &i in probes {
        let mut plus = x.clone();
        plus.data_mut()[i] += eps;
        let mut minus = x.clone();
        minus.data_mut()[i] -= eps;
        let numeric = (evaluate(&f, plus)? - evaluate(&f, minus)?) / (2.0 * eps);
        let a = analytic[i];
        let err = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
        worst = worst.max(err);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_has_derivative_six_at_three() {
        let x = Tensor::scalar(3.0);
        let err = check_gradient(
            |g, v| {
                let zero = g.constant(Tensor::scalar(0.0));
                g.mse_mean(v, zero)
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-8);
        let mut g = Graph::<f64>::new(Mode::Training);
        let v = g.leaf(x);
        let zero = g.constant(Tensor::scalar(0.0));
        let y = g.mse_mean(v, zero).unwrap();
        g.backward(y).unwrap();
        assert!((g.grad(v).unwrap()[0] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn non_finite_function_is_an_error() {
        let x = Tensor::scalar(0.0);
        let res = check_gradient(|g, v| Ok(g.scale(v, f64::INFINITY)), &x, 1e-5);
        assert!(matches!(res, Err(Error::NonFinite(_))));
    }
}
