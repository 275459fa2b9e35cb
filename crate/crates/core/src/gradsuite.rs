//! Numerical verification of every differentiable operation used in
//! training, in double precision.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{check_gradient, Graph, Var, PARAM_COUNT};
use crate::error::Result;
use crate::spatial::{image_losses_graph, matrix_losses_graph, GridKind, RigidParams};
use crate::tensor::Tensor;

/// Finite-difference step.
pub const SUITE_EPS: f64 = 1e-5;
/// Pass threshold on the maximum relative error.
pub const SUITE_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradReport {
    pub name: String,
    pub max_rel_error: f64,
}

impl GradReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < SUITE_TOLERANCE
    }
}

fn random(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(lo..hi)).collect()).expect("shape matches")
}

/// Scalar probe of a tensor output: ½·mean((y − r)²) for a fixed random r.
fn project(g: &mut Graph<f64>, y: Var, r: &Tensor<f64>) -> Result<Var> {
    let r = g.constant(r.clone());
    g.half_mse(y, r)
}

fn random_params(rng: &mut ChaCha8Rng, n: usize) -> Vec<RigidParams<f64>> {
    (0..n)
        .map(|_| {
            RigidParams::new(
                rng.gen_range(-0.25..0.25),
                rng.gen_range(-0.25..0.25),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(0.5..1.0),
            )
        })
        .collect()
}

fn params_tensor(p: &[RigidParams<f64>]) -> Tensor<f64> {
    Tensor::new(&[p.len(), PARAM_COUNT], p.iter().flat_map(|v| v.to_array()).collect()).expect("N×4")
}

/// Runs every check and returns one report per case.
pub fn gradient_suite(seed: u64) -> Result<Vec<GradReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut push = |name: &str, err: f64| {
        out.push(GradReport {
            name: name.to_string(),
            max_rel_error: err,
        })
    };

    // Convolution, 3×3 and 1×1, with respect to input, kernel and bias.
    for k in [3usize, 1] {
        let x = random(&mut rng, &[2, 3, 5, 6], -1.0, 1.0);
        let w = random(&mut rng, &[4, 3, k, k], -1.0, 1.0);
        let b = random(&mut rng, &[4], -1.0, 1.0);
        let r = random(&mut rng, &[2, 4, 5, 6], -1.0, 1.0);
        let e = check_gradient(
            |g, v| {
                let (w, b) = (g.constant(w.clone()), g.constant(b.clone()));
                let y = g.conv2d(v, w, b)?;
                project(g, y, &r)
            },
            &x,
            SUITE_EPS,
        )?;
        push(&format!("conv2d {k}x{k} input"), e);
        let e = check_gradient(
            |g, v| {
                let (x, b) = (g.constant(x.clone()), g.constant(b.clone()));
                let y = g.conv2d(x, v, b)?;
                project(g, y, &r)
            },
            &w,
            SUITE_EPS,
        )?;
        push(&format!("conv2d {k}x{k} kernel"), e);
        let e = check_gradient(
            |g, v| {
                let (x, w) = (g.constant(x.clone()), g.constant(w.clone()));
                let y = g.conv2d(x, w, v)?;
                project(g, y, &r)
            },
            &b,
            SUITE_EPS,
        )?;
        push(&format!("conv2d {k}x{k} bias"), e);
    }

    // Batch normalization in training mode.
    {
        let x = random(&mut rng, &[3, 2, 3, 4], -2.0, 2.0);
        let gamma = random(&mut rng, &[2], 0.5, 1.5);
        let beta = random(&mut rng, &[2], -0.5, 0.5);
        let r = random(&mut rng, &[3, 2, 3, 4], -1.0, 1.0);
        let cases: [(&str, &Tensor<f64>, usize); 3] =
            [("batchnorm input", &x, 0), ("batchnorm gamma", &gamma, 1), ("batchnorm beta", &beta, 2)];
        for (name, at, which) in cases {
            let e = check_gradient(
                |g, v| {
                    let mut args = [x.clone(), gamma.clone(), beta.clone()].map(|t| g.constant(t));
                    args[which] = v;
                    let (y, _) = g.batchnorm_train(args[0], args[1], args[2])?;
                    project(g, y, &r)
                },
                at,
                SUITE_EPS,
            )?;
            push(name, e);
        }
    }

    // Pooling, upsampling, activation and dense layers.
    {
        let x = random(&mut rng, &[2, 3, 6, 4], -1.0, 1.0);
        let r = random(&mut rng, &[2, 3, 3, 2], -1.0, 1.0);
        let e = check_gradient(
            |g, v| {
                let y = g.maxpool2(v)?;
                project(g, y, &r)
            },
            &x,
            SUITE_EPS,
        )?;
        push("maxpool2", e);
        let small = random(&mut rng, &[2, 3, 3, 2], -1.0, 1.0);
        let e = check_gradient(
            |g, v| {
                let y = g.upsample2(v)?;
                project(g, y, &x)
            },
            &small,
            SUITE_EPS,
        )?;
        push("upsample2", e);
        let e = check_gradient(
            |g, v| {
                let y = g.relu(v);
                project(g, y, &x)
            },
            &x,
            SUITE_EPS,
        )?;
        push("relu", e);
        let e = check_gradient(
            |g, v| {
                let y = g.global_avg_pool(v)?;
                let r = Tensor::new(&[2, 3], vec![0.3, -0.2, 0.5, 0.1, 0.9, -0.4])?;
                project(g, y, &r)
            },
            &x,
            SUITE_EPS,
        )?;
        push("global average pool", e);
        let inp = random(&mut rng, &[3, 5], -1.0, 1.0);
        let w = random(&mut rng, &[4, 5], -1.0, 1.0);
        let b = random(&mut rng, &[4], -1.0, 1.0);
        let r = random(&mut rng, &[3, 4], -1.0, 1.0);
        let e = check_gradient(
            |g, v| {
                let (i, b) = (g.constant(inp.clone()), g.constant(b.clone()));
                let y = g.linear(i, v, b)?;
                project(g, y, &r)
            },
            &w,
            SUITE_EPS,
        )?;
        push("linear weight", e);
    }

    // Softmax followed by categorical cross-entropy.
    {
        let logits = random(&mut rng, &[2, 4, 3, 3], -2.0, 2.0);
        let mut target = vec![0.0; 2 * 4 * 9];
        for s in 0..2 {
            for p in 0..9 {
                let c = rng.gen_range(0..4);
                target[(s * 4 + c) * 9 + p] = 1.0;
            }
        }
        let target = Tensor::new(&[2, 4, 3, 3], target)?;
        let e = check_gradient(
            |g, v| {
                let p = g.softmax_channels(v)?;
                g.cce(p, &target)
            },
            &logits,
            SUITE_EPS,
        )?;
        push("softmax + cross-entropy", e);
    }

    // compose → grid → bilinear sample, for every partial transform.
    let image = random(&mut rng, &[2, 2, 7, 8], 0.0, 1.0);
    let gt = random_params(&mut rng, 2);
    for kind in GridKind::ALL {
        let pred = params_tensor(&random_params(&mut rng, 2));
        let r = random(&mut rng, &[2, 2, 6, 5], -1.0, 1.0);
        let e = check_gradient(
            |g, v| {
                let img = g.constant(image.clone());
                let grid = g.similarity_grid(v, kind, 6, 5)?;
                let y = g.bilinear_sample(img, grid)?;
                project(g, y, &r)
            },
            &pred,
            SUITE_EPS,
        )?;
        push(&format!("similarity grid + sampler ({kind:?}) params"), e);
        let e = check_gradient(
            |g, v| {
                let p = g.constant(pred.clone());
                let grid = g.similarity_grid(p, kind, 6, 5)?;
                let y = g.bilinear_sample(v, grid)?;
                project(g, y, &r)
            },
            &image,
            SUITE_EPS,
        )?;
        push(&format!("similarity grid + sampler ({kind:?}) image"), e);
    }

    // Parameter and image losses against the prediction.
    let pred = params_tensor(&random_params(&mut rng, 2));
    for (i, name) in ["t_x", "t_y", "theta", "s"].iter().enumerate() {
        let e = check_gradient(|g, v| Ok(matrix_losses_graph(g, v, &gt)?[i]), &pred, SUITE_EPS)?;
        push(&format!("matrix loss {name}"), e);
    }
    let single = Tensor::new(&[2, 1, 7, 8], image.data()[..2 * 56].to_vec())?;
    for (i, name) in ["T", "RT", "SRT"].iter().enumerate() {
        let e = check_gradient(
            |g, v| {
                let img = g.constant(single.clone());
                Ok(image_losses_graph(g, img, v, &gt)?.0[i])
            },
            &pred,
            SUITE_EPS,
        )?;
        push(&format!("image loss {name}"), e);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes() {
        for r in gradient_suite(7).unwrap() {
            assert!(r.passed(), "{}: {}", r.name, r.max_rel_error);
        }
    }
}
