use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::spatial::GridKind;
use crate::tensor::Tensor;

use super::{conv, elementwise, loss, norm, pool, sampler};

static NEXT_GRAPH_ID: AtomicU64 = AtomicU64::new(1);

/// Whether batch normalization uses batch statistics (and reports them for
/// running-average updates) or the stored running statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Training,
    Inference,
}

/// Handle to a node of one particular [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var {
    graph: u64,
    id: usize,
}

pub(crate) enum Op<T> {
    Leaf,
    Conv2d {
        input: usize,
        kernel: usize,
        bias: usize,
    },
    MaxPool2 {
        input: usize,
        argmax: Vec<u32>,
    },
    Upsample2 {
        input: usize,
    },
    BatchNorm {
        input: usize,
        gamma: usize,
        beta: usize,
        mean: Vec<T>,
        inv_std: Vec<T>,
        batch_stats: bool,
    },
    Relu {
        input: usize,
    },
    Add {
        a: usize,
        b: usize,
    },
    Scale {
        input: usize,
        factor: T,
    },
    WeightedSum {
        terms: Vec<(usize, T)>,
    },
    MeanAll {
        input: usize,
    },
    MseMean {
        a: usize,
        b: usize,
        half: bool,
    },
    Linear {
        input: usize,
        weight: usize,
        bias: usize,
    },
    GlobalAvgPool {
        input: usize,
    },
    Reshape {
        input: usize,
    },
    Concat {
        inputs: Vec<(usize, usize)>,
    },
    Softmax {
        input: usize,
    },
    Cce {
        probs: usize,
        target: Tensor<T>,
    },
    ParamLoss {
        pred: usize,
        target: Vec<T>,
        index: usize,
        wrapped: bool,
    },
    SimilarityGrid {
        params: usize,
        kind: GridKind,
    },
    BilinearSample {
        image: usize,
        grid: usize,
    },
}

pub(crate) struct Node<T> {
    pub(crate) value: Tensor<T>,
    pub(crate) grad: Option<Vec<T>>,
    pub(crate) op: Op<T>,
    pub(crate) requires_grad: bool,
}

/// Recording of one forward evaluation.
pub struct Graph<T: Scalar> {
    id: u64,
    pub(crate) nodes: Vec<Node<T>>,
    mode: Mode,
    differentiated: bool,
}

impl<T: Scalar> Graph<T> {
    pub fn new(mode: Mode) -> Self {
        Self {
            id: NEXT_GRAPH_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            mode,
            differentiated: false,
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Leaf whose gradient is tracked (parameters, probed inputs).
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[self.index(v)].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.value(v).shape()
    }

    /// Scalar value of a one-element node.
    pub fn item(&self, v: Var) -> T {
        self.value(v).data()[0]
    }

    /// Gradient accumulated into a leaf by [`Graph::backward`].
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[self.index(v)].grad.as_deref()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[self.index(v)].requires_grad
    }

    pub(crate) fn index(&self, v: Var) -> usize {
        assert_eq!(v.graph, self.id, "variable belongs to a different graph");
        v.id
    }

    pub(crate) fn node_value(&self, id: usize) -> &Tensor<T> {
        &self.nodes[id].value
    }

    pub(crate) fn node_requires(&self, id: usize) -> bool {
        self.nodes[id].requires_grad
    }

    pub(crate) fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        let id = self.nodes.len();
        self.nodes.push(Node {
            value,
            grad: None,
            op,
            requires_grad,
        });
        Var { graph: self.id, id }
    }

    pub(crate) fn any_requires(&self, ids: &[usize]) -> bool {
        ids.iter().any(|&i| self.nodes[i].requires_grad)
    }

    /// Propagates d(loss)/d(node) from a one-element `loss` back to every
    /// leaf. A graph may be differentiated only once.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let root = self.index(loss);
        if self.differentiated {
            return Err(Error::Graph(
                "backward already ran on this graph; record a new one".into(),
            ));
        }
        if self.nodes[root].value.len() != 1 {
            return Err(Error::Graph(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.nodes[root].value.shape()
            )));
        }
        self.differentiated = true;
        if !self.nodes[root].requires_grad {
            return Ok(());
        }
        self.nodes[root].grad = Some(vec![T::one()]);
        for id in (0..=root).rev() {
            if matches!(self.nodes[id].op, Op::Leaf) {
                continue;
            }
            let Some(grad) = self.nodes[id].grad.take() else {
                continue;
            };
            let contributions = self.backward_node(id, &grad)?;
            for (parent, g) in contributions {
                let node = &mut self.nodes[parent];
                match &mut node.grad {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, &b)| *a += b),
                    slot @ None => *slot = Some(g),
                }
            }
        }
        Ok(())
    }

    fn backward_node(&self, id: usize, grad: &[T]) -> Result<Vec<(usize, Vec<T>)>> {
        let node = &self.nodes[id];
        let out = &node.value;
        let mut result = Vec::new();
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d {
                input,
                kernel,
                bias,
            } => conv::backward(self, *input, *kernel, *bias, grad, &mut result),
            Op::MaxPool2 { input, argmax } => {
                pool::maxpool_backward(self, *input, argmax, grad, &mut result)
            }
            Op::Upsample2 { input } => pool::upsample_backward(self, *input, grad, &mut result),
            Op::BatchNorm {
                input,
                gamma,
                beta,
                mean,
                inv_std,
                batch_stats,
            } => norm::backward(
                self,
                [*input, *gamma, *beta],
                mean,
                inv_std,
                *batch_stats,
                grad,
                &mut result,
            ),
            Op::Relu { input } => elementwise::relu_backward(self, *input, grad, &mut result),
            Op::Add { a, b } => {
                for p in [*a, *b] {
                    if self.node_requires(p) {
                        result.push((p, grad.to_vec()));
                    }
                }
            }
            Op::Scale { input, factor } => {
                if self.node_requires(*input) {
                    result.push((*input, grad.iter().map(|&g| g * *factor).collect()));
                }
            }
            Op::WeightedSum { terms } => {
                for &(p, w) in terms {
                    if self.node_requires(p) {
                        result.push((p, vec![grad[0] * w]));
                    }
                }
            }
            Op::MeanAll { input } => {
                if self.node_requires(*input) {
                    let n = self.node_value(*input).len();
                    let g = grad[0] / T::from_usize_c(n);
                    result.push((*input, vec![g; n]));
                }
            }
            Op::MseMean { a, b, half } => {
                elementwise::mse_backward(self, *a, *b, *half, grad[0], &mut result)
            }
            Op::Linear {
                input,
                weight,
                bias,
            } => elementwise::linear_backward(self, *input, *weight, *bias, grad, &mut result),
            Op::GlobalAvgPool { input } => {
                pool::global_avg_backward(self, *input, grad, &mut result)
            }
            Op::Reshape { input } => {
                if self.node_requires(*input) {
                    result.push((*input, grad.to_vec()));
                }
            }
            Op::Concat { inputs } => {
                elementwise::concat_backward(self, inputs, out.shape(), grad, &mut result)
            }
            Op::Softmax { input } => {
                loss::softmax_backward(self, *input, out, grad, &mut result)?
            }
            Op::Cce { probs, target } => {
                loss::cce_backward(self, *probs, target, grad[0], &mut result)
            }
            Op::ParamLoss {
                pred,
                target,
                index,
                wrapped,
            } => loss::param_loss_backward(
                self,
                *pred,
                target,
                *index,
                *wrapped,
                grad[0],
                &mut result,
            ),
            Op::SimilarityGrid { params, kind } => {
                sampler::grid_backward(self, *params, *kind, out.shape(), grad, &mut result)
            }
            Op::BilinearSample { image, grid } => {
                sampler::sample_backward(self, *image, *grid, grad, &mut result)
            }
        }
        Ok(result)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backward_twice_is_an_error() {
        let mut g = Graph::<f64>::new(Mode::Training);
        let x = g.leaf(Tensor::scalar(3.0));
        let y = g.mse_mean(x, x).unwrap();
        g.backward(y).unwrap();
        assert!(matches!(g.backward(y), Err(Error::Graph(_))));
    }

    #[test]
    fn backward_requires_scalar_root() {
        let mut g = Graph::<f64>::new(Mode::Training);
        let x = g.leaf(Tensor::zeros(&[2]));
        let y = g.relu(x);
        assert!(g.backward(y).is_err());
    }

    #[test]
    #[should_panic(expected = "different graph")]
    fn foreign_variables_are_rejected() {
        let mut a = Graph::<f64>::new(Mode::Training);
        let b = Graph::<f64>::new(Mode::Training);
        let x = a.leaf(Tensor::scalar(1.0));
        let _ = b.value(x);
    }

    #[test]
    fn shared_subexpressions_accumulate() {
        // y = 2x + 3x at x = 1 has dy/dx = 5
        let mut g = Graph::<f64>::new(Mode::Training);
        let x = g.leaf(Tensor::scalar(1.0));
        let a = g.scale(x, 2.0);
        let b = g.scale(x, 3.0);
        let y = g.add(a, b).unwrap();
        g.backward(y).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[5.0]);
    }
}
