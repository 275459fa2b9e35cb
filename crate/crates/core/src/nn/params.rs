use indexmap::IndexMap;

use crate::autodiff::{BatchStats, Graph, Mode, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
struct Entry<T> {
    value: Tensor<T>,
    trainable: bool,
}

/// Named parameters and non-trainable buffers in declaration order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore<T> {
    entries: IndexMap<String, Entry<T>>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            entries: IndexMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>, trainable: bool) -> Result<()> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(Error::Config(format!("parameter {name} declared twice")));
        }
        self.entries.insert(name, Entry { value, trainable });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        self.entries
            .get(name)
            .map(|e| &e.value)
            .ok_or_else(|| Error::Config(format!("unknown parameter {name}")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<T>> {
        self.entries
            .get_mut(name)
            .map(|e| &mut e.value)
            .ok_or_else(|| Error::Config(format!("unknown parameter {name}")))
    }

    pub fn is_trainable(&self, name: &str) -> bool {
        self.entries.get(name).is_some_and(|e| e.trainable)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// (name, value, trainable) in declaration order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>, bool)> {
        self.entries
            .iter()
            .map(|(k, e)| (k.as_str(), &e.value, e.trainable))
    }

    pub fn trainable_names(&self) -> Vec<String> {
        self.entries
            .iter()
            .filter(|(_, e)| e.trainable)
            .map(|(k, _)| k.clone())
            .collect()
    }

    /// Number of trainable scalars.
    pub fn trainable_count(&self) -> usize {
        self.entries
            .values()
            .filter(|e| e.trainable)
            .map(|e| e.value.len())
            .sum()
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            entries: self
                .entries
                .iter()
                .map(|(k, e)| {
                    (
                        k.clone(),
                        Entry {
                            value: e.value.cast(),
                            trainable: e.trainable,
                        },
                    )
                })
                .collect(),
        }
    }

    /// Folds recorded batch statistics into running averages:
    /// running ← momentum·running + (1 − momentum)·batch.
    pub fn apply_bn_updates(&mut self, updates: &[(String, BatchStats<T>)], momentum: T) -> Result<()> {
        for (prefix, stats) in updates {
            let one_minus = T::one() - momentum;
            for (suffix, batch) in [("running_mean", &stats.mean), ("running_var", &stats.var)] {
                let buf = self.get_mut(&format!("{prefix}.{suffix}"))?;
                buf.data_mut()
                    .iter_mut()
                    .zip(batch)
                    .for_each(|(r, &b)| *r = momentum * *r + one_minus * b);
            }
            let tracked = self.get_mut(&format!("{prefix}.tracked"))?;
            tracked.data_mut()[0] += T::one();
        }
        Ok(())
    }
}

/// One forward recording bound to a parameter store. Parameters are entered
/// into the graph lazily on first use.
pub struct Ctx<'a, T: Scalar> {
    pub graph: Graph<T>,
    store: &'a ParamStore<T>,
    bound: IndexMap<String, Var>,
    bn_updates: Vec<(String, BatchStats<T>)>,
}

impl<'a, T: Scalar> Ctx<'a, T> {
    pub fn new(store: &'a ParamStore<T>, mode: Mode) -> Self {
        Self {
            graph: Graph::new(mode),
            store,
            bound: IndexMap::new(),
            bn_updates: Vec::new(),
        }
    }

    pub fn mode(&self) -> Mode {
        self.graph.mode()
    }

    pub fn store(&self) -> &ParamStore<T> {
        self.store
    }

    /// Graph variable for a stored parameter. Trainable parameters are
    /// gradient-tracked leaves in training mode and constants otherwise.
    pub fn param(&mut self, name: &str) -> Result<Var> {
        if let Some(&v) = self.bound.get(name) {
            return Ok(v);
        }
        let value = self.store.get(name)?.clone();
        let v = if self.store.is_trainable(name) && self.mode() == Mode::Training {
            self.graph.leaf(value)
        } else {
            self.graph.constant(value)
        };
        self.bound.insert(name.to_string(), v);
        Ok(v)
    }

    pub fn buffer(&self, name: &str) -> Result<&Tensor<T>> {
        self.store.get(name)
    }

    pub fn record_batch_stats(&mut self, prefix: &str, stats: BatchStats<T>) {
        self.bn_updates.push((prefix.to_string(), stats));
    }

    pub fn batch_stats(&self) -> &[(String, BatchStats<T>)] {
        &self.bn_updates
    }

    pub fn take_batch_stats(&mut self) -> Vec<(String, BatchStats<T>)> {
        std::mem::take(&mut self.bn_updates)
    }

    /// Gradients of every bound trainable parameter after backward; parameters
    /// that did not influence the loss get zeros.
    pub fn gradients(&self) -> IndexMap<String, Tensor<T>> {
        self.bound
            .iter()
            .filter(|(name, _)| self.store.is_trainable(name))
            .map(|(name, &v)| {
                let value = self.graph.value(v);
                let grad = match self.graph.grad(v) {
                    Some(g) => Tensor::new(value.shape(), g.to_vec()).expect("grad matches value"),
                    None => Tensor::zeros(value.shape()),
                };
                (name.clone(), grad)
            })
            .collect()
    }
}
