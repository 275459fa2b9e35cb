use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::params::ParamStore;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Decoupled decay: p ← p − lr·weight_decay·p before the moment update.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 1e-4,
        }
    }
}

/// Adam with bias-corrected moments and decoupled weight decay.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub config: AdamConfig,
    step: u64,
    first: IndexMap<String, Vec<T>>,
    second: IndexMap<String, Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            first: IndexMap::new(),
            second: IndexMap::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update to every parameter named in `grads`, in the order
    /// the store declares them. Nothing is modified when any gradient is
    /// non-finite.
    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &IndexMap<String, Tensor<T>>, lr: f64) -> Result<()> {
        for (name, g) in grads {
            if !g.all_finite() {
                return Err(Error::NonFinite(format!("gradient of parameter {name}")));
            }
            if params.get(name)?.shape() != g.shape() {
                return Err(Error::Shape(format!("gradient shape mismatch for {name}")));
            }
        }
        self.step += 1;
        let c = &self.config;
        let (b1, b2) = (T::from_f64c(c.beta1), T::from_f64c(c.beta2));
        let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);
        let bias1 = T::from_f64c(1.0 - c.beta1.powi(self.step as i32));
        let bias2 = T::from_f64c(1.0 - c.beta2.powi(self.step as i32));
        let lr_t = T::from_f64c(lr);
        let decay = T::from_f64c(lr * c.weight_decay);
        let eps = T::from_f64c(c.epsilon);
        let names: Vec<String> = params
            .trainable_names()
            .into_iter()
            .filter(|n| grads.contains_key(n))
            .collect();
        for name in names {
            let g = grads[&name].data();
            let p = params.get_mut(&name)?.data_mut();
            let m = self
                .first
                .entry(name.clone())
                .or_insert_with(|| vec![T::zero(); g.len()]);
            let v = self
                .second
                .entry(name.clone())
                .or_insert_with(|| vec![T::zero(); g.len()]);
            for i in 0..g.len() {
                p[i] -= decay * p[i];
                m[i] = b1 * m[i] + one_b1 * g[i];
                v[i] = b2 * v[i] + one_b2 * g[i] * g[i];
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                p[i] -= lr_t * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }

    /// Moment buffers as a store (`m.<name>`, `v.<name>`) for checkpointing.
    pub fn state_store(&self) -> Result<ParamStore<T>> {
        let mut s = ParamStore::new();
        for (prefix, map) in [("m", &self.first), ("v", &self.second)] {
            for (name, buf) in map {
                s.insert(format!("{prefix}.{name}"), Tensor::new(&[buf.len()], buf.clone())?, false)?;
            }
        }
        Ok(s)
    }

    pub fn from_state_store(config: AdamConfig, step: u64, store: &ParamStore<T>) -> Self {
        let mut first = IndexMap::new();
        let mut second = IndexMap::new();
        for (name, value, _) in store.iter() {
            if let Some(rest) = name.strip_prefix("m.") {
                first.insert(rest.to_string(), value.data().to_vec());
            } else if let Some(rest) = name.strip_prefix("v.") {
                second.insert(rest.to_string(), value.data().to_vec());
            }
        }
        Self {
            config,
            step,
            first,
            second,
        }
    }
}
