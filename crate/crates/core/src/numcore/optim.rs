use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;

/// A parameter with its gradient accumulator and Adam moment buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamEntry {
    pub value: Tensor,
    pub grad: Tensor,
    m: Tensor,
    v: Tensor,
}

impl ParamEntry {
    fn new(value: Tensor) -> Self {
        let zeros = Tensor::zeros(value.shape());
        ParamEntry {
            grad: zeros.clone(),
            m: zeros.clone(),
            v: zeros,
            value,
        }
    }
}

/// Named parameters, ordered by name so iteration (and serialization) is
/// deterministic.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    entries: BTreeMap<String, ParamEntry>,
    step: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        self.entries.insert(name.into(), ParamEntry::new(value));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name).map(|e| &e.value)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.get_mut(name).map(|e| &mut e.value)
    }

    pub fn grad(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name).map(|e| &e.grad)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(k, e)| (k.as_str(), &e.value))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.entries.values().map(|e| e.value.len()).sum()
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub(crate) fn add_grad(&mut self, name: &str, g: &Tensor) {
        if let Some(e) = self.entries.get_mut(name) {
            e.grad.add_assign(g);
        }
    }

    pub fn zero_grad(&mut self) {
        for e in self.entries.values_mut() {
            e.grad.data_mut().iter_mut().for_each(|g| *g = 0.0);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update over every parameter, then clears the
/// gradients.
pub fn adam_step(store: &mut ParamStore, cfg: &AdamConfig) {
    store.step += 1;
    let t = store.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for e in store.entries.values_mut() {
        let grads = e.grad.data();
        let (m, v) = (e.m.data_mut(), e.v.data_mut());
        for (i, w) in e.value.data_mut().iter_mut().enumerate() {
            let g = grads[i];
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            *w -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    store.zero_grad();
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut store = ParamStore::new();
        store.insert("w", Tensor::vector(vec![1.0, -2.0, 0.5]));
        let before = store.get("w").unwrap().clone();
        adam_step(&mut store, &AdamConfig::default());
        assert_eq!(store.get("w").unwrap(), &before);
        assert_eq!(store.step(), 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut store = ParamStore::new();
        store.insert("w", Tensor::vector(vec![0.0, 0.0]));
        store.add_grad("w", &Tensor::vector(vec![3.0, -0.01]));
        let cfg = AdamConfig { lr: 0.01, ..AdamConfig::default() };
        adam_step(&mut store, &cfg);
        let w = store.get("w").unwrap().data();
        assert!((w[0] + 0.01).abs() < 0.01 * 0.01);
        assert!((w[1] - 0.01).abs() < 0.01 * 0.01);
        assert!(store.grad("w").unwrap().data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn converges_on_quadratic() {
        // loss = (w - 3)^2, gradient 2 (w - 3)
        let mut store = ParamStore::new();
        store.insert("w", Tensor::scalar(0.0));
        let cfg = AdamConfig { lr: 0.1, ..AdamConfig::default() };
        for _ in 0..200 {
            let w = store.get("w").unwrap().item();
            store.add_grad("w", &Tensor::scalar(2.0 * (w - 3.0)));
            adam_step(&mut store, &cfg);
        }
        let w = store.get("w").unwrap().item();
        assert!((w - 3.0).abs() < 0.1, "w = {w}");
    }
}
