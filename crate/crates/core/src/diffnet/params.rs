//! Named parameter storage with Adam state.

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{invalid, Result};
use crate::scalar::Scalar;

/// Adam hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.5,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Entry<T> {
    name: String,
    value: Tensor<T>,
    m: Vec<T>,
    v: Vec<T>,
}

/// Parameter tensors in insertion order plus per-parameter Adam moments and one
/// shared step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    entries: Vec<Entry<T>>,
    step: u64,
}

impl<T: Scalar> Default for ModelParams<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ModelParams<T> {
    pub fn new() -> Self {
        Self {
            entries: Vec::new(),
            step: 0,
        }
    }

    /// Appends a parameter and returns its position.
    pub fn push(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<usize> {
        let name = name.into();
        if self.entries.iter().any(|e| e.name == name) {
            return Err(invalid(format!("duplicate parameter name {name}")));
        }
        let n = value.numel();
        self.entries.push(Entry {
            name,
            value,
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
        });
        Ok(self.entries.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|e| e.value.numel()).sum()
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.name.as_str())
    }

    pub fn tensor(&self, index: usize) -> &Tensor<T> {
        &self.entries[index].value
    }

    pub fn tensor_mut(&mut self, index: usize) -> &mut Tensor<T> {
        &mut self.entries[index].value
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor<T>> {
        self.entries.iter().find(|e| e.name == name).map(|e| &e.value)
    }

    pub fn by_name_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.entries.iter_mut().find(|e| e.name == name).map(|e| &mut e.value)
    }

    /// First and second Adam moments of one parameter.
    pub fn moments(&self, index: usize) -> (&[T], &[T]) {
        let e = &self.entries[index];
        (&e.m, &e.v)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.entries.iter().map(|e| (e.name.as_str(), &e.value))
    }

    /// Records every parameter as a tape leaf, trainable or frozen.
    pub fn bind(&self, tape: &mut Tape<T>, trainable: bool) -> Vec<Var> {
        self.entries
            .iter()
            .map(|e| tape.leaf(e.value.clone(), trainable))
            .collect()
    }

    /// Gradients of the bound leaves after a backward pass; unreached leaves get zeros.
    pub fn collect_grads(&self, tape: &Tape<T>, vars: &[Var]) -> Vec<Vec<T>> {
        self.entries
            .iter()
            .zip(vars)
            .map(|(e, &v)| match tape.grad(v) {
                Some(g) => g.to_vec(),
                None => vec![T::zero(); e.value.numel()],
            })
            .collect()
    }

    /// One bias-corrected Adam update.
    pub fn adam_step(&mut self, grads: &[Vec<T>], config: &AdamConfig) -> Result<()> {
        if grads.len() != self.entries.len() {
            return Err(invalid(format!(
                "adam step got {} gradients for {} parameters",
                grads.len(),
                self.entries.len()
            )));
        }
        for (e, g) in self.entries.iter().zip(grads) {
            if g.len() != e.value.numel() {
                return Err(invalid(format!(
                    "gradient of {} has {} values, parameter has {}",
                    e.name,
                    g.len(),
                    e.value.numel()
                )));
            }
        }
        self.step += 1;
        let b1 = T::of(config.beta1);
        let b2 = T::of(config.beta2);
        let one = T::one();
        let t = self.step as i32;
        let correction1 = one - b1.powi(t);
        let correction2 = one - b2.powi(t);
        let lr = T::of(config.learning_rate);
        let eps = T::of(config.epsilon);
        for (e, g) in self.entries.iter_mut().zip(grads) {
            let values = e.value.data_mut();
            for i in 0..g.len() {
                e.m[i] = b1 * e.m[i] + (one - b1) * g[i];
                e.v[i] = b2 * e.v[i] + (one - b2) * g[i] * g[i];
                let m_hat = e.m[i] / correction1;
                let v_hat = e.v[i] / correction2;
                values[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }

    /// Flattened copy of every parameter, in order.
    pub fn flatten(&self) -> Vec<T> {
        self.entries.iter().flat_map(|e| e.value.data().iter().copied()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(value: f64) -> ModelParams<f64> {
        let mut p = ModelParams::new();
        p.push("w", Tensor::new(vec![1], vec![value]).unwrap()).unwrap();
        p
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut p = single(0.75);
        for _ in 0..10 {
            p.adam_step(&[vec![0.0]], &AdamConfig::default()).unwrap();
        }
        assert_eq!(p.tensor(0).data(), &[0.75]);
        assert_eq!(p.step_count(), 10);
    }

    #[test]
    fn constant_gradient_limit() {
        let cfg = AdamConfig {
            learning_rate: 1e-3,
            ..AdamConfig::default()
        };
        let g = 0.3;
        let mut p = single(0.0);
        let mut last_update = 0.0;
        for _ in 0..5000 {
            let before = p.tensor(0).data()[0];
            p.adam_step(&[vec![g]], &cfg).unwrap();
            last_update = before - p.tensor(0).data()[0];
        }
        let (m, _) = p.moments(0);
        assert!((m[0] - g).abs() < 1e-12);
        assert!((last_update - cfg.learning_rate).abs() < 1e-6 * cfg.learning_rate.max(1.0));
    }

    #[test]
    fn first_update_has_learning_rate_magnitude() {
        // bias correction makes the very first step exactly lr * sign(g) up to epsilon
        let mut p = single(1.0);
        p.adam_step(&[vec![-4.0]], &AdamConfig::default()).unwrap();
        assert!((p.tensor(0).data()[0] - (1.0 + 1e-4)).abs() < 1e-10);
    }

    #[test]
    fn gradient_count_is_checked() {
        let mut p = single(1.0);
        assert!(p.adam_step(&[], &AdamConfig::default()).is_err());
        assert!(p.adam_step(&[vec![1.0, 2.0]], &AdamConfig::default()).is_err());
        assert!(p.push("w", Tensor::zeros(vec![2])).is_err());
    }
}
