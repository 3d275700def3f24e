//! Named parameter store with per-parameter Adam/Nadam optimizer state.

use super::tensor::Tensor;
use super::NnError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Algorithm {
    Adam,
    /// Adam with Nesterov momentum.
    Nadam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimConfig {
    pub algorithm: Algorithm,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl OptimConfig {
    pub fn nadam_default() -> Self {
        Self { algorithm: Algorithm::Nadam, learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-7 }
    }

    pub fn adam_default() -> Self {
        Self { algorithm: Algorithm::Adam, learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-7 }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if !(self.learning_rate > 0.0) {
            return Err(NnError::BadOptimConfig(format!("learning_rate = {}", self.learning_rate)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0 < b && b < 1.0) {
                return Err(NnError::BadOptimConfig(format!("{name} = {b}")));
            }
        }
        Ok(())
    }
}

/// Named, shaped parameter tensors with optimizer moments and the rng seed
/// the parameters were initialised from. Iteration order is insertion
/// order, which keeps training bit-deterministic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightStore {
    names: Vec<String>,
    params: Vec<Tensor>,
    moment1: Vec<Tensor>,
    moment2: Vec<Tensor>,
    /// Optimizer step count.
    pub step: u64,
    pub seed: u64,
}

impl WeightStore {
    pub fn new(seed: u64) -> Self {
        Self { names: Vec::new(), params: Vec::new(), moment1: Vec::new(), moment2: Vec::new(), step: 0, seed }
    }

    pub fn insert(&mut self, name: &str, tensor: Tensor) -> Result<(), NnError> {
        if self.names.iter().any(|n| n == name) {
            return Err(NnError::DuplicateParameter(name.into()));
        }
        self.moment1.push(Tensor::zeros(&tensor.shape));
        self.moment2.push(Tensor::zeros(&tensor.shape));
        self.names.push(name.into());
        self.params.push(tensor);
        Ok(())
    }

    /// Glorot-uniform initialised matrix (fan_in x fan_out).
    pub fn insert_glorot(
        &mut self,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        rng: &mut ChaCha20Rng,
    ) -> Result<(), NnError> {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out).map(|_| rng.gen_range(-limit..limit)).collect();
        self.insert(name, Tensor::new(vec![fan_in, fan_out], data))
    }

    pub fn get(&self, name: &str) -> Result<&Tensor, NnError> {
        self.position(name).map(|i| &self.params[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor, NnError> {
        let i = self.position(name)?;
        Ok(&mut self.params[i])
    }

    fn position(&self, name: &str) -> Result<usize, NnError> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| NnError::UnknownParameter(name.into()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(|s| s.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(|s| s.as_str()).zip(self.params.iter())
    }

    pub fn n_params(&self) -> usize {
        self.params.iter().map(|p| p.len()).sum()
    }

    /// Optimizer moments for persistence.
    pub fn moments(&self, name: &str) -> Result<(&Tensor, &Tensor), NnError> {
        let i = self.position(name)?;
        Ok((&self.moment1[i], &self.moment2[i]))
    }

    pub fn set_moments(&mut self, name: &str, m1: Tensor, m2: Tensor) -> Result<(), NnError> {
        let i = self.position(name)?;
        self.moment1[i] = m1;
        self.moment2[i] = m2;
        Ok(())
    }
}

/// One optimizer step over the named gradients. Parameters without a
/// gradient entry are left untouched.
pub fn optimizer_step(
    store: &mut WeightStore,
    grads: &[(String, Tensor)],
    config: &OptimConfig,
) -> Result<(), NnError> {
    config.validate()?;
    store.step += 1;
    let t = store.step as i32;
    let (b1, b2) = (config.beta1, config.beta2);
    let bc1 = 1.0 - b1.powi(t);
    let bc2 = 1.0 - b2.powi(t);
    for (name, grad) in grads {
        let i = store.position(name)?;
        if grad.shape != store.params[i].shape {
            return Err(NnError::ShapeMismatch {
                op: "optimizer_step",
                details: format!("{name}: param {:?} vs grad {:?}", store.params[i].shape, grad.shape),
            });
        }
        for k in 0..grad.data.len() {
            let g = grad.data[k];
            let m = b1 * store.moment1[i].data[k] + (1.0 - b1) * g;
            let v = b2 * store.moment2[i].data[k] + (1.0 - b2) * g * g;
            store.moment1[i].data[k] = m;
            store.moment2[i].data[k] = v;
            let v_hat = v / bc2;
            let update = match config.algorithm {
                Algorithm::Adam => {
                    let m_hat = m / bc1;
                    m_hat / (v_hat.sqrt() + config.eps)
                }
                Algorithm::Nadam => {
                    // Nesterov lookahead: blend the bias-corrected momentum
                    // with the bias-corrected raw gradient
                    let m_hat = m / (1.0 - b1.powi(t + 1));
                    (b1 * m_hat + (1.0 - b1) * g / bc1) / (v_hat.sqrt() + config.eps)
                }
            };
            store.params[i].data[k] -= config.learning_rate * update;
        }
    }
    Ok(())
}

/// Deterministic sub-seed for a named component of a run.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ master.rotate_left(17);
    for b in label.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x1000_0000_01b3);
    }
    h
}

/// ChaCha stream seeded for a named component.
pub fn seeded_rng(master: u64, label: &str) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(derive_seed(master, label))
}
