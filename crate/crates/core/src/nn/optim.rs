use serde::{Deserialize, Serialize};

use super::{real, Params, Real};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-5,
            weight_decay: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction and decoupled weight decay.
///
/// ```text
/// θ ← θ · (1 − lr · wd)
/// m ← β1 m + (1 − β1) g
/// v ← β2 v + (1 − β2) g²
/// θ ← θ − lr · m̂ / (sqrt(v̂) + ε)
/// ```
#[derive(Debug, Clone)]
pub struct AdamW<T> {
    config: AdamConfig,
    step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Real> AdamW<T> {
    pub fn new<P: Params<T>>(params: &P, config: AdamConfig) -> Self {
        let shapes: Vec<usize> = params.params().iter().map(|t| t.data.len()).collect();
        Self {
            config,
            step: 0,
            m: shapes.iter().map(|&n| vec![T::zero(); n]).collect(),
            v: shapes.iter().map(|&n| vec![T::zero(); n]).collect(),
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.config.learning_rate = lr;
    }

    /// Applies one update. Gradients are validated before any parameter is
    /// touched, so a failed step leaves both parameters and moments intact.
    pub fn step<P: Params<T>>(&mut self, params: &mut P, grads: &P) -> Result<()> {
        let grads = grads.params();
        if grads.len() != self.m.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} gradient tensors for {} optimizer slots",
                grads.len(),
                self.m.len()
            )));
        }
        for (i, (g, m)) in grads.iter().zip(&self.m).enumerate() {
            if g.data.len() != m.len() {
                return Err(Error::ShapeMismatch(format!(
                    "gradient tensor {} ({}) has {} entries, expected {}",
                    i,
                    g.name,
                    g.data.len(),
                    m.len()
                )));
            }
            if g.data.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFiniteGradient(i));
            }
        }
        let mut targets = params.params_mut();
        if targets.len() != grads.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} parameter tensors for {} gradients",
                targets.len(),
                grads.len()
            )));
        }

        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let lr = real::<T>(c.learning_rate);
        let decay = real::<T>(1.0 - c.learning_rate * c.weight_decay);
        let b1 = real::<T>(c.beta1);
        let b2 = real::<T>(c.beta2);
        let one = T::one();
        let bc1 = real::<T>(1.0 - c.beta1.powi(t));
        let bc2 = real::<T>(1.0 - c.beta2.powi(t));
        let eps = real::<T>(c.eps);

        for (((theta, g), m), v) in targets
            .iter_mut()
            .zip(&grads)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            if theta.len() != g.data.len() {
                return Err(Error::ShapeMismatch(format!("parameter tensor {}", g.name)));
            }
            for j in 0..theta.len() {
                let gj = g.data[j];
                m[j] = b1 * m[j] + (one - b1) * gj;
                v[j] = b2 * v[j] + (one - b2) * gj * gj;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                theta[j] = theta[j] * decay - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
