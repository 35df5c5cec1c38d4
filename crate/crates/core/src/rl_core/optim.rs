use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Adaptive moment estimation with bias correction.
///
/// Each coordinate's update is additionally capped at the learning rate, so
/// no single step moves a parameter further than `learning_rate` even when a
/// burst of large gradients follows a long quiet stretch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    first: Vec<f64>,
    second: Vec<f64>,
}

impl Adam {
    pub fn new(num_params: usize, learning_rate: f64) -> Self {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first: vec![0.0; num_params],
            second: vec![0.0; num_params],
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != self.first.len() {
            return Err(Error::Shape(format!(
                "optimizer tracks {} parameters, got {} params and {} gradients",
                self.first.len(),
                params.len(),
                grads.len()
            )));
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("gradient entry {i} = {} at optimizer step {}", grads[i], self.step + 1),
            });
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let lr = self.learning_rate;
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.first).zip(&mut self.second) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            let delta = (lr * m_hat / (v_hat.sqrt() + self.epsilon)).clamp(-lr, lr);
            *p -= delta;
        }
        Ok(())
    }
}

/// θ' ← τθ + (1−τ)θ'.
pub fn soft_update(target: &mut [f64], online: &[f64], tau: f64) {
    debug_assert_eq!(target.len(), online.len());
    for (t, o) in target.iter_mut().zip(online) {
        *t = tau * o + (1.0 - tau) * *t;
    }
}
