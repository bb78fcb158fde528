use serde::{Deserialize, Serialize};

use super::params::ParameterStore;
use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// L2 penalty folded into the gradient.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return invalid(format!("learning rate {} must be > 0", self.learning_rate));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return invalid(format!("{name} = {b} outside [0, 1)"));
            }
        }
        if self.weight_decay < 0.0 {
            return invalid("weight decay must be >= 0");
        }
        Ok(())
    }
}

/// One bias-corrected Adam update on every parameter holding a gradient,
/// then clears the gradients.
pub fn adam_step(store: &mut ParameterStore, config: &AdamConfig) -> Result<()> {
    config.validate()?;
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        if !store.is_trainable(id) {
            continue;
        }
        let updated = store.adam_update(id, |value, grad, m, v, step| {
            let bc1 = 1.0 - config.beta1.powi(step as i32);
            let bc2 = 1.0 - config.beta2.powi(step as i32);
            let w = value.as_mut_slice();
            let g = grad.as_slice();
            let m = m.as_mut_slice();
            let v = v.as_mut_slice();
            for i in 0..w.len() {
                let gi = g[i] + config.weight_decay * w[i];
                m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * gi;
                v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                w[i] -= config.learning_rate * m_hat / (v_hat.sqrt() + config.epsilon);
            }
        });
        if !updated {
            log::debug!("adam: no gradient for {}, skipped", store.name(id));
        }
    }
    store.zero_grads();
    Ok(())
}
