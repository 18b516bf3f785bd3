use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Adam hyper-parameters. Defaults are `beta1 = 0.9`, `beta2 = 0.999`, `epsilon = 1e-8`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub base_lr: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            base_lr: 1e-3,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::InvalidConfig(format!(
                "adam betas must lie in [0, 1): beta1 = {}, beta2 = {}",
                self.beta1, self.beta2
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidConfig(format!("adam epsilon must be > 0, got {}", self.epsilon)));
        }
        if !(self.base_lr > 0.0) {
            return Err(Error::InvalidConfig(format!("adam base_lr must be > 0, got {}", self.base_lr)));
        }
        Ok(())
    }
}

/// First/second moment accumulators for one parameter segment.
///
/// Only the raw moments are stored; bias-corrected values are derived.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }

    /// Bias-corrected first moment `m / (1 - beta1^t)`; zeros before the first step.
    pub fn m_hat(&self, cfg: &AdamConfig) -> Vec<f64> {
        if self.t == 0 {
            return vec![0.0; self.m.len()];
        }
        let c = 1.0 - cfg.beta1.powf(self.t as f64);
        self.m.iter().map(|m| m / c).collect()
    }

    /// Bias-corrected second moment `v / (1 - beta2^t)`.
    pub fn v_hat(&self, cfg: &AdamConfig) -> Vec<f64> {
        if self.t == 0 {
            return vec![0.0; self.v.len()];
        }
        let c = 1.0 - cfg.beta2.powf(self.t as f64);
        self.v.iter().map(|v| v / c).collect()
    }

    /// One Adam update of `params` with learning rate `lr`.
    ///
    /// Gradients are checked for finiteness before any state changes.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], cfg: &AdamConfig, lr: f64) -> Result<()> {
        if params.len() != self.m.len() {
            return Err(Error::LengthMismatch {
                what: "adam parameters",
                expected: self.m.len(),
                actual: params.len(),
            });
        }
        if grads.len() != params.len() {
            return Err(Error::LengthMismatch {
                what: "adam gradients",
                expected: params.len(),
                actual: grads.len(),
            });
        }
        if let Some((index, &value)) = grads.iter().enumerate().find(|(_, g)| !g.is_finite()) {
            return Err(Error::NonFiniteGradient { index, value });
        }
        self.t += 1;
        let (b1, b2) = (cfg.beta1, cfg.beta2);
        let c1 = 1.0 - b1.powf(self.t as f64);
        let c2 = 1.0 - b2.powf(self.t as f64);
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
        Ok(())
    }
}

/// Adam update with learning rate `lr_scale * cfg.base_lr`.
pub fn adam_step(
    state: &mut AdamState,
    params: &mut [f64],
    grads: &[f64],
    cfg: &AdamConfig,
    lr_scale: f64,
) -> Result<()> {
    if !(lr_scale > 0.0) {
        return Err(Error::InvalidConfig(format!("lr_scale must be > 0, got {lr_scale}")));
    }
    state.step(params, grads, cfg, lr_scale * cfg.base_lr)
}

/// Plain gradient descent, `params -= lr * grads`.
pub fn sgd_step(params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
    if grads.len() != params.len() {
        return Err(Error::LengthMismatch {
            what: "sgd gradients",
            expected: params.len(),
            actual: grads.len(),
        });
    }
    if let Some((index, &value)) = grads.iter().enumerate().find(|(_, g)| !g.is_finite()) {
        return Err(Error::NonFiniteGradient { index, value });
    }
    params.iter_mut().zip(grads).for_each(|(p, g)| *p -= lr * g);
    Ok(())
}

/// Element-wise `grads * factor`.
pub fn scale_gradients(grads: &[f64], factor: f64) -> Vec<f64> {
    grads.iter().map(|g| g * factor).collect()
}
