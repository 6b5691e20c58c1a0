//! Adam optimizer with bias-corrected moments.

use std::collections::BTreeMap;

use crate::tensor::ParamSet;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates for one parameter.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Moments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

/// One Adam update at step `t ≥ 1`, in place on `param` and `state`.
pub fn adam_step(param: &mut [f64], grad: &[f64], state: &mut Moments, cfg: &AdamConfig, t: u64) {
    assert!(t >= 1, "adam step index starts at 1");
    if state.m.len() != param.len() {
        state.m = vec![0.0; param.len()];
        state.v = vec![0.0; param.len()];
    }
    let bc1 = 1.0 - cfg.beta1.powi(t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(t as i32);
    for i in 0..param.len() {
        let g = grad[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        param[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
}

/// Adam state over a whole [`ParamSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    moments: BTreeMap<String, Moments>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Apply the accumulated `grad` of every parameter, then zero the grads.
    pub fn step(&mut self, params: &mut ParamSet) {
        self.step += 1;
        for (name, p) in params.iter_mut() {
            let state = self.moments.entry(name.to_string()).or_default();
            adam_step(p.value.data_mut(), p.grad.data(), state, &self.config, self.step);
        }
        params.zero_grad();
    }
}
