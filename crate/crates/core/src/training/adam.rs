use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::autodiff::ParamStore;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Default)]
struct Moments {
    first: Vec<f64>,
    second: Vec<f64>,
    step: u64,
}

/// Adam with bias correction.
///
/// Moments and step counts are kept per parameter, so a parameter that is
/// only updated in some steps (e.g. outside the unimodal group) gets its own
/// bias correction.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    moments: BTreeMap<String, Moments>,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            moments: BTreeMap::new(),
        }
    }

    pub fn step_count(&self, name: &str) -> u64 {
        self.moments.get(name).map_or(0, |m| m.step)
    }

    /// Updates every parameter whose name passes `select`, using the
    /// gradients currently stored on the parameters.
    pub fn step(&mut self, params: &ParamStore, select: impl Fn(&str) -> bool) {
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        for (name, value) in params.iter().filter(|(n, _)| select(n)) {
            let n = value.numel();
            let state = self.moments.entry(name.to_string()).or_insert_with(|| Moments {
                first: vec![0.0; n],
                second: vec![0.0; n],
                step: 0,
            });
            state.step += 1;
            let t = state.step as i32;
            let c1 = 1.0 - beta1.powi(t);
            let c2 = 1.0 - beta2.powi(t);
            let grad = value.grad();
            let mut data = value.data_mut();
            for (((theta, &g), m), v) in data
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(state.first.iter_mut())
                .zip(state.second.iter_mut())
            {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *theta -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}
