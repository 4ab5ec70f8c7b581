use serde::{Deserialize, Serialize};

use super::ModelParams;
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: ModelParams,
    pub v: ModelParams,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &ModelParams, config: AdamConfig) -> Self {
        Self { config, m: params.zeros_like(), v: params.zeros_like(), step: 0 }
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn step(&mut self, params: &mut ModelParams, grads: &ModelParams, lr: f64) {
        self.step += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - math::powi(beta1, self.step as i32);
        let bc2 = 1.0 - math::powi(beta2, self.step as i32);
        let gs = grads.tensors();
        let ms = self.m.tensors_mut();
        let vs = self.v.tensors_mut();
        for (((p, g), m), v) in params.tensors_mut().into_iter().zip(gs).zip(ms).zip(vs) {
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m.data[i] = beta1 * m.data[i] + (1.0 - beta1) * gi;
                v.data[i] = beta2 * v.data[i] + (1.0 - beta2) * gi * gi;
                let mh = m.data[i] / bc1;
                let vh = v.data[i] / bc2;
                p.data[i] -= lr * mh / (math::sqrt(vh) + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{init_params, NetworkConfig};

    #[test]
    fn zero_gradient_leaves_params() {
        let cfg = NetworkConfig::tiny();
        let mut p = init_params(&cfg, 0);
        let before = p.clone();
        let mut st = AdamState::new(&p, AdamConfig::default());
        let zero = p.zeros_like();
        st.step(&mut p, &zero, 1e-3);
        assert_eq!(p, before);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn unit_gradient_moves_by_lr() {
        let cfg = NetworkConfig::tiny();
        let mut p = init_params(&cfg, 0);
        let before = p.head_coord_bias.data[0];
        let mut g = p.zeros_like();
        g.head_coord_bias.data[0] = 1.0;
        let mut st = AdamState::new(&p, AdamConfig::default());
        st.step(&mut p, &g, 1e-3);
        // m̂ = 1, v̂ = 1, so the step is lr / (1 + eps)
        let moved = before - p.head_coord_bias.data[0];
        assert!((moved - 1e-3 / (1.0 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn identical_calls_agree() {
        let cfg = NetworkConfig::tiny();
        let p0 = init_params(&cfg, 1);
        let mut g = init_params(&cfg, 2);
        g.add_scaled(&p0, -1.0);
        let (mut a, mut b) = (p0.clone(), p0.clone());
        let mut sa = AdamState::new(&p0, AdamConfig::default());
        let mut sb = sa.clone();
        sa.step(&mut a, &g, 1e-3);
        sb.step(&mut b, &g, 1e-3);
        assert_eq!(a, b);
        assert_eq!(sa, sb);
    }
}
