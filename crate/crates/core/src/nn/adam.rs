//! Adam with coupled L2 weight decay: the decay term is added to the
//! gradient before the moment updates.

use serde::{Deserialize, Serialize};

use super::NnError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdamState {
    cfg: AdamConfig,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(cfg: AdamConfig, n_params: usize) -> Self {
        Self {
            cfg,
            step: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn config(&self) -> &AdamConfig {
        &self.cfg
    }

    /// Adjusts the learning rate mid-run (for schedules); moments persist.
    pub fn set_lr(&mut self, lr: f64) {
        self.cfg.lr = lr;
    }

    /// One bias-corrected update in place.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<(), NnError> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(NnError::Shape {
                expected: self.m.len(),
                got: params.len().max(grads.len()),
            });
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.cfg.beta1.powi(t);
        let bc2 = 1.0 - self.cfg.beta2.powi(t);
        for i in 0..params.len() {
            let g = grads[i] + self.cfg.weight_decay * params[i];
            self.m[i] = self.cfg.beta1 * self.m[i] + (1.0 - self.cfg.beta1) * g;
            self.v[i] = self.cfg.beta2 * self.v[i] + (1.0 - self.cfg.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.cfg.lr * m_hat / (v_hat.sqrt() + self.cfg.eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(lr: f64, weight_decay: f64) -> AdamConfig {
        AdamConfig {
            lr,
            weight_decay,
            ..AdamConfig::default()
        }
    }

    #[test]
    fn zero_gradient_zero_decay_is_identity() {
        let mut state = AdamState::new(cfg(1e-3, 0.0), 3);
        let mut p = vec![1.0, -2.0, 0.5];
        let orig = p.clone();
        for _ in 0..10 {
            state.step(&mut p, &[0.0; 3]).unwrap();
        }
        assert_eq!(p, orig);
    }

    #[test]
    fn first_step_is_minus_lr() {
        let mut state = AdamState::new(cfg(1e-3, 0.0), 1);
        let mut p = vec![0.0];
        state.step(&mut p, &[1.0]).unwrap();
        assert!((p[0] + 1e-3).abs() < 1e-9);
    }

    #[test]
    fn constant_gradient_approaches_signed_lr_steps() {
        let mut state = AdamState::new(cfg(1e-3, 0.0), 1);
        let mut p = vec![0.0];
        let mut prev = p[0];
        for _ in 0..200 {
            prev = p[0];
            state.step(&mut p, &[-2.5]).unwrap();
        }
        let delta = p[0] - prev;
        assert!((delta - 1e-3).abs() < 1e-6);
    }

    #[test]
    fn decay_contracts_norm_with_zero_gradients() {
        let mut state = AdamState::new(cfg(1e-3, 1e-2), 2);
        let mut p = vec![0.8, -0.5];
        let mut prev_norm = p.iter().map(|x| x * x).sum::<f64>();
        for _ in 0..50 {
            state.step(&mut p, &[0.0; 2]).unwrap();
            let norm = p.iter().map(|x| x * x).sum::<f64>();
            assert!(norm < prev_norm);
            prev_norm = norm;
        }
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut state = AdamState::new(AdamConfig::default(), 2);
        let mut p = vec![0.0; 3];
        assert!(matches!(
            state.step(&mut p, &[0.0; 3]),
            Err(NnError::Shape { expected: 2, .. })
        ));
    }
}
