//! AdamW with decoupled weight decay, and the learning-rate schedules.

use serde::{Deserialize, Serialize};

use crate::config::Schedule;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamW {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.05 }
    }
}

/// Moment estimates for one group of parameter tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub hyper: AdamW,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(lens: &[usize], hyper: AdamW) -> Self {
        Self { hyper, m: lens.iter().map(|&n| vec![0.0; n]).collect(), v: lens.iter().map(|&n| vec![0.0; n]).collect(), step: 0 }
    }

    /// One update. Gradients are validated before any parameter changes.
    pub fn step(&mut self, params: Vec<&mut [f64]>, grads: &[Vec<f64>], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::shape("adamw", format!("{} tensors, {} gradients, state for {}", params.len(), grads.len(), self.m.len())));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.m) {
            if p.len() != m.len() || g.len() != m.len() {
                return Err(Error::shape("adamw", "tensor length changed"));
            }
        }
        if grads.iter().flatten().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("adamw gradient"));
        }
        self.step += 1;
        let h = self.hyper;
        let t = self.step as i32;
        let c1 = 1.0 - h.beta1.powi(t);
        let c2 = 1.0 - h.beta2.powi(t);
        let decay = 1.0 - lr * h.weight_decay;
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.len() {
                m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * g[i];
                v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * g[i] * g[i];
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                p[i] = p[i] * decay - lr * mh / (vh.sqrt() + h.eps);
            }
        }
        Ok(())
    }
}

/// Learning rate at step `t` of `total`; cosine anneals to zero.
pub fn scheduled_lr(schedule: Schedule, base: f64, t: usize, total: usize) -> f64 {
    match schedule {
        Schedule::Constant => base,
        Schedule::Cosine if total == 0 => base,
        Schedule::Cosine => base * 0.5 * (1.0 + (std::f64::consts::PI * t as f64 / total as f64).cos()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_pure_decay() {
        let mut s = OptimizerState::new(&[3], AdamW { weight_decay: 0.05, ..AdamW::default() });
        let mut p = vec![1.0, -2.0, 0.5];
        let orig = p.clone();
        s.step(vec![&mut p], &[vec![0.0; 3]], 1e-3).unwrap();
        for (a, b) in p.iter().zip(&orig) {
            assert_eq!(*a, b * (1.0 - 1e-3 * 0.05));
        }
    }

    #[test]
    fn first_step_is_sign() {
        let mut s = OptimizerState::new(&[3], AdamW { weight_decay: 0.0, ..AdamW::default() });
        let mut p = vec![0.0; 3];
        s.step(vec![&mut p], &[vec![3.0, -0.5, 1e-3]], 0.01).unwrap();
        for (a, sign) in p.iter().zip([-1.0, 1.0, -1.0]) {
            assert!((a - sign * 0.01).abs() <= 1e-6, "{a}");
        }
    }

    #[test]
    fn non_finite_gradient_leaves_params() {
        let mut s = OptimizerState::new(&[2], AdamW::default());
        let mut p = vec![1.0, 2.0];
        assert!(s.step(vec![&mut p], &[vec![f64::NAN, 0.0]], 0.1).is_err());
        assert_eq!(p, vec![1.0, 2.0]);
        assert_eq!(s.step, 0);
    }

    #[test]
    fn cosine_endpoints() {
        assert_eq!(scheduled_lr(Schedule::Cosine, 0.1, 0, 10), 0.1);
        assert!(scheduled_lr(Schedule::Cosine, 0.1, 10, 10).abs() < 1e-17);
        assert!((scheduled_lr(Schedule::Cosine, 0.1, 5, 10) - 0.05).abs() < 1e-15);
    }
}
