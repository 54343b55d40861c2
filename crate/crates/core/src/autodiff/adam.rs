use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use super::{AutodiffError, Gradients, ParamId, ParamSet};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Gradients are rescaled to this global L2 norm before each step.
    pub max_grad_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            max_grad_norm: Some(5.0),
        }
    }
}

/// Bias-corrected Adam.
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl Adam {
    pub fn new(params: &ParamSet, cfg: AdamConfig) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|(_, _, t)| vec![0.0; t.len()]).collect();
        Self {
            cfg,
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn config(&self) -> &AdamConfig {
        &self.cfg
    }

    /// One update. A non-finite gradient aborts before anything changes.
    pub fn step(&mut self, params: &mut ParamSet, grads: &Gradients, lr: f64) -> Result<(), AutodiffError> {
        for (id, name, _) in params.iter() {
            if !grads.get(id).iter().all(|g| g.is_finite()) {
                return Err(AutodiffError::NonFiniteGradient { param: name.to_string() });
            }
        }
        let clip = match self.cfg.max_grad_norm {
            Some(max) => {
                let norm = grads.global_norm();
                if norm > max {
                    max / norm
                } else {
                    1.0
                }
            }
            None => 1.0,
        };
        self.t += 1;
        let AdamConfig { beta1, beta2, eps, .. } = self.cfg;
        let bias1 = 1.0 - math::powi(beta1, self.t as i32);
        let bias2 = 1.0 - math::powi(beta2, self.t as i32);
        for p in 0..params.len() {
            let id = ParamId(p);
            let g = grads.get(id);
            let (m, v) = (&mut self.m[p], &mut self.v[p]);
            for (((theta, &gi), mi), vi) in params.get_mut(id).data_mut().iter_mut().zip(g).zip(m).zip(v) {
                let gi = gi * clip;
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let m_hat = *mi / bias1;
                let v_hat = *vi / bias2;
                *theta -= lr * m_hat / (math::sqrt(v_hat) + eps);
            }
        }
        Ok(())
    }
}
