use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm clip applied before each step.
    pub clip_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8, clip_norm: Some(10.0) }
    }
}

/// Moment accumulators for a fixed list of parameters.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    /// Learning-rate multiplier per parameter.
    pub multipliers: Vec<f64>,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    pub fn new(shapes: &[&Tensor], config: AdamConfig, multipliers: Vec<f64>) -> Result<Self> {
        if multipliers.len() != shapes.len() {
            return Err(Error::Shape(format!(
                "{} multipliers for {} parameters",
                multipliers.len(),
                shapes.len()
            )));
        }
        Ok(Self {
            config,
            multipliers,
            m: shapes.iter().map(|t| vec![0.0; t.numel()]).collect(),
            v: shapes.iter().map(|t| vec![0.0; t.numel()]).collect(),
            step: 0,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update. Gradients are clipped to the global
    /// norm in the config first; a non-finite gradient aborts without
    /// touching any parameter.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Shape("adam: parameter/gradient count mismatch".into()));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.numel() != g.numel() || p.numel() != self.m[i].len() {
                return Err(Error::Shape(format!("adam: parameter {i} shape mismatch")));
            }
            if !g.all_finite() {
                return Err(Error::AbortNonFinite(i));
            }
        }
        let norm = grads.iter().map(|g| g.data().iter().map(|v| v * v).sum::<f64>()).sum::<f64>().sqrt();
        let clip = match self.config.clip_norm {
            Some(c) if norm > c => c / norm,
            _ => 1.0,
        };
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps, .. } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let rate = lr * self.multipliers[i];
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (k, (pv, &gv)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                let gv = gv * clip;
                m[k] = beta1 * m[k] + (1.0 - beta1) * gv;
                v[k] = beta2 * v[k] + (1.0 - beta2) * gv * gv;
                let mhat = m[k] / bc1;
                let vhat = v[k] / bc2;
                *pv -= rate * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
