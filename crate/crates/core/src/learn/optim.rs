//! AdamW with decoupled weight decay and a linear warmup/decay schedule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::model::{Gradients, Model};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// First/second moment accumulators, one pair per parameter tensor.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    pub step: u64,
}

impl OptimizerState {
    pub fn for_model(model: &Model) -> Self {
        let shapes: Vec<usize> = model.tensors().iter().map(|t| t.len()).collect();
        OptimizerState {
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }
}

/// Linear 0 -> peak over the warmup steps, then linear peak -> 0 at
/// `total_steps`. Warmup length is `ceil(warmup_fraction * total_steps)`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Schedule {
    pub total_steps: u64,
    pub warmup_fraction: f64,
    pub peak_lr: f64,
}

impl Schedule {
    pub fn new(total_steps: u64, warmup_fraction: f64, peak_lr: f64) -> Result<Self> {
        if total_steps == 0 {
            return Err(Error::InvalidInput("total_steps must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&warmup_fraction) {
            return Err(Error::InvalidInput(format!(
                "warmup_fraction {warmup_fraction} not in [0, 1)"
            )));
        }
        Ok(Schedule {
            total_steps,
            warmup_fraction,
            peak_lr,
        })
    }

    pub fn warmup_steps(&self) -> u64 {
        (self.warmup_fraction * self.total_steps as f64).ceil() as u64
    }

    pub fn lr_at(&self, step: u64) -> Result<f64> {
        if step > self.total_steps {
            return Err(Error::InvalidInput(format!(
                "step {step} beyond total_steps {}",
                self.total_steps
            )));
        }
        let warmup = self.warmup_steps();
        if warmup > 0 && step <= warmup {
            return Ok(self.peak_lr * step as f64 / warmup as f64);
        }
        if self.total_steps == warmup {
            return Ok(self.peak_lr);
        }
        Ok(self.peak_lr * (self.total_steps - step) as f64 / (self.total_steps - warmup) as f64)
    }
}

/// One bias-corrected AdamW update at the schedule's current learning rate.
///
/// Decay is decoupled: parameters are scaled by `1 - lr * weight_decay`
/// before the moment update is applied.
pub fn adamw_step(
    model: &mut Model,
    grads: &Gradients,
    state: &mut OptimizerState,
    cfg: &AdamWConfig,
    schedule: &Schedule,
) -> Result<()> {
    if state.step >= schedule.total_steps {
        return Err(Error::InvalidInput(format!(
            "optimizer step {} has reached total_steps {}",
            state.step, schedule.total_steps
        )));
    }
    let lr = schedule.lr_at(state.step)?;
    let t = (state.step + 1) as i32;
    let bias1 = 1.0 - cfg.beta1.powi(t);
    let bias2 = 1.0 - cfg.beta2.powi(t);

    let params = model.tensors_mut();
    let grad_tensors = grads.tensors();
    if params.len() != grad_tensors.len() {
        return Err(Error::InvalidInput(
            "gradient tensors do not match the model".into(),
        ));
    }
    for ((tensor, grad), (m, v)) in params
        .into_iter()
        .zip(grad_tensors)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        if tensor.len() != grad.len() {
            return Err(Error::DimensionMismatch {
                expected: tensor.len(),
                got: grad.len(),
            });
        }
        for i in 0..tensor.len() {
            let g = grad[i];
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
            let m_hat = m[i] / bias1;
            let v_hat = v[i] / bias2;
            tensor[i] *= 1.0 - lr * cfg.weight_decay;
            tensor[i] -= lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
    state.step += 1;
    Ok(())
}
