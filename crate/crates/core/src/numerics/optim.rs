use serde::{Deserialize, Serialize};

use super::params::ParamSet;
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// L2 coefficient added to the gradient before the moment updates.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Adam moments for one parameter set.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &ParamSet, config: AdamConfig) -> Self {
        let zeros: Vec<Tensor> = params.tensors().iter().map(|p| Tensor::zeros(p.shape())).collect();
        AdamState {
            config,
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn step(&mut self, params: &mut ParamSet, grads: &[Tensor], lr: f64) -> Result<()> {
        if grads.len() != params.len() || self.m.len() != params.len() {
            return Err(Error::Shape(format!(
                "adam: {} params, {} grads, {} moments",
                params.len(),
                grads.len(),
                self.m.len()
            )));
        }
        for (p, g) in params.tensors().iter().zip(grads) {
            if p.shape() != g.shape() {
                return Err(Error::Shape(format!(
                    "adam: parameter {:?} vs gradient {:?}",
                    p.shape(),
                    g.shape()
                )));
            }
        }
        self.t += 1;
        let AdamConfig {
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for ((p, g), (m, v)) in params
            .tensors_mut()
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for (((theta, &gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                let grad = gi as f64 + weight_decay * *theta as f64;
                let m_new = beta1 * *mi as f64 + (1.0 - beta1) * grad;
                let v_new = beta2 * *vi as f64 + (1.0 - beta2) * grad * grad;
                *mi = m_new as f32;
                *vi = v_new as f32;
                let m_hat = m_new / bc1;
                let v_hat = v_new / bc2;
                *theta = (*theta as f64 - lr * m_hat / (v_hat.sqrt() + eps)) as f32;
            }
        }
        Ok(())
    }
}

/// `lr(step) = base_lr · (1 − step / total_steps)^power`
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolySchedule {
    pub base_lr: f64,
    pub total_steps: u64,
    pub power: f64,
}

impl PolySchedule {
    pub fn new(base_lr: f64, total_steps: u64, power: f64) -> Result<Self> {
        if total_steps == 0 {
            return Err(Error::InvalidArgument("poly schedule needs total_steps > 0".into()));
        }
        if !(power > 0.0) {
            return Err(Error::InvalidArgument("poly schedule needs power > 0".into()));
        }
        Ok(PolySchedule {
            base_lr,
            total_steps,
            power,
        })
    }

    pub fn lr(&self, step: u64) -> Result<f64> {
        if step > self.total_steps {
            return Err(Error::Range(format!(
                "step {step} beyond schedule length {}",
                self.total_steps
            )));
        }
        let frac = 1.0 - step as f64 / self.total_steps as f64;
        Ok(self.base_lr * frac.powf(self.power))
    }
}
