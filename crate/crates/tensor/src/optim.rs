use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result, TensorError};
use crate::tensor::ParamStore;

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

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

/// One bias-corrected Adam update of a flat parameter buffer.
///
/// `step` is the 1-based index of this update.
pub fn adam_update(
    cfg: &AdamConfig,
    step: u64,
    param: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
) -> Result<()> {
    if param.len() != grad.len() || m.len() != param.len() || v.len() != param.len() {
        return Err(shape_err(
            "adam",
            format!("param {} grad {} m {} v {}", param.len(), grad.len(), m.len(), v.len()),
        ));
    }
    if step == 0 {
        return Err(TensorError::Contract("adam step counter starts at 1".into()));
    }
    let bc1 = 1.0 - cfg.beta1.powi(step as i32);
    let bc2 = 1.0 - cfg.beta2.powi(step as i32);
    for i in 0..param.len() {
        let g = grad[i];
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        param[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    Ok(())
}

/// Adam moments for every parameter of one [`ParamStore`], in store order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(store: &ParamStore, config: AdamConfig) -> Self {
        let m: Vec<Vec<f64>> = store
            .iter()
            .map(|(_, p)| vec![0.0; p.tensor.numel()])
            .collect();
        Self {
            config,
            step: 0,
            v: m.clone(),
            m,
        }
    }

    /// Apply one update to every non-frozen parameter that holds a gradient,
    /// then clear all gradients.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        if self.m.len() != store.len() {
            return Err(shape_err(
                "adam",
                format!("state tracks {} params, store has {}", self.m.len(), store.len()),
            ));
        }
        self.step += 1;
        for (i, (_, p)) in store.iter_mut().enumerate() {
            if p.frozen {
                continue;
            }
            let Some(grad) = p.tensor.grad().map(<[f64]>::to_vec) else {
                continue;
            };
            adam_update(
                &self.config,
                self.step,
                p.tensor.data_mut(),
                &grad,
                &mut self.m[i],
                &mut self.v[i],
            )?;
        }
        store.zero_grad();
        Ok(())
    }
}
