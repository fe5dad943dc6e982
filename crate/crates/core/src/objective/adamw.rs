use serde::{Deserialize, Serialize};

use crate::diffcore::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Optimizer and objective hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Weight `α` of the correlation term in the composite loss.
    pub alpha_corr: f64,
    pub batch_size: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 3e-4,
            alpha_corr: 0.1,
            batch_size: 32,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::config("optim.beta1 and optim.beta2 must be in [0, 1)"));
        }
        if !(self.lr > 0.0) {
            return Err(Error::config("optim.lr must be > 0"));
        }
        if !(self.alpha_corr >= 0.0) || !(self.weight_decay >= 0.0) || !(self.eps > 0.0) {
            return Err(Error::config(
                "optim.alpha_corr and optim.weight_decay must be ≥ 0, optim.eps > 0",
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::config("optim.batch_size must be ≥ 1"));
        }
        Ok(())
    }
}

/// First and second moment estimates for every parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState<S> {
    pub m: Vec<Vec<S>>,
    pub v: Vec<Vec<S>>,
    pub t: u64,
}

impl<S: Scalar> OptimizerState<S> {
    pub fn new(params: &[Tensor<S>]) -> Self {
        Self {
            m: params.iter().map(|p| vec![S::ZERO; p.len()]).collect(),
            v: params.iter().map(|p| vec![S::ZERO; p.len()]).collect(),
            t: 0,
        }
    }
}

/// One AdamW update with bias-corrected moments and decoupled weight decay
/// applied to every parameter:
///
/// `θ ← θ − lr·m̂/(√v̂ + eps) − lr·wd·θ`
///
/// Gradients are checked for finiteness before anything is modified; on
/// failure the error names the offending parameter and nothing changes.
pub fn adamw_step<S: Scalar>(
    params: &mut [Tensor<S>],
    grads: &[Vec<S>],
    state: &mut OptimizerState<S>,
    config: &OptimizerConfig,
    names: &[String],
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::dim(format!(
            "adamw: {} params, {} grads, {} moment buffers",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.len() != g.len() {
            return Err(Error::dim(format!(
                "adamw: gradient for {} has {} elements, parameter has {}",
                name_of(names, i),
                g.len(),
                p.len()
            )));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric(format!(
                "non-finite gradient for parameter {}",
                name_of(names, i)
            )));
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - config.beta1.powi(t);
    let bc2 = 1.0 - config.beta2.powi(t);
    let b1 = S::from_f64(config.beta1);
    let b2 = S::from_f64(config.beta2);
    let one_m_b1 = S::from_f64(1.0 - config.beta1);
    let one_m_b2 = S::from_f64(1.0 - config.beta2);
    let inv_bc1 = S::from_f64(1.0 / bc1);
    let inv_bc2 = S::from_f64(1.0 / bc2);
    let lr = S::from_f64(config.lr);
    let decay = S::from_f64(config.lr * config.weight_decay);
    let eps = S::from_f64(config.eps);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        for (((th, &gi), mi), vi) in p.data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = b1 * *mi + one_m_b1 * gi;
            *vi = b2 * *vi + one_m_b2 * gi * gi;
            let m_hat = *mi * inv_bc1;
            let v_hat = *vi * inv_bc2;
            let old = *th;
            *th = old - lr * m_hat / (v_hat.sqrt() + eps) - decay * old;
        }
    }
    Ok(())
}

fn name_of(names: &[String], i: usize) -> String {
    names.get(i).cloned().unwrap_or_else(|| format!("#{i}"))
}
