//! First-order optimizers operating structurally on [`NetworkParams`].

use serde::{Deserialize, Serialize};

use super::{Gradient, NetworkParams};
use crate::error::{Error, Result};

/// Walks parameters and gradient in lockstep. Errors if shapes disagree.
fn zip_params<F: FnMut(usize, &mut f64, f64)>(
    params: &mut NetworkParams,
    grad: &Gradient,
    mut f: F,
) -> Result<()> {
    if params.layers.len() != grad.layers.len()
        || params.baseline_head.is_some() != grad.baseline.is_some()
    {
        return Err(Error::validation("gradient shape does not match network"));
    }
    let mut idx = 0;
    for (layer, lg) in params.layers.iter_mut().zip(&grad.layers) {
        if layer.weights.len() != lg.w.len() || layer.bias.len() != lg.b.len() {
            return Err(Error::validation("gradient layer shape mismatch"));
        }
        for (p, &g) in layer.weights.iter_mut().zip(&lg.w) {
            f(idx, p, g);
            idx += 1;
        }
        for (p, &g) in layer.bias.iter_mut().zip(&lg.b) {
            f(idx, p, g);
            idx += 1;
        }
    }
    if let (Some(head), Some(hg)) = (params.baseline_head.as_mut(), grad.baseline.as_ref()) {
        if head.weights.len() != hg.w.len() || head.bias.len() != hg.b.len() {
            return Err(Error::validation("gradient baseline shape mismatch"));
        }
        for (p, &g) in head.weights.iter_mut().zip(&hg.w) {
            f(idx, p, g);
            idx += 1;
        }
        for (p, &g) in head.bias.iter_mut().zip(&hg.b) {
            f(idx, p, g);
            idx += 1;
        }
    }
    Ok(())
}

/// θ ← θ − lr · (g + weight_decay · θ)
pub fn sgd_step(
    params: &mut NetworkParams,
    grad: &Gradient,
    lr: f64,
    weight_decay: f64,
) -> Result<()> {
    zip_params(params, grad, |_, p, g| {
        *p -= lr * (g + weight_decay * *p);
    })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Classic L2 coupling: g ← g + weight_decay·θ before the moments.
    pub weight_decay: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// First/second moment buffers, flat in the same structural order as
/// [`Gradient::flatten`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &NetworkParams) -> Self {
        let n = params.param_count();
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }
}

/// One Adam update with bias correction:
/// m ← β₁m + (1−β₁)g, v ← β₂v + (1−β₂)g², θ ← θ − lr·m̂/(√v̂ + ε).
pub fn adam_step(
    state: &mut AdamState,
    params: &mut NetworkParams,
    grad: &Gradient,
    hp: &AdamParams,
) -> Result<()> {
    if state.m.len() != params.param_count() {
        return Err(Error::validation("adam state does not match network size"));
    }
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - hp.beta1.powi(t);
    let bc2 = 1.0 - hp.beta2.powi(t);
    let (m, v) = (&mut state.m, &mut state.v);
    zip_params(params, grad, |i, p, g| {
        let g = g + hp.weight_decay * *p;
        m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * g;
        v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        *p -= hp.lr * m_hat / (v_hat.sqrt() + hp.eps);
    })
}
