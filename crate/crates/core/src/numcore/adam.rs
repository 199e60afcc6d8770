//! Adaptive-moment parameter updates.

use std::collections::BTreeMap;

use super::store::{Gradients, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// First/second moment estimates plus the step counter.
#[derive(Debug, Clone)]
pub struct OptimState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    moments: BTreeMap<String, (Tensor, Tensor)>,
}

impl OptimState {
    pub fn new(lr: f64) -> Self {
        OptimState { lr, beta1: 0.9, beta2: 0.999, epsilon: 1e-8, step: 0, moments: BTreeMap::new() }
    }
}

/// One optimizer step over every parameter in the store. Every parameter must
/// have a gradient entry (use [`Gradients::fill_missing`] for untouched ones).
pub fn adam_step(params: &mut ParamStore, state: &mut OptimState, grads: &Gradients) -> Result<()> {
    state.step += 1;
    let t = state.step as f64;
    let bc1 = 1.0 - state.beta1.powf(t);
    let bc2 = 1.0 - state.beta2.powf(t);
    for name in params.names() {
        let g = grads.get(&name).ok_or_else(|| Error::MissingGrad(name.clone()))?;
        let p = params.get_mut(&name).unwrap();
        let (m, v) = state
            .moments
            .entry(name.clone())
            .or_insert_with(|| (Tensor::zeros(p.shape().to_vec()), Tensor::zeros(p.shape().to_vec())));
        assert_eq!(m.shape(), p.shape(), "moment shape mismatch for `{name}`");
        for i in 0..p.len() {
            let gi = g.data()[i];
            let mi = state.beta1 * m.data()[i] + (1.0 - state.beta1) * gi;
            let vi = state.beta2 * v.data()[i] + (1.0 - state.beta2) * gi * gi;
            m.data_mut()[i] = mi;
            v.data_mut()[i] = vi;
            let m_hat = mi / bc1;
            let v_hat = vi / bc2;
            p.data_mut()[i] -= state.lr * m_hat / (v_hat.sqrt() + state.epsilon);
        }
    }
    Ok(())
}
