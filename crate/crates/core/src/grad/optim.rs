use alloc::format;
use alloc::vec::Vec;

use super::array::Array;
use super::params::ParameterStore;
use crate::error::{contract, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second moment accumulators, one pair per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: AdamConfig,
    pub step: u64,
    pub first_moment: Vec<Array>,
    pub second_moment: Vec<Array>,
}

impl OptimizerState {
    pub fn new(store: &ParameterStore, config: AdamConfig) -> Self {
        let zeros: Vec<Array> = store
            .iter()
            .map(|p| Array::zeros(p.value.shape()))
            .collect();
        Self {
            config,
            step: 0,
            first_moment: zeros.clone(),
            second_moment: zeros,
        }
    }
}

/// Global L2 norm over all gradient arrays.
pub fn global_norm(grads: &[Array]) -> f64 {
    libm::sqrt(
        grads
            .iter()
            .flat_map(|g| g.data().iter())
            .map(|v| v * v)
            .sum::<f64>(),
    )
}

/// Rescales `grads` in place so that their global norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [Array], max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        for g in grads.iter_mut() {
            g.data_mut().iter_mut().for_each(|v| *v *= s);
        }
    }
    norm
}

/// One bias-corrected adaptive-moment update.
pub fn adam_step(
    params: &mut ParameterStore,
    grads: &[Array],
    state: &mut OptimizerState,
) -> Result<()> {
    if grads.len() != params.len() || state.first_moment.len() != params.len() {
        return contract(format!(
            "adam_step: {} gradients / {} moments for {} parameters",
            grads.len(),
            state.first_moment.len(),
            params.len()
        ));
    }
    for (id, g) in params.ids().zip(grads) {
        if g.shape() != params.get(id).shape()
            || state.first_moment[id.index()].shape() != g.shape()
        {
            return contract(format!(
                "adam_step: gradient shape {:?} for parameter {} of shape {:?}",
                g.shape(),
                params.name(id),
                params.get(id).shape()
            ));
        }
    }
    state.step += 1;
    let AdamConfig {
        learning_rate,
        beta1,
        beta2,
        epsilon,
    } = state.config;
    let t = state.step as i32;
    let bc1 = 1.0 - libm::pow(beta1, t as f64);
    let bc2 = 1.0 - libm::pow(beta2, t as f64);
    for (id, g) in params.ids().collect::<Vec<_>>().into_iter().zip(grads) {
        let m = state.first_moment[id.index()].data_mut();
        let v = state.second_moment[id.index()].data_mut();
        let p = params.get_mut(id).data_mut();
        for (((pi, mi), vi), gi) in p.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(g.data()) {
            *mi = beta1 * *mi + (1.0 - beta1) * gi;
            *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
            let m_hat = *mi / bc1;
            let v_hat = *vi / bc2;
            *pi -= learning_rate * m_hat / (libm::sqrt(v_hat) + epsilon);
        }
    }
    Ok(())
}
