//! AdamW with a single-cycle cosine learning-rate schedule.

use super::net::Scalar;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamWConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Length of the cosine cycle in steps.
    pub total_steps: usize,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.00025,
            weight_decay: 0.00005,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            total_steps: 500,
        }
    }
}

impl AdamWConfig {
    /// `η_t = η_0 · ½ (1 + cos(π t / T))` for 0-based step `t`.
    pub fn learning_rate_at(&self, step: usize) -> f64 {
        if self.total_steps == 0 {
            return self.learning_rate;
        }
        let progress = (step as f64 / self.total_steps as f64).min(1.0);
        self.learning_rate * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
    }
}

/// First and second moment estimates for a list of parameter tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamWState<T> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    /// Number of updates applied so far.
    pub steps: usize,
}

impl<T: Scalar> AdamWState<T> {
    pub fn new(shapes: &[usize]) -> Self {
        Self {
            m: shapes.iter().map(|&n| vec![T::zero(); n]).collect(),
            v: shapes.iter().map(|&n| vec![T::zero(); n]).collect(),
            steps: 0,
        }
    }
}

/// One decoupled-weight-decay Adam update at 0-based step `step`.
///
/// Returns the learning rate that was used.
pub fn adamw_step<T: Scalar>(
    params: &mut [&mut [T]],
    grads: &[&[T]],
    state: &mut AdamWState<T>,
    step: usize,
    config: &AdamWConfig,
) -> Result<f64> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} parameter tensors, {} gradients, {} moment slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for ((p, g), m) in params.iter().zip(grads).zip(&state.m) {
        if p.len() != g.len() || p.len() != m.len() {
            return Err(Error::ShapeMismatch("parameter and gradient lengths differ".into()));
        }
    }
    let lr = config.learning_rate_at(step);
    let t = (state.steps + 1) as i32;
    let bc1 = 1.0 - config.beta1.powi(t);
    let bc2 = 1.0 - config.beta2.powi(t);
    let (b1, b2) = (T::from_f64(config.beta1), T::from_f64(config.beta2));
    let (one, eps) = (T::one(), T::from_f64(config.epsilon));
    let decay = T::from_f64(1.0 - lr * config.weight_decay);
    let step_size = T::from_f64(lr / bc1);
    let inv_bc2 = T::from_f64(1.0 / bc2);
    for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        for i in 0..p.len() {
            let gi = g[i];
            m[i] = b1 * m[i] + (one - b1) * gi;
            v[i] = b2 * v[i] + (one - b2) * gi * gi;
            let denom = (v[i] * inv_bc2).sqrt() + eps;
            p[i] = p[i] * decay - step_size * m[i] / denom;
        }
    }
    state.steps += 1;
    Ok(lr)
}
