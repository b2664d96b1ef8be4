//! AdamW with decoupled weight decay, and the polynomial learning-rate decay.

use super::{ModelError, TrainConfig};
use crate::autodiff::{ParamStore, Tensor};
use crate::scalar::Real;

/// First and second moment estimates per parameter, plus the step count.
#[derive(Debug, Clone, PartialEq)]
pub struct OptState<T> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub t: u64,
}

impl<T: Real> OptState<T> {
    pub fn new(params: &ParamStore<T>) -> Self {
        let zeros = || params.iter().map(|p| vec![T::zero(); p.value.len()]).collect();
        Self {
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }
}

/// One AdamW update of a single buffer at step `t` (1-based):
///
/// ```text
/// m ← β1·m + (1−β1)·g
/// v ← β2·v + (1−β2)·g²
/// θ ← θ − lr·(m/(1−β1^t)) / (sqrt(v/(1−β2^t)) + eps) − lr·wd·θ
/// ```
#[allow(clippy::too_many_arguments)]
pub fn adamw_update<T: Real>(
    theta: &mut [T],
    grad: &[T],
    m: &mut [T],
    v: &mut [T],
    t: u64,
    cfg: &TrainConfig,
    lr: f64,
) {
    let (b1, b2) = (T::of(cfg.beta1), T::of(cfg.beta2));
    let bc1 = T::one() - b1.powi(t as i32);
    let bc2 = T::one() - b2.powi(t as i32);
    let (lr, eps, wd) = (T::of(lr), T::of(cfg.eps), T::of(cfg.weight_decay));
    for i in 0..theta.len() {
        let g = grad[i];
        m[i] = b1 * m[i] + (T::one() - b1) * g;
        v[i] = b2 * v[i] + (T::one() - b2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        let old = theta[i];
        theta[i] = old - lr * m_hat / (v_hat.sqrt() + eps) - lr * wd * old;
    }
}

/// Apply one AdamW step to every parameter of `params`.
pub fn adamw_step<T: Real>(
    params: &mut ParamStore<T>,
    grads: &[Tensor<T>],
    state: &mut OptState<T>,
    cfg: &TrainConfig,
    lr: f64,
) -> Result<(), ModelError> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(ModelError::ShapeMismatch(format!(
            "{} gradients / {} moment buffers for {} parameters",
            grads.len(),
            state.m.len(),
            params.len()
        )));
    }
    for (i, g) in grads.iter().enumerate() {
        let p = params.get(i);
        if g.shape() != p.value.shape() || state.m[i].len() != g.len() {
            return Err(ModelError::ShapeMismatch(format!(
                "gradient {:?} for parameter {} of shape {:?}",
                g.shape(),
                p.name,
                p.value.shape()
            )));
        }
    }
    state.t += 1;
    for (i, g) in grads.iter().enumerate() {
        adamw_update(
            params.value_mut(i).data_mut(),
            g.data(),
            &mut state.m[i],
            &mut state.v[i],
            state.t,
            cfg,
            lr,
        );
    }
    Ok(())
}

/// `base·(1 − step/total)^power`, zero at `step == total`.
pub fn lr_at(step: usize, total_steps: usize, cfg: &TrainConfig) -> f64 {
    if total_steps == 0 {
        return cfg.learning_rate;
    }
    let frac = 1.0 - (step.min(total_steps) as f64 / total_steps as f64);
    cfg.learning_rate * frac.powf(cfg.poly_power)
}
