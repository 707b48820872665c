//! AdamW steps and the cosine-annealing-with-warm-restarts schedule.

use thiserror::Error;

use crate::Scalar;

#[derive(Debug, Error)]
pub enum OptimError {
    #[error("gradient length {got} does not match parameter length {expected}")]
    LengthMismatch { got: usize, expected: usize },
    #[error("non-finite gradient entry at index {0}")]
    NonFiniteGradient(usize),
}

/// Moment estimates of one AdamW-driven parameter vector.
#[derive(Debug, Clone)]
pub struct AdamState<S> {
    m: Vec<S>,
    v: Vec<S>,
    t: u64,
    pub beta1: S,
    pub beta2: S,
    pub eps: S,
    pub weight_decay: S,
}

impl<S: Scalar> AdamState<S> {
    /// The library defaults the reference implementation inherits:
    /// beta1 = 0.9, beta2 = 0.999, eps = 1e-8, weight decay 0.01.
    pub fn new(len: usize) -> Self {
        Self::with_hyperparams(len, 0.9, 0.999, 1e-8, 0.01)
    }

    pub fn with_hyperparams(
        len: usize,
        beta1: f64,
        beta2: f64,
        eps: f64,
        weight_decay: f64,
    ) -> Self {
        AdamState {
            m: vec![S::zero(); len],
            v: vec![S::zero(); len],
            t: 0,
            beta1: S::cast(beta1),
            beta2: S::cast(beta2),
            eps: S::cast(eps),
            weight_decay: S::cast(weight_decay),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One decoupled-weight-decay Adam step in place.
pub fn adamw_step<S: Scalar>(
    theta: &mut [S],
    g: &[S],
    state: &mut AdamState<S>,
    lr: S,
) -> Result<(), OptimError> {
    if g.len() != theta.len() || state.m.len() != theta.len() {
        return Err(OptimError::LengthMismatch {
            got: g.len(),
            expected: theta.len(),
        });
    }
    if let Some(i) = g.iter().position(|x| !x.is_finite()) {
        return Err(OptimError::NonFiniteGradient(i));
    }
    state.t += 1;
    let t = state.t as i32;
    let one = S::one();
    let bc1 = one - state.beta1.powi(t);
    let bc2 = one - state.beta2.powi(t);
    for i in 0..theta.len() {
        state.m[i] = state.beta1 * state.m[i] + (one - state.beta1) * g[i];
        state.v[i] = state.beta2 * state.v[i] + (one - state.beta2) * g[i] * g[i];
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        theta[i] = theta[i] - lr * (m_hat / (v_hat.sqrt() + state.eps) + state.weight_decay * theta[i]);
    }
    Ok(())
}

/// Cosine annealing with warm restarts; cycle k has length T_0 * T_mult^k.
#[derive(Debug, Clone, Copy)]
pub struct LrSchedule {
    pub base_lr: f64,
    pub t_0: usize,
    pub t_mult: usize,
    pub eta_min: f64,
}

pub fn lr_at(schedule: &LrSchedule, epoch: usize) -> f64 {
    let mut t_cur = epoch;
    let mut t_i = schedule.t_0.max(1);
    while t_cur >= t_i {
        t_cur -= t_i;
        t_i = t_i.saturating_mul(schedule.t_mult.max(1));
    }
    let phase = std::f64::consts::PI * t_cur as f64 / t_i as f64;
    schedule.eta_min + 0.5 * (schedule.base_lr - schedule.eta_min) * (1.0 + phase.cos())
}
