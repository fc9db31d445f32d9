use super::Real;
use crate::error::{Error, Result};

/// Adam with coupled L2 weight decay (`g <- g + wd * theta`).
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub step: u64,
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    pub weight_decay: T,
}

impl<T: Real> AdamState<T> {
    /// Fresh state with beta = (0.9, 0.999) and eps = 1e-8.
    pub fn new(param_count: usize, lr: f64, weight_decay: f64) -> Self {
        Self {
            step: 0,
            m: vec![T::zero(); param_count],
            v: vec![T::zero(); param_count],
            lr: T::from_f64(lr),
            beta1: T::from_f64(0.9),
            beta2: T::from_f64(0.999),
            eps: T::from_f64(1e-8),
            weight_decay: T::from_f64(weight_decay),
        }
    }

    pub fn cast<U: Real>(&self) -> AdamState<U> {
        let c = |v: T| U::from_f64(v.as_f64());
        AdamState {
            step: self.step,
            m: self.m.iter().map(|&v| c(v)).collect(),
            v: self.v.iter().map(|&v| c(v)).collect(),
            lr: c(self.lr),
            beta1: c(self.beta1),
            beta2: c(self.beta2),
            eps: c(self.eps),
            weight_decay: c(self.weight_decay),
        }
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step<T: Real>(params: &mut [T], grads: &[T], state: &mut AdamState<T>) -> Result<()> {
    if params.len() != grads.len() || state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(Error::config(format!(
            "adam sizes differ: {} params, {} grads, {} / {} moments",
            params.len(),
            grads.len(),
            state.m.len(),
            state.v.len()
        )));
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::numerical("adam", format!("non-finite gradient at parameter {i}")));
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let bc1 = T::one() - b1.powi(t);
    let bc2 = T::one() - b2.powi(t);
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(state.m.iter_mut()).zip(state.v.iter_mut()) {
        let g = g + state.weight_decay * *p;
        *m = b1 * *m + (T::one() - b1) * g;
        *v = b2 * *v + (T::one() - b2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
    }
    Ok(())
}
