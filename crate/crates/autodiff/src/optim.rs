//! Adaptive-moment gradient descent over a flat parameter store.

use crate::tape::ParamStore;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum OptimError {
    #[error("non-finite gradient in parameter `{name}`")]
    NonFiniteGrad { name: String },
    #[error("gradient buffer length {got} does not match parameter count {expect}")]
    LengthMismatch { got: usize, expect: usize },
}

/// Adam with β=(0.9, 0.999), ε=1e-8. Moment buffers align with the store's
/// flat value layout.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
    /// Per-scalar learning-rate multipliers; empty means uniform 1.
    lr_scale: Vec<f64>,
}

impl Adam {
    pub fn new(lr: f64, n_scalars: usize) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; n_scalars],
            v: vec![0.0; n_scalars],
            lr_scale: Vec::new(),
        }
    }

    /// Parameter-group rate: scalars in `[offset, offset + len)` step with
    /// `lr * mult` instead of `lr`.
    pub fn scale_range(&mut self, offset: usize, len: usize, mult: f64) {
        assert!(mult.is_finite() && mult > 0.0, "bad rate multiplier {mult}");
        if self.lr_scale.is_empty() {
            self.lr_scale = vec![1.0; self.m.len()];
        }
        for s in &mut self.lr_scale[offset..offset + len] {
            *s = mult;
        }
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &[f64]) -> Result<(), OptimError> {
        if grads.len() != store.n_scalars() {
            return Err(OptimError::LengthMismatch {
                got: grads.len(),
                expect: store.n_scalars(),
            });
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(OptimError::NonFiniteGrad {
                name: store.tensor_of_scalar(i).to_string(),
            });
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let values = store.flat_values_mut();
        for i in 0..values.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            let lr = match self.lr_scale.as_slice() {
                [] => self.lr,
                s => self.lr * s[i],
            };
            values[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}
