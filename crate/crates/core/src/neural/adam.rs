//! Adam with bias correction.

use super::tensor::Params;
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    m: Params<T>,
    v: Params<T>,
    t: i32,
}

impl<T: Real> Adam<T> {
    pub fn new(shapes: &[Vec<usize>]) -> Self {
        Self {
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            eps: T::lit(1e-8),
            m: Params::zeros_like(shapes),
            v: Params::zeros_like(shapes),
            t: 0,
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    /// Applies one update; rejects non-finite gradients before touching state.
    pub fn step(&mut self, params: &mut Params<T>, grads: &Params<T>, lr: T) -> Result<()> {
        if let Some(i) = grads.tensors.iter().position(|g| g.data.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFiniteGradient { tensor: i });
        }
        if grads.tensors.len() != params.tensors.len() {
            return Err(Error::DimensionMismatch {
                expected: params.tensors.len(),
                got: grads.tensors.len(),
            });
        }
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = T::one() - b1.powi(self.t);
        let c2 = T::one() - b2.powi(self.t);
        for (((p, g), m), v) in params
            .tensors
            .iter_mut()
            .zip(&grads.tensors)
            .zip(&mut self.m.tensors)
            .zip(&mut self.v.tensors)
        {
            for (((p, &g), m), v) in p.data.iter_mut().zip(&g.data).zip(&mut m.data).zip(&mut v.data) {
                *m = b1 * *m + (T::one() - b1) * g;
                *v = b2 * *v + (T::one() - b2) * g * g;
                let mh = *m / c1;
                let vh = *v / c2;
                *p -= lr * mh / (vh.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
