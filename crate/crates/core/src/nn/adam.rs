//! Adam optimizer with bias correction; moments are stored flat in the same
//! canonical order the owning parameter group iterates in.

use super::Params;
use crate::Real;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub t: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(count: usize) -> Self {
        Self {
            m: vec![T::zero(); count],
            v: vec![T::zero(); count],
            t: 0,
        }
    }

    /// One bias-corrected update of `params` from `grads`; `t` advances once
    /// per call.
    pub fn step<P: Params<T>, G: Params<T>>(&mut self, params: &mut P, grads: &G, lr: T) {
        assert_eq!(params.count(), self.m.len(), "adam state shape mismatch");
        assert_eq!(grads.count(), self.m.len(), "gradient shape mismatch");
        assert!(lr > T::zero(), "learning rate must be positive");
        self.t += 1;
        let b1 = T::from_f64_c(BETA1);
        let b2 = T::from_f64_c(BETA2);
        let eps = T::from_f64_c(EPS);
        let bc1 = T::one() - T::from_f64_c(BETA1.powi(self.t as i32));
        let bc2 = T::one() - T::from_f64_c(BETA2.powi(self.t as i32));
        let g = grads.flat();
        let mut i = 0usize;
        params.for_each_mut(&mut |p| {
            let gi = g[i];
            let m = b1 * self.m[i] + (T::one() - b1) * gi;
            let v = b2 * self.v[i] + (T::one() - b2) * gi * gi;
            self.m[i] = m;
            self.v[i] = v;
            let m_hat = m / bc1;
            let v_hat = v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
            i += 1;
        });
    }
}
