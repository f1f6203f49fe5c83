//! Fixed-topology MLP machinery with hand-derived reverse-mode gradients.
//!
//! No autodiff graph: the architecture is a known chain (affine / ReLU /
//! affine ...), so each module implements an explicit backward pass. All
//! matrix products route through [`matmul_into`] so scratch buffers are
//! allocated via the tracked allocator and GEMM batching stays explicit.

mod adam;
mod mlp;
mod multimlp;

pub use adam::AdamState;
pub use mlp::{l1_loss, Linear, Mlp, MlpCache};
pub use multimlp::{MultiMlp, MultiMlpCache, MultiMlpGrads};

use ndarray::{ArrayView2, Array2};

use crate::Real;

/// `out = a · b` without allocating inside the GEMM.
pub(crate) fn matmul_into<T: Real>(a: ArrayView2<T>, b: ArrayView2<T>, out: &mut Array2<T>) {
    ndarray::linalg::general_mat_mul(T::one(), &a, &b, T::zero(), out);
}

/// Iteration over a parameter group in a fixed canonical order; Adam moments
/// and checkpoint tensors use the same order.
pub trait Params<T> {
    fn count(&self) -> usize;
    fn for_each(&self, f: &mut dyn FnMut(T));
    fn for_each_mut(&mut self, f: &mut dyn FnMut(&mut T));

    fn flat(&self) -> Vec<T>
    where
        T: Copy,
    {
        let mut out = Vec::with_capacity(self.count());
        self.for_each(&mut |v| out.push(v));
        out
    }

    fn load_flat(&mut self, data: &[T]) -> crate::Result<()>
    where
        T: Copy,
    {
        if data.len() != self.count() {
            return Err(crate::Error::Shape(format!(
                "parameter group expects {} values, got {}",
                self.count(),
                data.len()
            )));
        }
        let mut it = data.iter();
        self.for_each_mut(&mut |v| *v = *it.next().unwrap());
        Ok(())
    }
}

impl<T: Real> Params<T> for ndarray::Array2<T> {
    fn count(&self) -> usize {
        self.len()
    }
    fn for_each(&self, f: &mut dyn FnMut(T)) {
        for v in self.iter() {
            f(*v);
        }
    }
    fn for_each_mut(&mut self, f: &mut dyn FnMut(&mut T)) {
        for v in self.iter_mut() {
            f(v);
        }
    }
}
