//! Counting instrumentation for transient training allocations.
//!
//! The resolution-agnostic memory claim is made testable by routing every
//! scratch buffer on the per-pixel training path (patches, activations,
//! gradients, loss buffers) through [`scratch_vec`]. The counter deliberately
//! excludes stored input images and the filter's FFT-domain buffers, whose
//! size scales with resolution by construction; those are allocated with
//! plain `vec!`.
//!
//! Measurement is hermetic: [`measure_floats`] runs the workload on a
//! dedicated thread pool whose threads are flagged, so concurrent work on
//! other threads never contributes to the count.

use std::cell::Cell;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

static FLOATS: AtomicU64 = AtomicU64::new(0);
static MEASURE_LOCK: Mutex<()> = Mutex::new(());

thread_local! {
    static ACTIVE: Cell<bool> = const { Cell::new(false) };
}

#[inline]
pub fn record(n: usize) {
    ACTIVE.with(|a| {
        if a.get() {
            FLOATS.fetch_add(n as u64, Ordering::Relaxed);
        }
    });
}

/// Allocate a zero-filled scratch vector, recording its element count.
#[inline]
pub fn scratch_vec<T: Clone + num_traits::Zero>(n: usize) -> Vec<T> {
    record(n);
    vec![T::zero(); n]
}

/// Tracked 2-D array helper for the GEMM-shaped intermediates.
pub fn scratch_arr2<T: Clone + num_traits::Zero>(rows: usize, cols: usize) -> ndarray::Array2<T> {
    ndarray::Array2::from_shape_vec((rows, cols), scratch_vec(rows * cols))
        .expect("shape matches length")
}

pub fn scratch_arr1<T: Clone + num_traits::Zero>(n: usize) -> ndarray::Array1<T> {
    ndarray::Array1::from_vec(scratch_vec(n))
}

/// Run `f` on a dedicated `threads`-wide pool and return its result together
/// with the number of scalar elements allocated through the scratch helpers
/// while it ran. Measurements are serialized process-wide.
pub fn measure_floats<R: Send>(
    threads: usize,
    f: impl FnOnce() -> R + Send,
) -> crate::Result<(R, u64)> {
    let _guard = MEASURE_LOCK
        .lock()
        .unwrap_or_else(std::sync::PoisonError::into_inner);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .start_handler(|_| ACTIVE.with(|a| a.set(true)))
        .build()
        .map_err(|e| crate::Error::Config(format!("measurement pool: {e}")))?;
    FLOATS.store(0, Ordering::SeqCst);
    let out = pool.install(f);
    let count = FLOATS.load(Ordering::SeqCst);
    Ok((out, count))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_only_inside_measurement() {
        let _outside: Vec<f32> = scratch_vec(4096);
        let ((), n) = measure_floats(2, || {
            let _v: Vec<f32> = scratch_vec(64);
            let _a: ndarray::Array2<f64> = scratch_arr2(4, 8);
            // Parallel tasks on the measurement pool are counted too.
            use rayon::prelude::*;
            (0..4u32).into_par_iter().for_each(|_| {
                let _w: Vec<f32> = scratch_vec(10);
            });
        })
        .unwrap();
        assert_eq!(n, 64 + 32 + 40);
    }
}
