//! 2-D FFT on square power-of-two grids.
//!
//! Forward transform is unnormalized; the inverse is scaled by 1/(M·M) so the
//! round trip is the identity. Frequency indexing follows the usual FFT
//! convention: index j maps to signed frequency j for j <= M/2 and j - M
//! otherwise.

use num_complex::Complex;
use rustfft::FftPlanner;

use crate::{Error, Real, Result};

pub fn is_pow2(n: usize) -> bool {
    n > 0 && n & (n - 1) == 0
}

/// Reject non-power-of-two sides with guidance.
pub fn check_pow2(h: usize, w: usize) -> Result<()> {
    if h != w || !is_pow2(h) {
        return Err(Error::Config(format!(
            "frequency-domain path requires square power-of-two images, got {h}x{w}; \
             pad the input to the next power of two"
        )));
    }
    Ok(())
}

/// Signed frequency for FFT bin `j` of an `m`-point transform.
#[inline]
pub fn freq_index(j: usize, m: usize) -> i64 {
    if j <= m / 2 {
        j as i64
    } else {
        j as i64 - m as i64
    }
}

fn fft2_inplace<T: Real>(buf: &mut [Complex<T>], m: usize, inverse: bool) {
    debug_assert_eq!(buf.len(), m * m);
    let mut planner = FftPlanner::new();
    let fft = if inverse {
        planner.plan_fft_inverse(m)
    } else {
        planner.plan_fft_forward(m)
    };
    let mut scratch = vec![Complex::new(T::zero(), T::zero()); fft.get_inplace_scratch_len()];
    for row in buf.chunks_exact_mut(m) {
        fft.process_with_scratch(row, &mut scratch);
    }
    // Columns via transpose, row FFTs, transpose back.
    transpose_square(buf, m);
    for row in buf.chunks_exact_mut(m) {
        fft.process_with_scratch(row, &mut scratch);
    }
    transpose_square(buf, m);
    if inverse {
        let scale = T::one() / T::from_f64_c((m * m) as f64);
        for v in buf.iter_mut() {
            *v = *v * scale;
        }
    }
}

fn transpose_square<T: Copy>(buf: &mut [T], m: usize) {
    for r in 0..m {
        for c in (r + 1)..m {
            buf.swap(r * m + c, c * m + r);
        }
    }
}

/// Forward 2-D FFT of one real channel. Returns the complex spectrum.
pub fn fft2<T: Real>(data: &[T], m: usize) -> Result<Vec<Complex<T>>> {
    check_pow2(m, m)?;
    if data.len() != m * m {
        return Err(Error::Shape(format!("fft2: {} values for {m}x{m}", data.len())));
    }
    let mut buf: Vec<Complex<T>> = data.iter().map(|&v| Complex::new(v, T::zero())).collect();
    fft2_inplace(&mut buf, m, false);
    Ok(buf)
}

/// Forward 2-D FFT of a complex field.
pub fn fft2_complex<T: Real>(data: &[Complex<T>], m: usize) -> Result<Vec<Complex<T>>> {
    check_pow2(m, m)?;
    let mut buf = data.to_vec();
    fft2_inplace(&mut buf, m, false);
    Ok(buf)
}

/// Inverse 2-D FFT (scaled by 1/M²). Returns the complex field.
pub fn ifft2<T: Real>(spectrum: &[Complex<T>], m: usize) -> Result<Vec<Complex<T>>> {
    check_pow2(m, m)?;
    let mut buf = spectrum.to_vec();
    fft2_inplace(&mut buf, m, true);
    Ok(buf)
}
