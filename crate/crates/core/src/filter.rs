//! Learnable preprocessing applied to the observation before patch
//! extraction.
//!
//! The primary path is a complex diagonal filter in the 2-D Fourier domain,
//! initialized to all ones (an identity filter) and fitted to the data. Per
//! input channel the output carries three channels: the raw channel, and the
//! real and imaginary parts of the filtered field. A small spatial
//! convolution bank is kept as an optional alternative; its kernels are not
//! part of the trained parameter groups.

use num_complex::Complex;

use ndarray::Array2;

use crate::fft::{fft2, ifft2};
use crate::grid::{BoundaryMode, GridImage};
use crate::nn::Params;
use crate::{Error, Real, Result};

/// Complex diagonal over the M×M frequency grid; one plane shared across
/// channels by default, or one plane per channel.
#[derive(Debug, Clone)]
pub struct FourierFilter<T> {
    pub m: usize,
    pub planes: usize,
    /// `planes · m · m` coefficients, row-major per plane.
    pub h: Vec<Complex<T>>,
}

impl<T: Real> FourierFilter<T> {
    /// All-ones initialization: the filtered field equals the input exactly.
    pub fn identity(m: usize, planes: usize) -> Result<Self> {
        crate::fft::check_pow2(m, m)?;
        Ok(Self {
            m,
            planes: planes.max(1),
            h: vec![Complex::new(T::one(), T::zero()); planes.max(1) * m * m],
        })
    }

    pub fn plane(&self, c: usize) -> &[Complex<T>] {
        let p = if self.planes == 1 { 0 } else { c };
        &self.h[p * self.m * self.m..(p + 1) * self.m * self.m]
    }

    /// Magnitude image of a plane, fftshifted so DC sits at the center.
    pub fn magnitude_image(&self, plane: usize) -> GridImage<T> {
        let m = self.m;
        let src = &self.h[plane * m * m..(plane + 1) * m * m];
        let mut out = GridImage::zeros(m, m, 1);
        for r in 0..m {
            for c in 0..m {
                let sr = (r + m / 2) % m;
                let sc = (c + m / 2) % m;
                out.set(r, c, 0, src[sr * m + sc].norm());
            }
        }
        out
    }
}

impl<T: Real> Params<T> for FourierFilter<T> {
    fn count(&self) -> usize {
        self.h.len() * 2
    }
    fn for_each(&self, f: &mut dyn FnMut(T)) {
        for v in &self.h {
            f(v.re);
            f(v.im);
        }
    }
    fn for_each_mut(&mut self, f: &mut dyn FnMut(&mut T)) {
        for v in &mut self.h {
            f(&mut v.re);
            f(&mut v.im);
        }
    }
}

/// Input spectra retained for the filter gradient.
pub struct FourierCache<T> {
    pub spectra: Vec<Vec<Complex<T>>>,
}

/// `q̃ = F⁻¹ H F q` per channel; output channels are `[q_c, Re u, Im u]`
/// concatenated over input channels, so C_pre = 3·C.
pub fn fourier_apply<T: Real>(
    q: &GridImage<T>,
    filter: &FourierFilter<T>,
) -> Result<(GridImage<T>, FourierCache<T>)> {
    let m = filter.m;
    if q.height() != m || q.width() != m {
        return Err(Error::Shape(format!(
            "filter is {m}x{m} but image is {}x{}",
            q.height(),
            q.width()
        )));
    }
    if filter.planes != 1 && filter.planes != q.channels() {
        return Err(Error::Shape(format!(
            "filter has {} planes for {} channels",
            filter.planes,
            q.channels()
        )));
    }
    let c_in = q.channels();
    let mut out = GridImage::zeros(m, m, 3 * c_in);
    let mut cache = FourierCache {
        spectra: Vec::with_capacity(c_in),
    };
    let mut chan = vec![T::zero(); m * m];
    for c in 0..c_in {
        for i in 0..m * m {
            chan[i] = q.data()[i * c_in + c];
        }
        let spec = fft2(&chan, m)?;
        let hplane = filter.plane(c);
        let prod: Vec<Complex<T>> =
            spec.iter().zip(hplane.iter()).map(|(a, b)| a * b).collect();
        let u = ifft2(&prod, m)?;
        for i in 0..m * m {
            out.data_mut()[i * 3 * c_in + 3 * c] = chan[i];
            out.data_mut()[i * 3 * c_in + 3 * c + 1] = u[i].re;
            out.data_mut()[i * 3 * c_in + 3 * c + 2] = u[i].im;
        }
        cache.spectra.push(spec);
    }
    Ok((out, cache))
}

/// Gradient of the filtered channels with respect to H (real and imaginary
/// parts treated as independent reals). `upstream` has 3·C channels matching
/// [`fourier_apply`]'s output; the raw-channel slots do not touch H.
///
/// For one channel with input spectrum Q and upstream field w = g_re + i·g_im
/// on (Re u, Im u): dL/dH[k] = conj(Q[k]) · fft2(w)[k] / M².
pub fn fourier_backward<T: Real>(
    cache: &FourierCache<T>,
    filter: &FourierFilter<T>,
    upstream: &GridImage<T>,
) -> Result<Vec<Complex<T>>> {
    let m = filter.m;
    let c_in = cache.spectra.len();
    if upstream.height() != m || upstream.width() != m || upstream.channels() != 3 * c_in {
        return Err(Error::Shape(format!(
            "upstream {}x{}x{} does not match filter output {m}x{m}x{}",
            upstream.height(),
            upstream.width(),
            upstream.channels(),
            3 * c_in
        )));
    }
    let mut grad = vec![Complex::new(T::zero(), T::zero()); filter.h.len()];
    let inv_m2 = T::one() / T::from_f64_c((m * m) as f64);
    let mut w = vec![Complex::new(T::zero(), T::zero()); m * m];
    for c in 0..c_in {
        for i in 0..m * m {
            w[i] = Complex::new(
                upstream.data()[i * 3 * c_in + 3 * c + 1],
                upstream.data()[i * 3 * c_in + 3 * c + 2],
            );
        }
        let w_hat = crate::fft::fft2_complex(&w, m)?;
        let plane = if filter.planes == 1 { 0 } else { c };
        let gslice = &mut grad[plane * m * m..(plane + 1) * m * m];
        for (g, (q, wh)) in gslice
            .iter_mut()
            .zip(cache.spectra[c].iter().zip(w_hat.iter()))
        {
            *g += q.conj() * wh * inv_m2;
        }
    }
    Ok(grad)
}

/// Small bank of spatial correlation kernels (odd size, centered).
#[derive(Debug, Clone)]
pub struct SpatialFilter<T> {
    pub kernels: Vec<Array2<T>>,
}

impl<T: Real> SpatialFilter<T> {
    pub fn new(kernels: Vec<Array2<T>>) -> Result<Self> {
        for k in &kernels {
            if k.nrows() != k.ncols() || k.nrows() % 2 == 0 {
                return Err(Error::Config(format!(
                    "spatial kernels must be square and odd-sized, got {}x{}",
                    k.nrows(),
                    k.ncols()
                )));
            }
        }
        Ok(Self { kernels })
    }
}

impl<T: Real> Params<T> for SpatialFilter<T> {
    fn count(&self) -> usize {
        self.kernels.iter().map(|k| k.len()).sum()
    }
    fn for_each(&self, f: &mut dyn FnMut(T)) {
        for k in &self.kernels {
            for v in k.iter() {
                f(*v);
            }
        }
    }
    fn for_each_mut(&mut self, f: &mut dyn FnMut(&mut T)) {
        for k in &mut self.kernels {
            for v in k.iter_mut() {
                f(v);
            }
        }
    }
}

/// Same-size correlation with clamp padding. Output channels per input
/// channel: the raw channel followed by the L filtered maps, C_pre = (L+1)·C.
pub fn spatial_apply<T: Real>(q: &GridImage<T>, filter: &SpatialFilter<T>) -> GridImage<T> {
    let (h, w, c_in) = (q.height(), q.width(), q.channels());
    let l = filter.kernels.len();
    let c_out = (l + 1) * c_in;
    let mut out = GridImage::zeros(h, w, c_out);
    for c in 0..c_in {
        for r in 0..h {
            for col in 0..w {
                out.set(r, col, c * (l + 1), q.get(r, col, c));
            }
        }
        for (li, ker) in filter.kernels.iter().enumerate() {
            let s = ker.nrows();
            let half = (s / 2) as i64;
            for r in 0..h {
                for col in 0..w {
                    let mut acc = T::zero();
                    for kr in 0..s {
                        for kc in 0..s {
                            let rr = (r as i64 + kr as i64 - half).clamp(0, h as i64 - 1) as usize;
                            let cc =
                                (col as i64 + kc as i64 - half).clamp(0, w as i64 - 1) as usize;
                            acc += ker[[kr, kc]] * q.get(rr, cc, c);
                        }
                    }
                    out.set(r, col, c * (l + 1) + 1 + li, acc);
                }
            }
        }
    }
    out
}

/// Write |H| of plane 0 as `<stem>.filter.png` / `.filter.lft` next to the
/// given checkpoint path.
pub fn filter_export<T: Real>(filter: &FourierFilter<T>, checkpoint_path: &std::path::Path) -> Result<()> {
    let mag = filter.magnitude_image(0);
    let stem = checkpoint_path.with_extension("");
    let png = stem.with_extension("filter.png");
    let lft = stem.with_extension("filter.lft");
    mag.save_png_normalized(&png)?;
    crate::lft::save_tensor(
        &lft,
        &[filter.m as u32, filter.m as u32],
        mag.data(),
    )?;
    Ok(())
}

/// Convenience used by equivariance tests: circularly shift every channel.
pub fn shift_all<T: Real>(img: &GridImage<T>, dr: i64, dc: i64) -> GridImage<T> {
    img.shift(dr, dc, BoundaryMode::Periodic)
}
