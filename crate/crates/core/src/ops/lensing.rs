//! Weak-lensing planar forward model and the naive Kaiser-Squires inversion.
//!
//! The shear field is the convergence filtered by the unit-modulus Fourier
//! multiplier D = (kx² - ky² + 2i·kx·ky)/(kx² + ky²), with D(0,0) := 1 so the
//! mean passes through. Because |D| = 1 off DC, multiplying by the conjugate
//! inverts exactly; the naive inversion therefore returns the convergence
//! plus filtered noise, with no smoothing step.

use num_complex::Complex;

use crate::fft::{fft2, fft2_complex, freq_index, ifft2};
use crate::grid::GridImage;
use crate::{Error, Real, Result};

/// The lensing multiplier over the M×M FFT frequency grid.
pub fn ks_multiplier<T: Real>(m: usize) -> Result<Vec<Complex<T>>> {
    crate::fft::check_pow2(m, m)?;
    let mut d = vec![Complex::new(T::one(), T::zero()); m * m];
    for r in 0..m {
        let ky = freq_index(r, m) as f64;
        for c in 0..m {
            let kx = freq_index(c, m) as f64;
            let denom = kx * kx + ky * ky;
            if denom != 0.0 {
                d[r * m + c] = Complex::new(
                    T::from_f64_c((kx * kx - ky * ky) / denom),
                    T::from_f64_c(2.0 * kx * ky / denom),
                );
            }
        }
    }
    Ok(d)
}

/// Convergence (1 channel) to complex shear stored as two real channels
/// (Re, Im).
pub fn ks_forward<T: Real>(kappa: &GridImage<T>) -> Result<GridImage<T>> {
    if kappa.channels() != 1 || kappa.height() != kappa.width() {
        return Err(Error::Shape("ks_forward expects a square 1-channel field".into()));
    }
    let m = kappa.height();
    let d = ks_multiplier::<T>(m)?;
    let spec = fft2(kappa.data(), m)?;
    let prod: Vec<Complex<T>> = spec.iter().zip(d.iter()).map(|(a, b)| a * b).collect();
    let gamma = ifft2(&prod, m)?;
    let mut out = GridImage::zeros(m, m, 2);
    for (i, g) in gamma.iter().enumerate() {
        out.data_mut()[2 * i] = g.re;
        out.data_mut()[2 * i + 1] = g.im;
    }
    Ok(out)
}

/// Naive inversion: multiply the shear spectrum by the conjugate multiplier
/// and keep the real part.
pub fn ks_inverse<T: Real>(gamma: &GridImage<T>) -> Result<GridImage<T>> {
    if gamma.channels() != 2 || gamma.height() != gamma.width() {
        return Err(Error::Shape("ks_inverse expects a square 2-channel shear field".into()));
    }
    let m = gamma.height();
    let d = ks_multiplier::<T>(m)?;
    let field: Vec<Complex<T>> = (0..m * m)
        .map(|i| Complex::new(gamma.data()[2 * i], gamma.data()[2 * i + 1]))
        .collect();
    let spec = fft2_complex(&field, m)?;
    let prod: Vec<Complex<T>> = spec.iter().zip(d.iter()).map(|(a, b)| a * b.conj()).collect();
    let kappa = ifft2(&prod, m)?;
    let data = kappa.iter().map(|v| v.re).collect();
    Ok(GridImage::from_vec_unchecked(m, m, 1, data))
}

/// Per-pixel shear-noise standard deviation
/// `σ_i = σ_e / sqrt((θ²/n_grid²)·n_gal)` with θ in arcmin and n_gal in
/// galaxies per arcmin².
pub fn ks_noise_sigma(sigma_e: f64, theta_arcmin: f64, n_grid: usize, n_gal: f64) -> f64 {
    assert!(sigma_e > 0.0 && theta_arcmin > 0.0 && n_grid > 0 && n_gal > 0.0);
    sigma_e / ((theta_arcmin * theta_arcmin / (n_grid * n_grid) as f64) * n_gal).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use crate::rng::SeedRng;

    #[test]
    fn multiplier_values_by_substitution() {
        let m = 8;
        let d = ks_multiplier::<f64>(m).unwrap();
        let at = |kx: i64, ky: i64| {
            let r = ky.rem_euclid(m as i64) as usize;
            let c = kx.rem_euclid(m as i64) as usize;
            d[r * m + c]
        };
        // (1, 0) -> 1; (0, 1) -> -1; (1, 1) -> i; DC -> 1 by convention.
        assert_relative_eq!(at(1, 0).re, 1.0, max_relative = 1e-14);
        assert!(at(1, 0).im.abs() < 1e-14);
        assert_relative_eq!(at(0, 1).re, -1.0, max_relative = 1e-14);
        assert_relative_eq!(at(1, 1).im, 1.0, max_relative = 1e-14);
        assert!(at(1, 1).re.abs() < 1e-14);
        assert_relative_eq!(at(0, 0).re, 1.0, max_relative = 1e-14);
    }

    #[test]
    fn unit_modulus_off_dc() {
        let m = 16;
        let d = ks_multiplier::<f64>(m).unwrap();
        for (i, v) in d.iter().enumerate() {
            assert_relative_eq!(v.norm(), 1.0, max_relative = 1e-12, epsilon = 1e-12);
            let _ = i;
        }
    }

    #[test]
    fn round_trip_exact() {
        let mut rng = SeedRng::new(7);
        let m = 32;
        let kappa =
            GridImage::from_vec(m, m, 1, (0..m * m).map(|_| rng.normal()).collect::<Vec<f64>>())
                .unwrap();
        let gamma = ks_forward(&kappa).unwrap();
        let back = ks_inverse(&gamma).unwrap();
        for (a, b) in kappa.data().iter().zip(back.data().iter()) {
            assert_relative_eq!(a, b, max_relative = 1e-10, epsilon = 1e-12);
        }
    }

    #[test]
    fn constant_field_passes_dc() {
        let m = 16;
        let kappa = GridImage::from_vec(m, m, 1, vec![0.37f64; m * m]).unwrap();
        let gamma = ks_forward(&kappa).unwrap();
        for i in 0..m * m {
            assert_relative_eq!(gamma.data()[2 * i], 0.37, max_relative = 1e-10);
            assert!(gamma.data()[2 * i + 1].abs() < 1e-12);
        }
    }

    #[test]
    fn single_frequency_spectral_bookkeeping() {
        // kappa = cos(2π(x+y)/M): spectrum at ±(1,1) where D = i, so the
        // shear is i·cos(...) - zero real channel, cosine imaginary channel.
        let m = 16;
        let mut kappa = GridImage::zeros(m, m, 1);
        for r in 0..m {
            for c in 0..m {
                kappa.set(
                    r,
                    c,
                    0,
                    (2.0 * std::f64::consts::PI * (r + c) as f64 / m as f64).cos(),
                );
            }
        }
        let gamma = ks_forward(&kappa).unwrap();
        for r in 0..m {
            for c in 0..m {
                let want = kappa.get(r, c, 0);
                assert!(gamma.get(r, c, 0).abs() < 1e-10);
                assert_relative_eq!(gamma.get(r, c, 1), want, max_relative = 1e-9, epsilon = 1e-11);
            }
        }
    }

    #[test]
    fn noise_sigma_published_constants() {
        // sigma_e = 0.37, theta = 300 arcmin, 128 grid, 30 gal/arcmin².
        let s = ks_noise_sigma(0.37, 300.0, 128, 30.0);
        assert_relative_eq!(s, 0.0288, max_relative = 2e-3);
        // Doubling the field side halves the per-pixel noise.
        let s2 = ks_noise_sigma(0.37, 600.0, 128, 30.0);
        assert_relative_eq!(s2, s / 2.0, max_relative = 1e-12);
        // More galaxies, less noise.
        assert!(ks_noise_sigma(0.37, 300.0, 128, 300.0) < s);
    }
}
