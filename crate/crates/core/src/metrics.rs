//! PSNR and SSIM.

use crate::grid::GridImage;
use crate::{Error, Real, Result};

/// Peak signal-to-noise ratio in dB. `peak = None` uses the reference range
/// max(ref) - min(ref), the convention for unbounded fields (FBP outputs,
/// convergence maps); pass `Some(1.0)` for natural [0, 1] images. Identical
/// images report `f64::INFINITY`.
pub fn psnr<T: Real>(x: &GridImage<T>, reference: &GridImage<T>, peak: Option<f64>) -> Result<f64> {
    if !x.same_shape(reference) {
        return Err(Error::Shape(format!(
            "psnr shapes differ: {}x{}x{} vs {}x{}x{}",
            x.height(),
            x.width(),
            x.channels(),
            reference.height(),
            reference.width(),
            reference.channels()
        )));
    }
    let peak = match peak {
        Some(p) => {
            if p <= 0.0 {
                return Err(Error::InvalidInput("peak must be positive".into()));
            }
            p
        }
        None => {
            let lo = reference.data().iter().cloned().fold(T::infinity(), T::min);
            let hi = reference.data().iter().cloned().fold(T::neg_infinity(), T::max);
            let span = (hi - lo).to_f64_c();
            if span > 0.0 {
                span
            } else {
                1.0
            }
        }
    };
    let mse = x
        .data()
        .iter()
        .zip(reference.data())
        .map(|(a, b)| (a.to_f64_c() - b.to_f64_c()).powi(2))
        .sum::<f64>()
        / x.data().len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn gaussian_window() -> [f64; SSIM_WINDOW * SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW * SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for r in 0..SSIM_WINDOW {
        for col in 0..SSIM_WINDOW {
            let d2 = (r as f64 - c).powi(2) + (col as f64 - c).powi(2);
            let v = (-d2 / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
            w[r * SSIM_WINDOW + col] = v;
            sum += v;
        }
    }
    for v in &mut w {
        *v /= sum;
    }
    w
}

/// Mean structural similarity over valid (fully interior) 11×11 Gaussian
/// windows, averaged over channels. `peak` follows the same convention as
/// [`psnr`].
pub fn ssim<T: Real>(x: &GridImage<T>, reference: &GridImage<T>, peak: Option<f64>) -> Result<f64> {
    if !x.same_shape(reference) {
        return Err(Error::Shape("ssim shapes differ".into()));
    }
    let (h, w, ch) = (x.height(), x.width(), x.channels());
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::InvalidInput(format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW} images, got {h}x{w}"
        )));
    }
    let l = match peak {
        Some(p) => p,
        None => {
            let lo = reference.data().iter().cloned().fold(T::infinity(), T::min);
            let hi = reference.data().iter().cloned().fold(T::neg_infinity(), T::max);
            let span = (hi - lo).to_f64_c();
            if span > 0.0 {
                span
            } else {
                1.0
            }
        }
    };
    let c1 = (SSIM_K1 * l).powi(2);
    let c2 = (SSIM_K2 * l).powi(2);
    let win = gaussian_window();
    let mut total = 0.0;
    let mut count = 0usize;
    for c in 0..ch {
        for r0 in 0..=(h - SSIM_WINDOW) {
            for c0 in 0..=(w - SSIM_WINDOW) {
                let (mut mx, mut my, mut mxx, mut myy, mut mxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for wr in 0..SSIM_WINDOW {
                    for wc in 0..SSIM_WINDOW {
                        let g = win[wr * SSIM_WINDOW + wc];
                        let a = x.get(r0 + wr, c0 + wc, c).to_f64_c();
                        let b = reference.get(r0 + wr, c0 + wc, c).to_f64_c();
                        mx += g * a;
                        my += g * b;
                        mxx += g * a * a;
                        myy += g * b * b;
                        mxy += g * a * b;
                    }
                }
                let vx = mxx - mx * mx;
                let vy = myy - my * my;
                let cov = mxy - mx * my;
                let val = ((2.0 * mx * my + c1) * (2.0 * cov + c2))
                    / ((mx * mx + my * my + c1) * (vx + vy + c2));
                total += val;
                count += 1;
            }
        }
    }
    Ok(total / count as f64)
}

/// Per-image metric rows plus arithmetic-mean aggregates.
#[derive(Debug, Default, Clone)]
pub struct MetricReport {
    pub rows: Vec<(String, f64, f64)>,
}

impl MetricReport {
    pub fn push(&mut self, name: impl Into<String>, psnr_db: f64, ssim: f64) {
        self.rows.push((name.into(), psnr_db, ssim));
    }

    pub fn mean_psnr(&self) -> f64 {
        self.rows.iter().map(|r| r.1).sum::<f64>() / self.rows.len().max(1) as f64
    }

    pub fn mean_ssim(&self) -> f64 {
        self.rows.iter().map(|r| r.2).sum::<f64>() / self.rows.len().max(1) as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedRng;
    use approx::assert_relative_eq;

    fn random_image(rng: &mut SeedRng, h: usize, w: usize) -> GridImage<f64> {
        GridImage::from_vec(h, w, 1, (0..h * w).map(|_| rng.uniform()).collect()).unwrap()
    }

    #[test]
    fn identical_images_infinite_psnr_unit_ssim() {
        let mut rng = SeedRng::new(1);
        let x = random_image(&mut rng, 16, 16);
        assert!(psnr(&x, &x, Some(1.0)).unwrap().is_infinite());
        assert_relative_eq!(ssim(&x, &x, Some(1.0)).unwrap(), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn uniform_offset_twenty_db() {
        let a = GridImage::from_vec(8, 8, 1, vec![0.5f64; 64]).unwrap();
        let b = GridImage::from_vec(8, 8, 1, vec![0.6f64; 64]).unwrap();
        assert_relative_eq!(psnr(&a, &b, Some(1.0)).unwrap(), 20.0, max_relative = 1e-12);
    }

    #[test]
    fn psnr_matches_direct_formula_and_is_symmetric() {
        let mut rng = SeedRng::new(2);
        let x = random_image(&mut rng, 12, 12);
        let y = random_image(&mut rng, 12, 12);
        let mse: f64 = x
            .data()
            .iter()
            .zip(y.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / 144.0;
        let expect = 10.0 * (1.0 / mse).log10();
        assert_relative_eq!(psnr(&x, &y, Some(1.0)).unwrap(), expect, max_relative = 1e-12);
        assert_relative_eq!(
            psnr(&x, &y, Some(1.0)).unwrap(),
            psnr(&y, &x, Some(1.0)).unwrap(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn psnr_monotone_in_noise() {
        let mut rng = SeedRng::new(3);
        let x = random_image(&mut rng, 32, 32);
        let mut last = f64::INFINITY;
        for sigma in [0.05, 0.1, 0.2] {
            let noisy = crate::ops::awgn(
                &x,
                &crate::ops::NoiseSpec::Sigma { sigma },
                &mut SeedRng::new(7),
            );
            let p = psnr(&noisy, &x, Some(1.0)).unwrap();
            assert!(p < last, "psnr must fall as sigma grows");
            last = p;
        }
    }

    #[test]
    fn ssim_anticorrelated_checkerboard_negative() {
        let n = 16;
        let mut a = GridImage::zeros(n, n, 1);
        for r in 0..n {
            for c in 0..n {
                a.set(r, c, 0, ((r + c) % 2) as f64);
            }
        }
        let b = a.map(|v| 1.0 - v);
        let val = ssim(&a, &b, Some(1.0)).unwrap();
        assert!(val < 0.0, "anticorrelated structure gives {val}");
    }

    #[test]
    fn ssim_constant_images_luminance_only() {
        let (m1, m2) = (0.3f64, 0.7f64);
        let a = GridImage::from_vec(12, 12, 1, vec![m1; 144]).unwrap();
        let b = GridImage::from_vec(12, 12, 1, vec![m2; 144]).unwrap();
        let c1 = (0.01f64).powi(2);
        let expect = (2.0 * m1 * m2 + c1) / (m1 * m1 + m2 * m2 + c1);
        assert_relative_eq!(ssim(&a, &b, Some(1.0)).unwrap(), expect, max_relative = 1e-12);
    }

    #[test]
    fn ssim_symmetric() {
        let mut rng = SeedRng::new(5);
        let x = random_image(&mut rng, 14, 14);
        let y = random_image(&mut rng, 14, 14);
        assert_relative_eq!(
            ssim(&x, &y, Some(1.0)).unwrap(),
            ssim(&y, &x, Some(1.0)).unwrap(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn small_image_rejected() {
        let a = GridImage::<f64>::zeros(8, 8, 1);
        assert!(ssim(&a, &a, Some(1.0)).is_err());
    }

    #[test]
    fn report_aggregates_are_means() {
        let mut rep = MetricReport::default();
        rep.push("a", 20.0, 0.8);
        rep.push("b", 30.0, 0.6);
        assert_relative_eq!(rep.mean_psnr(), 25.0);
        assert_relative_eq!(rep.mean_ssim(), 0.7);
    }
}
