//! Procedural phantoms: desk-scale stand-ins for the real datasets.
//!
//! Three families: `ellipses` composes Shepp-Logan-like overlapping ellipses
//! in [0, 1]; `blobs` is a zero-mean Gaussian random field with a smooth
//! low-pass spectrum (a convergence-like field); `texture` is band-limited
//! noise with a few soft-edged shapes, rescaled into [0, 1].

use num_complex::Complex;

use crate::fft::ifft2;
use crate::grid::GridImage;
use crate::rng::SeedRng;
use crate::{Real, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhantomKind {
    Ellipses,
    Blobs,
    Texture,
}

impl std::str::FromStr for PhantomKind {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ellipses" => Ok(Self::Ellipses),
            "blobs" => Ok(Self::Blobs),
            "texture" => Ok(Self::Texture),
            other => Err(crate::Error::Config(format!("unknown phantom kind '{other}'"))),
        }
    }
}

pub fn phantom_gen<T: Real>(kind: PhantomKind, m: usize, rng: &mut SeedRng) -> Result<GridImage<T>> {
    match kind {
        PhantomKind::Ellipses => Ok(ellipses(m, rng)),
        PhantomKind::Blobs => gaussian_field(m, rng, 0.04),
        PhantomKind::Texture => texture(m, rng),
    }
}

fn ellipses<T: Real>(m: usize, rng: &mut SeedRng) -> GridImage<T> {
    // Work in centered coordinates on [-1, 1]².
    let mut acc = vec![0.0f64; m * m];
    // Enclosing head-like ellipse keeps content inside the scan disk.
    let mut shapes = vec![(0.0f64, 0.0, 0.82, 0.78, rng.uniform() * 0.4, 0.55 + 0.2 * rng.uniform())];
    let n_inner = 3 + rng.below(5);
    for _ in 0..n_inner {
        let cx = (rng.uniform() - 0.5) * 0.9;
        let cy = (rng.uniform() - 0.5) * 0.9;
        let a = 0.08 + 0.3 * rng.uniform();
        let b = 0.08 + 0.3 * rng.uniform();
        let phi = rng.uniform() * std::f64::consts::PI;
        let amp = (rng.uniform() - 0.4) * 0.8;
        shapes.push((cx, cy, a, b, phi, amp));
    }
    // Soft indicator with a ~1.5 pixel transition keeps edges band-limited.
    let edge = 1.5 * 2.0 / m as f64;
    for (cx, cy, a, b, phi, amp) in shapes {
        let (sp, cp) = phi.sin_cos();
        for r in 0..m {
            let y = 2.0 * (r as f64 + 0.5) / m as f64 - 1.0;
            for c in 0..m {
                let x = 2.0 * (c as f64 + 0.5) / m as f64 - 1.0;
                let u = (x - cx) * cp + (y - cy) * sp;
                let v = -(x - cx) * sp + (y - cy) * cp;
                let s = ((u / a).powi(2) + (v / b).powi(2)).sqrt() - 1.0;
                let dist = s * a.min(b); // approximate signed distance
                let t = (0.5 - dist / edge).clamp(0.0, 1.0);
                acc[r * m + c] += amp * t;
            }
        }
    }
    let data = acc.iter().map(|v| T::from_f64_c(v.clamp(0.0, 1.0))).collect();
    GridImage::from_vec_unchecked(m, m, 1, data)
}

/// Zero-mean Gaussian random field with spectrum exp(-(|k|/k0)²), scaled to
/// the requested standard deviation.
fn gaussian_field<T: Real>(m: usize, rng: &mut SeedRng, std_target: f64) -> Result<GridImage<T>> {
    let field = smooth_field(m, rng, m as f64 / 12.0)?;
    let mean = field.iter().sum::<f64>() / field.len() as f64;
    let mut centered: Vec<f64> = field.iter().map(|v| v - mean).collect();
    let std = (centered.iter().map(|v| v * v).sum::<f64>() / centered.len() as f64).sqrt();
    if std > 0.0 {
        let s = std_target / std;
        centered.iter_mut().for_each(|v| *v *= s);
    }
    Ok(GridImage::from_vec_unchecked(
        m,
        m,
        1,
        centered.into_iter().map(T::from_f64_c).collect(),
    ))
}

fn smooth_field(m: usize, rng: &mut SeedRng, k0: f64) -> Result<Vec<f64>> {
    let mut spec = vec![Complex::new(0.0f64, 0.0); m * m];
    for r in 0..m {
        let ky = crate::fft::freq_index(r, m) as f64;
        for c in 0..m {
            let kx = crate::fft::freq_index(c, m) as f64;
            let w = (-((kx * kx + ky * ky) / (k0 * k0))).exp();
            spec[r * m + c] = Complex::new(rng.normal() * w, rng.normal() * w);
        }
    }
    spec[0] = Complex::new(0.0, 0.0);
    let field = ifft2(&spec, m)?;
    // Real part of a non-Hermitian spectrum is still a Gaussian field with
    // the same smooth covariance.
    let scale = m as f64; // undo the 1/M² inverse scaling up to O(1)
    Ok(field.iter().map(|v| v.re * scale).collect())
}

fn texture<T: Real>(m: usize, rng: &mut SeedRng) -> Result<GridImage<T>> {
    let base = smooth_field(m, rng, m as f64 / 10.0)?;
    let mut acc = base;
    // A few soft-edged elliptical bumps provide edge structure.
    let shapes = 2 + rng.below(3);
    let std0 = (acc.iter().map(|v| v * v).sum::<f64>() / acc.len() as f64).sqrt().max(1e-9);
    for _ in 0..shapes {
        let cx = rng.uniform();
        let cy = rng.uniform();
        let a = 0.08 + 0.2 * rng.uniform();
        let b = 0.08 + 0.2 * rng.uniform();
        let amp = (rng.uniform() - 0.5) * 4.0 * std0;
        let edge = 0.04;
        for r in 0..m {
            let y = (r as f64 + 0.5) / m as f64;
            for c in 0..m {
                let x = (c as f64 + 0.5) / m as f64;
                let d = ((x - cx) / a).powi(2) + ((y - cy) / b).powi(2);
                // Smooth step from 1 inside to 0 outside.
                let t = ((1.0 - d) / edge).clamp(-1.0, 1.0);
                acc[r * m + c] += amp * 0.5 * (1.0 + t);
            }
        }
    }
    let lo = acc.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = acc.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(1e-9);
    let data = acc
        .iter()
        .map(|v| T::from_f64_c(0.05 + 0.9 * (v - lo) / span))
        .collect();
    Ok(GridImage::from_vec_unchecked(m, m, 1, data))
}
