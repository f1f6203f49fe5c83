//! Linear forward operators, measurement simulators, and their data-proximal
//! solves.

pub mod ct;
pub mod lensing;
pub mod masks;
pub mod phantom;

pub use ct::{fbp, radon, uniform_angles, FbpFilter, Sinogram};
pub use lensing::{ks_forward, ks_inverse, ks_multiplier, ks_noise_sigma};
pub use masks::{uv_mask_gen, FourierMaskOp, InpaintOp};
pub use phantom::{phantom_gen, PhantomKind};

use crate::grid::GridImage;
use crate::rng::SeedRng;
use crate::{Real, Result};

/// Additive white Gaussian noise, either at a fixed per-entry sigma or at a
/// target SNR in dB.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseSpec {
    Sigma { sigma: f64 },
    SnrDb { snr_db: f64 },
}

impl NoiseSpec {
    /// Resolve the per-entry sigma for a signal with the given energy.
    pub fn sigma_for(&self, norm2: f64, numel: usize) -> f64 {
        match *self {
            NoiseSpec::Sigma { sigma } => sigma,
            NoiseSpec::SnrDb { snr_db } => {
                norm2 / (numel as f64).sqrt() / 10f64.powf(snr_db / 20.0)
            }
        }
    }
}

/// i.i.d. Gaussian noise over every entry. In SNR mode the sigma is
/// `||x||₂ / (sqrt(numel) · 10^(SNR/20))`.
pub fn awgn<T: Real>(x: &GridImage<T>, spec: &NoiseSpec, rng: &mut SeedRng) -> GridImage<T> {
    let norm2 = x.data().iter().map(|v| v.to_f64_c().powi(2)).sum::<f64>().sqrt();
    let sigma = spec.sigma_for(norm2, x.data().len());
    let mut out = x.clone();
    if sigma > 0.0 {
        for v in out.data_mut() {
            *v += T::from_f64_c(rng.normal() * sigma);
        }
    }
    out
}

/// A linear map between image-shaped spaces, with simulation and an optional
/// closed-form quadratic data solve `(A*A + α)⁻¹(A*q + αz)`.
pub trait LinearOperator<T: Real>: Send + Sync {
    /// Forward map f -> q.
    fn apply(&self, f: &GridImage<T>) -> Result<GridImage<T>>;
    /// Adjoint with respect to the real inner products on both sides.
    fn adjoint(&self, q: &GridImage<T>) -> Result<GridImage<T>>;
    /// Shape of the reconstruction domain (h, w, c).
    fn domain_shape(&self) -> (usize, usize, usize);

    /// Simulated measurement: apply, then noise.
    fn simulate(
        &self,
        f: &GridImage<T>,
        noise: &NoiseSpec,
        rng: &mut SeedRng,
    ) -> Result<GridImage<T>> {
        Ok(awgn(&self.apply(f)?, noise, rng))
    }

    /// Closed-form data-proximal solve when one exists; `None` means the
    /// caller falls back to conjugate gradients on the normal equations.
    fn data_prox(&self, _z: &GridImage<T>, _q: &GridImage<T>, _alpha: T) -> Option<Result<GridImage<T>>> {
        None
    }
}

/// Identity observation (plain denoising).
pub struct IdentityOp {
    pub shape: (usize, usize, usize),
}

impl<T: Real> LinearOperator<T> for IdentityOp {
    fn apply(&self, f: &GridImage<T>) -> Result<GridImage<T>> {
        Ok(f.clone())
    }
    fn adjoint(&self, q: &GridImage<T>) -> Result<GridImage<T>> {
        Ok(q.clone())
    }
    fn domain_shape(&self) -> (usize, usize, usize) {
        self.shape
    }
    fn data_prox(&self, z: &GridImage<T>, q: &GridImage<T>, alpha: T) -> Option<Result<GridImage<T>>> {
        let denom = T::one() + alpha;
        let data = q
            .data()
            .iter()
            .zip(z.data().iter())
            .map(|(&qi, &zi)| (qi + alpha * zi) / denom)
            .collect();
        Some(Ok(GridImage::from_vec_unchecked(
            q.height(),
            q.width(),
            q.channels(),
            data,
        )))
    }
}
