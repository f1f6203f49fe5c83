//! Core library for LoFi-style local-field image reconstruction.
//!
//! The pipeline recovers each output pixel independently: the observed image
//! is optionally preprocessed by a learnable Fourier-domain filter, a local
//! neighborhood is sampled around the query coordinate with differentiable
//! bicubic interpolation, and a bank of branch MLPs plus a mixer MLP maps the
//! neighborhood to the target intensity. Because training draws mini-batches
//! of objects *and* pixels, the transient working set depends on batch and
//! patch sizes rather than image resolution.
//!
//! Modules follow the pipeline stages:
//! - [`grid`]: image container, coordinate convention, bicubic sampling.
//! - [`nn`]: plain and multi-branch MLPs with hand-derived backward passes.
//! - [`patch`]: circular offset geometry and iterative offset refinement.
//! - [`filter`]: learnable frequency-domain preprocessing.
//! - [`model`]: the composed reconstruction map, training, and inference.
//! - [`ops`]: linear forward operators and measurement simulators.
//! - [`admm`]: plug-and-play ADMM using any denoiser as the prior.
//! - [`metrics`]: PSNR / SSIM.

pub mod admm;
pub mod alloc_track;
pub mod fft;
pub mod filter;
pub mod grid;
pub mod lft;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod ops;
pub mod patch;
pub mod rng;

use num_traits::Float;

/// Scalar type the whole pipeline is generic over.
///
/// Models train in `f32`; gradient-check tests instantiate `f64`.
pub trait Real:
    Float
    + num_traits::FromPrimitive
    + num_traits::NumAssign
    + rustfft::FftNum
    + std::fmt::Display
    + std::iter::Sum
    + serde::Serialize
    + for<'de> serde::Deserialize<'de>
{
    /// Dtype code used by the LFT1 tensor framing (0 = f32, 1 = f64).
    const DTYPE: u8;

    fn from_f64_c(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 converts to Real")
    }
    fn to_f64_c(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).expect("Real converts to f64")
    }
}

impl Real for f32 {
    const DTYPE: u8 = 0;
}
impl Real for f64 {
    const DTYPE: u8 = 1;
}

/// Errors surfaced by the core library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error("solver did not converge: {0}")]
    NonConvergence(String),
    #[error("corrupt file: {0}")]
    Corrupt(String),
    #[error("unsupported checkpoint version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
