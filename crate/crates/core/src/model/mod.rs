//! The composed reconstruction map: preprocessing filter, sampling geometry,
//! MultiMLP core, and the optional coordinate-transform network, together
//! with training and arbitrary-resolution inference.
//!
//! Every output pixel is computed independently from a local neighborhood of
//! the (preprocessed) observation, so inference runs at any target grid and
//! training draws mini-batches of objects and pixels. The transient working
//! set of a training step is set by the batch shapes, the patch size, and
//! the layer widths - not by the image resolution.

mod checkpoint;
mod train;

pub use checkpoint::{
    load_checkpoint, peek_config, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use train::{train_loop, train_step, Dataset, LossKind, TrainConfig, TrainLogRow};

use ndarray::Array2;

use crate::alloc_track::{record, scratch_arr2};
use crate::filter::{fourier_apply, spatial_apply, FourierCache, FourierFilter, SpatialFilter};
use crate::grid::{BoundaryMode, Coord, GridImage};
use crate::nn::{AdamState, Mlp, MlpCache, MultiMlp, MultiMlpCache, Params};
use crate::patch::{
    ccpg_backward, ccpg_forward, extract_batch, extract_batch_backward, CcpgCache, CcpgStack,
    ExtractGrads, PatchOffsets,
};
use crate::rng::SeedRng;
use crate::{Error, Real, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum GeometryMode {
    /// Fixed circular offsets.
    Fixed,
    /// Offsets trained jointly with the network.
    Learnable,
    /// Per-pixel iterative offset prediction with `stages` networks.
    Ccpg { stages: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterMode {
    None,
    Fourier,
    Spatial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

/// Affine input normalization recorded with the model: the network sees
/// (q - offset) / scale and predictions are mapped back.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Normalization {
    pub offset: f64,
    pub scale: f64,
}

fn default_rings() -> usize {
    9
}
fn default_widths() -> Vec<usize> {
    vec![370, 370, 370]
}
fn default_branch_out() -> usize {
    100
}
fn default_ccpg_hidden() -> Vec<usize> {
    vec![256, 256]
}
fn default_inr_hidden() -> Vec<usize> {
    vec![128, 128]
}
fn default_geometry() -> GeometryMode {
    GeometryMode::Fixed
}
fn default_filter() -> FilterMode {
    FilterMode::Fourier
}
fn default_channels() -> usize {
    1
}
fn default_boundary() -> BoundaryMode {
    BoundaryMode::Clamp
}
fn default_precision() -> Precision {
    Precision::F32
}
fn default_spatial_size() -> usize {
    5
}
fn default_spatial_count() -> usize {
    3
}

/// Full architectural configuration. Defaults reproduce the 9-branch,
/// width-370 layout with K = 81 circular samples and a Fourier filter at
/// 128x128.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LofiConfig {
    pub rings: usize,
    pub points_per_ring: usize,
    /// Ring spacing in normalized units (one input-pixel pitch by default).
    pub delta: f64,
    pub geometry: GeometryMode,
    /// Bound on CCPG residual offsets, normalized units.
    pub rho_max: f64,
    pub branch_hidden: Vec<usize>,
    pub branch_out: usize,
    pub mixer_hidden: Vec<usize>,
    pub ccpg_hidden: Vec<usize>,
    pub filter: FilterMode,
    /// Side length the Fourier filter is bound to (power of two).
    pub filter_resolution: usize,
    /// One filter plane per channel instead of a shared plane.
    pub filter_per_channel: bool,
    pub spatial_size: usize,
    pub spatial_count: usize,
    pub channels: usize,
    pub inr_enabled: bool,
    pub inr_hidden: Vec<usize>,
    pub boundary: BoundaryMode,
    pub precision: Precision,
    pub normalization: Option<Normalization>,
}

impl Default for LofiConfig {
    fn default() -> Self {
        Self {
            rings: default_rings(),
            points_per_ring: default_rings(),
            delta: 0.0,
            geometry: default_geometry(),
            rho_max: 0.0,
            branch_hidden: default_widths(),
            branch_out: default_branch_out(),
            mixer_hidden: default_widths(),
            ccpg_hidden: default_ccpg_hidden(),
            filter: default_filter(),
            filter_resolution: 0,
            filter_per_channel: false,
            spatial_size: default_spatial_size(),
            spatial_count: default_spatial_count(),
            channels: default_channels(),
            inr_enabled: false,
            inr_hidden: default_inr_hidden(),
            boundary: default_boundary(),
            precision: default_precision(),
            normalization: None,
        }
    }
}

impl LofiConfig {
    pub fn k(&self) -> usize {
        self.rings * self.points_per_ring
    }

    /// Channels after preprocessing.
    pub fn c_pre(&self) -> usize {
        match self.filter {
            FilterMode::None => self.channels,
            FilterMode::Fourier => 3 * self.channels,
            FilterMode::Spatial => (self.spatial_count + 1) * self.channels,
        }
    }

    /// Fill resolution-dependent defaults from the observation side: delta
    /// becomes one pixel pitch, rho_max spans the outermost ring, and the
    /// Fourier filter binds to the data resolution.
    pub fn resolve_auto(&mut self, m: usize) {
        if self.delta <= 0.0 {
            self.delta = 1.0 / m as f64;
        }
        if self.rho_max <= 0.0 {
            self.rho_max = self.rings as f64 * self.delta;
        }
        if self.filter == FilterMode::Fourier && self.filter_resolution == 0 {
            self.filter_resolution = m;
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rings == 0 || self.points_per_ring == 0 {
            return Err(Error::Config("rings and points_per_ring must be >= 1".into()));
        }
        if self.delta <= 0.0 || self.rho_max <= 0.0 {
            return Err(Error::Config("delta and rho_max must be positive".into()));
        }
        if self.channels == 0 {
            return Err(Error::Config("channels must be >= 1".into()));
        }
        if self.k() % self.rings != 0 {
            return Err(Error::Config("sample count must split evenly over branches".into()));
        }
        if self.filter == FilterMode::Fourier {
            crate::fft::check_pow2(self.filter_resolution, self.filter_resolution)?;
        }
        if self.filter == FilterMode::Spatial && self.spatial_size % 2 == 0 {
            return Err(Error::Config("spatial kernels must be odd-sized".into()));
        }
        Ok(())
    }
}

/// Sinusoidal coordinate features for the coordinate-transform network:
/// six octaves of sin/cos per axis plus the raw coordinates.
pub const INR_FREQS: [f64; 6] = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0];
pub const INR_EMBED_DIM: usize = 4 * INR_FREQS.len() + 2;

pub(crate) fn inr_embed<T: Real>(coords: &[Coord<T>]) -> Array2<T> {
    let mut out = scratch_arr2::<T>(coords.len(), INR_EMBED_DIM);
    let two_pi = 2.0 * std::f64::consts::PI;
    for (i, c) in coords.iter().enumerate() {
        let (x, y) = (c.x.to_f64_c(), c.y.to_f64_c());
        for (fi, f) in INR_FREQS.iter().enumerate() {
            out[[i, 4 * fi]] = T::from_f64_c((two_pi * f * x).sin());
            out[[i, 4 * fi + 1]] = T::from_f64_c((two_pi * f * x).cos());
            out[[i, 4 * fi + 2]] = T::from_f64_c((two_pi * f * y).sin());
            out[[i, 4 * fi + 3]] = T::from_f64_c((two_pi * f * y).cos());
        }
        out[[i, INR_EMBED_DIM - 2]] = c.x;
        out[[i, INR_EMBED_DIM - 1]] = c.y;
    }
    out
}

/// Residual coordinate transform x̃ = x + head(embed(x)); the head's final
/// layer is zero-initialized so the map starts as the identity.
#[derive(Debug, Clone)]
pub struct InrNet<T> {
    pub head: Mlp<T>,
}

pub(crate) struct InrCache<T> {
    mlp: MlpCache<T>,
}

impl<T: Real> InrNet<T> {
    pub fn init(hidden: &[usize], rng: &mut SeedRng) -> Self {
        let mut dims = vec![INR_EMBED_DIM];
        dims.extend_from_slice(hidden);
        dims.push(2);
        let mut head = Mlp::he_init(&dims, rng);
        head.zero_last_layer();
        Self { head }
    }

    pub(crate) fn map_coords(
        &self,
        coords: &[Coord<T>],
    ) -> Result<(Vec<Coord<T>>, InrCache<T>)> {
        let embed = inr_embed(coords);
        let (delta, mlp) = self.head.forward(embed)?;
        record(coords.len() * 2);
        let mapped = coords
            .iter()
            .enumerate()
            .map(|(i, c)| Coord::new(c.x + delta[[i, 0]], c.y + delta[[i, 1]]))
            .collect();
        Ok((mapped, InrCache { mlp }))
    }

    pub(crate) fn backward(&self, cache: &InrCache<T>, grad_coords: &Array2<T>) -> Result<Mlp<T>> {
        let (grads, _) = self.head.backward(&cache.mlp, grad_coords)?;
        Ok(grads)
    }
}

impl<T: Real> Params<T> for InrNet<T> {
    fn count(&self) -> usize {
        self.head.count()
    }
    fn for_each(&self, f: &mut dyn FnMut(T)) {
        self.head.for_each(f)
    }
    fn for_each_mut(&mut self, f: &mut dyn FnMut(&mut T)) {
        self.head.for_each_mut(f)
    }
}

/// Trainable state: filter, offsets, optional CCPG stack, the MultiMLP core,
/// optional coordinate transform, and one Adam state per group.
pub struct LofiModel<T: Real> {
    pub config: LofiConfig,
    pub offsets: PatchOffsets<T>,
    pub ccpg: Option<CcpgStack<T>>,
    pub core: MultiMlp<T>,
    pub filter: Option<FourierFilter<T>>,
    pub spatial: Option<SpatialFilter<T>>,
    pub inr: Option<InrNet<T>>,
    pub opt_core: AdamState<T>,
    pub opt_offsets: AdamState<T>,
    pub opt_ccpg: Option<AdamState<T>>,
    pub opt_filter: Option<AdamState<T>>,
    pub opt_inr: Option<AdamState<T>>,
    /// Completed optimizer updates (one per pixel mini-batch).
    pub step: u64,
}

impl<T: Real> LofiModel<T> {
    pub fn new(config: LofiConfig, rng: &mut SeedRng) -> Result<Self> {
        config.validate()?;
        let k = config.k();
        let c_pre = config.c_pre();
        let mut offsets = PatchOffsets::init_circular(
            config.rings,
            config.points_per_ring,
            T::from_f64_c(config.delta),
        );
        offsets.learnable = config.geometry == GeometryMode::Learnable;
        let core = MultiMlp::build(
            k * c_pre,
            config.rings,
            &config.branch_hidden,
            config.branch_out,
            &config.mixer_hidden,
            config.channels,
            rng,
        )?;
        let ccpg = match config.geometry {
            GeometryMode::Ccpg { stages } => Some(CcpgStack::init(
                stages,
                k,
                c_pre,
                &config.ccpg_hidden,
                T::from_f64_c(config.rho_max),
                rng,
            )),
            _ => None,
        };
        let filter = match config.filter {
            FilterMode::Fourier => Some(FourierFilter::identity(
                config.filter_resolution,
                if config.filter_per_channel {
                    config.channels
                } else {
                    1
                },
            )?),
            _ => None,
        };
        let spatial = match config.filter {
            FilterMode::Spatial => {
                let s = config.spatial_size;
                let kernels = (0..config.spatial_count)
                    .map(|_| {
                        Array2::from_shape_fn((s, s), |_| {
                            T::from_f64_c(rng.normal() / (s * s) as f64)
                        })
                    })
                    .collect();
                Some(SpatialFilter::new(kernels)?)
            }
            _ => None,
        };
        let inr = if config.inr_enabled {
            Some(InrNet::init(&config.inr_hidden, rng))
        } else {
            None
        };
        let opt_core = AdamState::new(core.count());
        let opt_offsets = AdamState::new(offsets.count());
        let opt_ccpg = ccpg.as_ref().map(|c| AdamState::new(c.count()));
        let opt_filter = filter.as_ref().map(|f| AdamState::new(Params::<T>::count(f)));
        let opt_inr = inr.as_ref().map(|i| AdamState::new(i.count()));
        Ok(Self {
            config,
            offsets,
            ccpg,
            core,
            filter,
            spatial,
            inr,
            opt_core,
            opt_offsets,
            opt_ccpg,
            opt_filter,
            opt_inr,
            step: 0,
        })
    }

    pub fn param_count(&self) -> usize {
        let mut n = self.core.count() + if self.offsets.learnable { self.offsets.count() } else { 0 };
        if let Some(c) = &self.ccpg {
            n += c.count();
        }
        if let Some(f) = &self.filter {
            n += Params::<T>::count(f);
        }
        if let Some(i) = &self.inr {
            n += i.count();
        }
        n
    }

    fn normalize_in(&self, q: &GridImage<T>) -> GridImage<T> {
        match self.config.normalization {
            None => q.clone(),
            Some(n) => {
                let off = T::from_f64_c(n.offset);
                let sc = T::from_f64_c(n.scale);
                q.map(|v| (v - off) / sc)
            }
        }
    }

    pub(crate) fn denormalize_out(&self, v: T) -> T {
        match self.config.normalization {
            None => v,
            Some(n) => v * T::from_f64_c(n.scale) + T::from_f64_c(n.offset),
        }
    }

    pub(crate) fn normalize_target(&self, v: T) -> T {
        match self.config.normalization {
            None => v,
            Some(n) => (v - T::from_f64_c(n.offset)) / T::from_f64_c(n.scale),
        }
    }
}

/// Preprocessed observation plus whatever the filter backward needs.
pub struct Preprocessed<T> {
    pub image: GridImage<T>,
    pub(crate) fourier: Option<FourierCache<T>>,
}

/// Apply the configured preprocessing (and input normalization) to an
/// observation; pass-through when no filter is configured.
pub fn preprocess<T: Real>(model: &LofiModel<T>, q: &GridImage<T>) -> Result<GridImage<T>> {
    Ok(preprocess_cached(model, q)?.image)
}

pub(crate) fn preprocess_cached<T: Real>(
    model: &LofiModel<T>,
    q: &GridImage<T>,
) -> Result<Preprocessed<T>> {
    if q.channels() != model.config.channels {
        return Err(Error::Shape(format!(
            "observation has {} channels, model expects {}",
            q.channels(),
            model.config.channels
        )));
    }
    let q = model.normalize_in(q);
    match model.config.filter {
        FilterMode::None => Ok(Preprocessed {
            image: q,
            fourier: None,
        }),
        FilterMode::Fourier => {
            let f = model.filter.as_ref().expect("fourier filter built");
            let (image, cache) = fourier_apply(&q, f)?;
            Ok(Preprocessed {
                image,
                fourier: Some(cache),
            })
        }
        FilterMode::Spatial => {
            let s = model.spatial.as_ref().expect("spatial filter built");
            Ok(Preprocessed {
                image: spatial_apply(&q, s),
                fourier: None,
            })
        }
    }
}

pub(crate) struct ForwardCache<T> {
    /// Coordinates after the optional INR map.
    pub centers: Vec<Coord<T>>,
    pub inr: Option<InrCache<T>>,
    /// Absolute sample coordinates (fixed/learnable geometry only).
    pub sample_coords: Option<Vec<Coord<T>>>,
    pub ccpg: Option<CcpgCache<T>>,
    pub core: MultiMlpCache<T>,
}

pub(crate) fn forward_cached<T: Real>(
    model: &LofiModel<T>,
    pre: &GridImage<T>,
    coords: &[Coord<T>],
) -> Result<(Array2<T>, ForwardCache<T>)> {
    if pre.channels() != model.config.c_pre() {
        return Err(Error::Shape(format!(
            "preprocessed image has {} channels, model expects {}",
            pre.channels(),
            model.config.c_pre()
        )));
    }
    let (centers, inr_cache) = match &model.inr {
        Some(inr) => {
            let (mapped, cache) = inr.map_coords(coords)?;
            (mapped, Some(cache))
        }
        None => {
            record(coords.len() * 2);
            (coords.to_vec(), None)
        }
    };
    let boundary = model.config.boundary;
    let (patch, sample_coords, ccpg_cache) = match &model.ccpg {
        Some(stack) => {
            let (p, cache) = ccpg_forward(pre, &centers, &model.offsets, stack, boundary)?;
            (p, None, Some(cache))
        }
        None => {
            let (p, coords) = extract_batch(pre, &centers, &model.offsets.offsets, boundary);
            (p, Some(coords), None)
        }
    };
    let (y, core_cache) = model.core.forward(&patch)?;
    Ok((
        y,
        ForwardCache {
            centers,
            inr: inr_cache,
            sample_coords,
            ccpg: ccpg_cache,
            core: core_cache,
        },
    ))
}

/// Evaluate the model at arbitrary continuous coordinates on a preprocessed
/// observation. Returns `[B][C]` in the network's output scale.
pub fn lofi_forward<T: Real>(
    model: &LofiModel<T>,
    pre: &GridImage<T>,
    coords: &[Coord<T>],
) -> Result<Array2<T>> {
    Ok(forward_cached(model, pre, coords)?.0)
}

/// Per-task gradient accumulator; image-domain filter gradients live in an
/// untracked buffer sized by the observation.
pub(crate) struct GradAccum<T> {
    pub core: MultiMlp<T>,
    pub offsets: Option<Array2<T>>,
    pub ccpg: Option<Vec<Mlp<T>>>,
    pub inr: Option<Mlp<T>>,
    pub image: Option<Vec<T>>,
}

impl<T: Real> GradAccum<T> {
    pub fn new(model: &LofiModel<T>, image_len: Option<usize>) -> Self {
        Self {
            core: model.core.zeros_like(),
            offsets: if model.offsets.learnable {
                Some(Array2::zeros((model.offsets.k(), 2)))
            } else {
                None
            },
            ccpg: model
                .ccpg
                .as_ref()
                .map(|s| s.stages.iter().map(Mlp::zeros_like).collect()),
            inr: model.inr.as_ref().map(|i| i.head.zeros_like()),
            image: image_len.map(|n| vec![T::zero(); n]),
        }
    }
}

/// Reverse pass for one forward batch; accumulates into `acc`.
pub(crate) fn backward_into<T: Real>(
    model: &LofiModel<T>,
    pre: &GridImage<T>,
    cache: &ForwardCache<T>,
    upstream: &Array2<T>,
    acc: &mut GradAccum<T>,
) -> Result<()> {
    let grad_patch = model.core.backward_acc(&cache.core, upstream, &mut acc.core)?;

    let boundary = model.config.boundary;
    let need_centers = model.inr.is_some();
    let mut grad_centers = if need_centers {
        Some(scratch_arr2::<T>(cache.centers.len(), 2))
    } else {
        None
    };

    match (&model.ccpg, &cache.ccpg) {
        (Some(stack), Some(ccpg_cache)) => {
            let stage_acc = acc.ccpg.as_mut().expect("ccpg accumulator");
            ccpg_backward(
                pre,
                &cache.centers,
                &model.offsets,
                stack,
                boundary,
                ccpg_cache,
                grad_patch,
                stage_acc,
                grad_centers.as_mut(),
                acc.image.as_deref_mut(),
            )?;
        }
        _ => {
            let coords = cache
                .sample_coords
                .as_ref()
                .expect("fixed geometry keeps sample coords");
            extract_batch_backward(
                pre,
                coords,
                model.offsets.k(),
                boundary,
                &grad_patch,
                ExtractGrads {
                    centers: grad_centers.as_mut(),
                    offsets: acc.offsets.as_mut(),
                    image: acc.image.as_deref_mut(),
                },
            );
        }
    }

    if let (Some(inr), Some(inr_cache), Some(gc)) =
        (&model.inr, &cache.inr, grad_centers.as_ref())
    {
        if let Some(dst) = acc.inr.as_mut() {
            inr.head.backward_acc(&inr_cache.mlp, gc, dst)?;
        }
    }
    Ok(())
}

/// Reconstruct an image at the requested resolution by evaluating every
/// pixel center in chunks of `pixel_batch`; the result is independent of the
/// chunk size.
pub fn infer_image<T: Real>(
    model: &LofiModel<T>,
    q: &GridImage<T>,
    out_height: usize,
    out_width: usize,
    pixel_batch: usize,
) -> Result<GridImage<T>> {
    let pre = preprocess(model, q)?;
    infer_on_preprocessed(model, &pre, out_height, out_width, pixel_batch)
}

pub(crate) fn infer_on_preprocessed<T: Real>(
    model: &LofiModel<T>,
    pre: &GridImage<T>,
    out_height: usize,
    out_width: usize,
    pixel_batch: usize,
) -> Result<GridImage<T>> {
    let c = model.config.channels;
    let total = out_height * out_width;
    let pixel_batch = pixel_batch.max(1);
    let ranges: Vec<(usize, usize)> = (0..total)
        .step_by(pixel_batch)
        .map(|s| (s, (s + pixel_batch).min(total)))
        .collect();
    use rayon::prelude::*;
    let chunks: Vec<Array2<T>> = ranges
        .par_iter()
        .map(|&(start, end)| {
            let coords: Vec<Coord<T>> = (start..end)
                .map(|i| Coord::pixel_center(i / out_width, i % out_width, out_height, out_width))
                .collect();
            lofi_forward(model, pre, &coords)
        })
        .collect::<Result<_>>()?;
    let mut out = GridImage::zeros(out_height, out_width, c);
    for (&(start, end), chunk) in ranges.iter().zip(chunks.iter()) {
        for (row, i) in (start..end).enumerate() {
            for ch in 0..c {
                out.data_mut()[i * c + ch] = model.denormalize_out(chunk[[row, ch]]);
            }
        }
    }
    Ok(out)
}
