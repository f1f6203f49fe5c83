//! Training on mini-batches of objects and pixels.
//!
//! One `train_step` draws an object mini-batch and, for each of the
//! configured repetitions, samples a fresh pixel mini-batch per object,
//! runs forward/backward, and takes one Adam step per parameter group.
//! All pixel sampling happens on the driver thread in a fixed order; the
//! per-(object, chunk) work runs on the worker pool and gradients are
//! reduced in task order, so results are bitwise reproducible at any
//! thread count.

use ndarray::Array2;
use rayon::prelude::*;

use super::{
    backward_into, forward_cached, preprocess_cached, GradAccum, LofiModel, Preprocessed,
};
use crate::alloc_track::{record, scratch_arr2};
use crate::filter::fourier_backward;
use crate::grid::{Coord, GridImage};
use crate::nn::Params;
use crate::rng::SeedRng;
use crate::{Error, Real, Result};

fn default_lr() -> f64 {
    1e-4
}
fn default_object_batch() -> usize {
    64
}
fn default_pixel_batch() -> usize {
    512
}
fn default_pixel_steps() -> usize {
    2
}
fn default_epochs() -> usize {
    200
}
fn default_val_every() -> u64 {
    100
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    L1,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub object_batch: usize,
    pub pixel_batch: usize,
    /// Pixel mini-batches (and optimizer steps) per object mini-batch.
    pub pixel_steps_per_object_batch: usize,
    pub epochs: usize,
    /// Optional hard cap on train_step calls, for iteration-based recipes.
    pub max_steps: Option<u64>,
    pub seed: u64,
    pub loss: LossKind,
    /// Validation PSNR cadence in steps (0 disables).
    pub val_every: u64,
    /// Checkpoint cadence in steps (0 = only via the final callback).
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: default_lr(),
            object_batch: default_object_batch(),
            pixel_batch: default_pixel_batch(),
            pixel_steps_per_object_batch: default_pixel_steps(),
            epochs: default_epochs(),
            max_steps: None,
            seed: 0,
            loss: LossKind::L1,
            val_every: default_val_every(),
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr <= 0.0 {
            return Err(Error::Config("lr must be positive".into()));
        }
        if self.object_batch == 0 || self.pixel_batch == 0 || self.pixel_steps_per_object_batch == 0
        {
            return Err(Error::Config("batch sizes must be positive".into()));
        }
        Ok(())
    }
}

/// Paired observations and targets; resolutions may differ per pair.
#[derive(Debug, Clone, Default)]
pub struct Dataset<T> {
    pub pairs: Vec<(GridImage<T>, GridImage<T>)>,
    pub val: Option<(GridImage<T>, GridImage<T>)>,
}

#[derive(Debug, Clone)]
pub struct TrainLogRow {
    pub step: u64,
    pub loss: f64,
    pub val_psnr: Option<f64>,
}


/// mean-|·| partial over one chunk: returns the absolute sum and the
/// upstream gradient already scaled by `1/denom` (sign(0) := 0).
fn l1_partial<T: Real>(pred: &Array2<T>, target: &Array2<T>, denom: T) -> (T, Array2<T>) {
    let mut grad = scratch_arr2::<T>(pred.nrows(), pred.ncols());
    let mut abs_sum = T::zero();
    ndarray::Zip::from(&mut grad).and(pred).and(target).for_each(|g, &p, &t| {
        let d = p - t;
        abs_sum += d.abs();
        *g = if d > T::zero() {
            T::one() / denom
        } else if d < T::zero() {
            -T::one() / denom
        } else {
            T::zero()
        };
    });
    (abs_sum, grad)
}

struct TaskOutput<T: Real> {
    acc: GradAccum<T>,
    abs_sum: T,
}

/// One optimization pass over a fixed pixel sample. `samples[i]` carries the
/// coordinates and target rows for object `i`.
fn pixel_substep<T: Real>(
    model: &mut LofiModel<T>,
    pres: &[Preprocessed<T>],
    samples: &[(Vec<Coord<T>>, Array2<T>)],
    lr: T,
) -> Result<T> {
    let n_obj = samples.len();
    let pixel_batch = samples[0].0.len();
    let c = model.config.channels;
    let denom = T::from_f64_c((n_obj * pixel_batch * c) as f64);
    let image_len = model
        .filter
        .as_ref()
        .map(|_| pres[0].image.data().len());

    // Two fixed half-batch tasks per object: the split depends only on the
    // configuration, so the GEMM batching (and the float results) never
    // depends on the thread count.
    let mut tasks = Vec::new();
    for oi in 0..n_obj {
        let mid = pixel_batch.div_ceil(2);
        tasks.push((oi, 0, mid.min(pixel_batch)));
        if mid < pixel_batch {
            tasks.push((oi, mid, pixel_batch));
        }
    }

    let model_ref: &LofiModel<T> = model;
    let outputs: Vec<TaskOutput<T>> = tasks
        .par_iter()
        .map(|&(oi, start, end)| -> Result<TaskOutput<T>> {
            let (coords, targets) = &samples[oi];
            let pre = &pres[oi];
            let chunk_coords = &coords[start..end];
            let mut chunk_targets = scratch_arr2::<T>(end - start, c);
            chunk_targets.assign(&targets.slice(ndarray::s![start..end, ..]));
            let (pred, cache) = forward_cached(model_ref, &pre.image, chunk_coords)?;
            let (abs_sum, upstream) = l1_partial(&pred, &chunk_targets, denom);
            let mut acc = GradAccum::new(model_ref, image_len);
            backward_into(model_ref, &pre.image, &cache, &upstream, &mut acc)?;
            Ok(TaskOutput { acc, abs_sum })
        })
        .collect::<Result<_>>()?;

    // Deterministic reduction in task order; filter gradients reduce
    // per object first because each object has its own input spectra.
    let mut total = GradAccum::new(model, None);
    let mut abs_total = T::zero();
    let mut per_object_images: Vec<Option<Vec<T>>> = (0..n_obj).map(|_| None).collect();
    for (t, &(oi, _, _)) in outputs.iter().zip(tasks.iter()) {
        abs_total += t.abs_sum;
        total.core.add_scaled(&t.acc.core, T::one());
        if let (Some(a), Some(b)) = (total.offsets.as_mut(), t.acc.offsets.as_ref()) {
            a.zip_mut_with(b, |x, y| *x += *y);
        }
        if let (Some(a), Some(b)) = (total.ccpg.as_mut(), t.acc.ccpg.as_ref()) {
            for (s, o) in a.iter_mut().zip(b.iter()) {
                s.add_scaled(o, T::one());
            }
        }
        if let (Some(a), Some(b)) = (total.inr.as_mut(), t.acc.inr.as_ref()) {
            a.add_scaled(b, T::one());
        }
        if let Some(img) = t.acc.image.as_ref() {
            let slot = &mut per_object_images[oi];
            match slot {
                None => *slot = Some(img.clone()),
                Some(dst) => {
                    for (x, y) in dst.iter_mut().zip(img.iter()) {
                        *x += *y;
                    }
                }
            }
        }
    }

    let loss = abs_total / denom;
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!(
            "training loss at step {}",
            model.step + 1
        )));
    }

    // Chain accumulated image-domain gradients through the Fourier filter.
    let filter_grad = if let Some(filter) = &model.filter {
        let mut g: Option<Vec<num_complex::Complex<T>>> = None;
        for (oi, img) in per_object_images.iter().enumerate() {
            let img = img.as_ref().expect("filter path accumulates image grads");
            let up = GridImage::from_vec_unchecked(
                pres[oi].image.height(),
                pres[oi].image.width(),
                pres[oi].image.channels(),
                img.clone(),
            );
            let cache = pres[oi].fourier.as_ref().expect("fourier cache");
            let gi = fourier_backward(cache, filter, &up)?;
            match g.as_mut() {
                None => g = Some(gi),
                Some(acc) => {
                    for (a, b) in acc.iter_mut().zip(gi.iter()) {
                        *a += *b;
                    }
                }
            }
        }
        g
    } else {
        None
    };

    // One Adam step per enabled group.
    model.step += 1;
    model.opt_core.step(&mut model.core, &total.core, lr);
    if let Some(g) = total.offsets.as_ref() {
        model.opt_offsets.step(&mut model.offsets, g, lr);
    }
    if let (Some(stack), Some(gs), Some(opt)) =
        (model.ccpg.as_mut(), total.ccpg.as_ref(), model.opt_ccpg.as_mut())
    {
        // The stack is one parameter group: concatenate stage grads.
        let stage_grads = CcpgGrads(gs);
        opt.step(stack, &stage_grads, lr);
    }
    if let (Some(filter), Some(g), Some(opt)) =
        (model.filter.as_mut(), filter_grad.as_ref(), model.opt_filter.as_mut())
    {
        let wrapped = FilterGrads(g);
        opt.step(filter, &wrapped, lr);
    }
    if let (Some(inr), Some(g), Some(opt)) =
        (model.inr.as_mut(), total.inr.as_ref(), model.opt_inr.as_mut())
    {
        opt.step(&mut inr.head, g, lr);
    }
    Ok(loss)
}

struct CcpgGrads<'a, T>(&'a Vec<crate::nn::Mlp<T>>);
impl<'a, T: Real> Params<T> for CcpgGrads<'a, T> {
    fn count(&self) -> usize {
        self.0.iter().map(|m| m.count()).sum()
    }
    fn for_each(&self, f: &mut dyn FnMut(T)) {
        for m in self.0 {
            m.for_each(f);
        }
    }
    fn for_each_mut(&mut self, _f: &mut dyn FnMut(&mut T)) {
        unreachable!("gradient views are read-only")
    }
}

struct FilterGrads<'a, T>(&'a Vec<num_complex::Complex<T>>);
impl<'a, T: Real> Params<T> for FilterGrads<'a, T> {
    fn count(&self) -> usize {
        self.0.len() * 2
    }
    fn for_each(&self, f: &mut dyn FnMut(T)) {
        for v in self.0 {
            f(v.re);
            f(v.im);
        }
    }
    fn for_each_mut(&mut self, _f: &mut dyn FnMut(&mut T)) {
        unreachable!("gradient views are read-only")
    }
}

/// One training iteration over an object mini-batch: for each repetition,
/// sample `pixel_batch` distinct target pixels per object (uniform, without
/// replacement), optimize, and return the last repetition's loss.
pub fn train_step<T: Real>(
    model: &mut LofiModel<T>,
    objects: &[(&GridImage<T>, &GridImage<T>)],
    cfg: &TrainConfig,
    rng: &mut SeedRng,
) -> Result<T> {
    if objects.is_empty() {
        return Err(Error::InvalidInput("empty object batch".into()));
    }
    // Preprocess once per repetition (the filter changes under optimization,
    // so each optimizer step sees fresh spectra).
    let lr = T::from_f64_c(cfg.lr);
    let mut last_loss = T::zero();
    for _rep in 0..cfg.pixel_steps_per_object_batch {
        let pres: Vec<Preprocessed<T>> = {
            let m: &LofiModel<T> = model;
            objects
                .par_iter()
                .map(|(q, _)| preprocess_cached(m, q))
                .collect::<Result<_>>()?
        };
        // Draw pixel samples on the driver thread, in object order.
        let mut samples = Vec::with_capacity(objects.len());
        for (_, f) in objects {
            let (h, w, c) = (f.height(), f.width(), f.channels());
            let n_px = h * w;
            let k = cfg.pixel_batch.min(n_px);
            let idx = rng.sample_distinct(n_px, k);
            record(k * 2);
            let coords: Vec<Coord<T>> = idx
                .iter()
                .map(|&i| Coord::pixel_center(i / w, i % w, h, w))
                .collect();
            let mut targets = scratch_arr2::<T>(k, c);
            for (row, &i) in idx.iter().enumerate() {
                for ch in 0..c {
                    targets[[row, ch]] = model.normalize_target(f.data()[i * c + ch]);
                }
            }
            samples.push((coords, targets));
        }
        last_loss = pixel_substep(model, &pres, &samples, lr)?;
    }
    Ok(last_loss)
}

/// Epoch-shuffled training with periodic validation PSNR and checkpoint
/// callbacks. Returns the metrics log (one row per step).
pub fn train_loop<T: Real>(
    model: &mut LofiModel<T>,
    data: &Dataset<T>,
    cfg: &TrainConfig,
    rng: &mut SeedRng,
    mut on_checkpoint: impl FnMut(&LofiModel<T>, &SeedRng, u64) -> Result<()>,
) -> Result<Vec<TrainLogRow>> {
    cfg.validate()?;
    if data.pairs.is_empty() {
        return Err(Error::InvalidInput("empty dataset".into()));
    }
    if model.config.filter == super::FilterMode::Fourier {
        for (q, _) in &data.pairs {
            if q.height() != model.config.filter_resolution
                || q.width() != model.config.filter_resolution
            {
                return Err(Error::Config(format!(
                    "fourier filter is bound to {0}x{0} but an observation is {1}x{2}",
                    model.config.filter_resolution,
                    q.height(),
                    q.width()
                )));
            }
        }
    }
    let steps_per_epoch = data.pairs.len().div_ceil(cfg.object_batch) as u64;
    let total_steps = match cfg.max_steps {
        Some(ms) => ms,
        None => steps_per_epoch * cfg.epochs as u64,
    };
    let mut log = Vec::new();
    let mut order: Vec<usize> = (0..data.pairs.len()).collect();
    let mut step = 0u64;
    'outer: loop {
        if step >= total_steps {
            break;
        }
        rng.shuffle(&mut order);
        for batch in order.chunks(cfg.object_batch) {
            if step >= total_steps {
                break 'outer;
            }
            let objects: Vec<(&GridImage<T>, &GridImage<T>)> =
                batch.iter().map(|&i| (&data.pairs[i].0, &data.pairs[i].1)).collect();
            let loss = train_step(model, &objects, cfg, rng)?;
            step += 1;
            let val_psnr = if cfg.val_every > 0 && step % cfg.val_every == 0 {
                match &data.val {
                    Some((vq, vf)) => {
                        let rec = super::infer_image(model, vq, vf.height(), vf.width(), 512)?;
                        Some(crate::metrics::psnr(&rec, vf, None)?)
                    }
                    None => None,
                }
            } else {
                None
            };
            log.push(TrainLogRow {
                step,
                loss: loss.to_f64_c(),
                val_psnr,
            });
            if cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 {
                on_checkpoint(model, rng, step)?;
            }
        }
    }
    on_checkpoint(model, rng, step)?;
    Ok(log)
}
