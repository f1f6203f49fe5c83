//! Sampling geometry around a query coordinate: circular-initialized offset
//! sets, differentiable patch extraction, and the iterative
//! coordinate-conditioned patch geometry (CCPG) refinement.
//!
//! Offsets are stored ring-major, `k = ring·P + j`, so a contiguous block of
//! K/B samples is one ring - the chunk each MultiMLP branch consumes.

use ndarray::Array2;

use crate::alloc_track::{record, scratch_arr2};
use crate::grid::{sample_backward_into, sample_into, BoundaryMode, Coord, GridImage};
use crate::nn::{Mlp, MlpCache, Params};
use crate::rng::SeedRng;
use crate::{Error, Real, Result};

/// K learnable coordinate offsets in normalized units.
#[derive(Debug, Clone)]
pub struct PatchOffsets<T> {
    /// `[K][2]`, (dx, dy) per sample.
    pub offsets: Array2<T>,
    pub learnable: bool,
    /// Ring spacing in normalized units.
    pub spacing: T,
}

impl<T: Real> PatchOffsets<T> {
    /// Circular geometry: ring m in 1..=rings at radius m·δ, P points per
    /// ring starting on the +x axis.
    pub fn init_circular(rings: usize, points_per_ring: usize, delta: T) -> Self {
        assert!(rings >= 1 && points_per_ring >= 1);
        assert!(delta > T::zero());
        let k = rings * points_per_ring;
        let mut offsets = Array2::zeros((k, 2));
        for m in 1..=rings {
            let r = T::from_f64_c(m as f64) * delta;
            for j in 0..points_per_ring {
                let ang = 2.0 * std::f64::consts::PI * j as f64 / points_per_ring as f64;
                let idx = (m - 1) * points_per_ring + j;
                offsets[[idx, 0]] = r * T::from_f64_c(ang.cos());
                offsets[[idx, 1]] = r * T::from_f64_c(ang.sin());
            }
        }
        Self {
            offsets,
            learnable: false,
            spacing: delta,
        }
    }

    pub fn from_offsets(offsets: Array2<T>, spacing: T) -> Self {
        assert_eq!(offsets.ncols(), 2);
        Self {
            offsets,
            learnable: false,
            spacing,
        }
    }

    pub fn k(&self) -> usize {
        self.offsets.nrows()
    }

    pub fn max_norm(&self) -> T {
        let mut best = T::zero();
        for row in self.offsets.rows() {
            let n = (row[0] * row[0] + row[1] * row[1]).sqrt();
            best = best.max(n);
        }
        best
    }
}

impl<T: Real> Params<T> for PatchOffsets<T> {
    fn count(&self) -> usize {
        self.offsets.len()
    }
    fn for_each(&self, f: &mut dyn FnMut(T)) {
        Params::for_each(&self.offsets, f)
    }
    fn for_each_mut(&mut self, f: &mut dyn FnMut(&mut T)) {
        Params::for_each_mut(&mut self.offsets, f)
    }
}

/// Absolute sample coordinates for a batch of centers; layout `[B·K]`.
pub(crate) fn sample_coords<T: Real>(centers: &[Coord<T>], offsets: &Array2<T>) -> Vec<Coord<T>> {
    let k = offsets.nrows();
    record(centers.len() * k * 2);
    let mut coords = Vec::with_capacity(centers.len() * k);
    for c in centers {
        for row in offsets.rows() {
            coords.push(Coord::new(c.x + row[0], c.y + row[1]));
        }
    }
    coords
}

/// Patch values at `center + offsets[k]`, shape `[K][C_pre]`.
pub fn extract_patch<T: Real>(
    img: &GridImage<T>,
    center: Coord<T>,
    offsets: &PatchOffsets<T>,
    boundary: BoundaryMode,
) -> Result<Array2<T>> {
    let coords = sample_coords(&[center], &offsets.offsets);
    crate::grid::bicubic_sample(img, &coords, boundary)
}

/// Batched extraction into a `[B][K·C_pre]` matrix; also returns the absolute
/// coordinates for the backward pass.
pub(crate) fn extract_batch<T: Real>(
    img: &GridImage<T>,
    centers: &[Coord<T>],
    offsets: &Array2<T>,
    boundary: BoundaryMode,
) -> (Array2<T>, Vec<Coord<T>>) {
    let k = offsets.nrows();
    let c = img.channels();
    let coords = sample_coords(centers, offsets);
    let mut patch = scratch_arr2::<T>(centers.len(), k * c);
    sample_into(img, &coords, boundary, patch.as_slice_mut().unwrap());
    (patch, coords)
}

/// Where the extraction backward pass should accumulate.
pub(crate) struct ExtractGrads<'a, T> {
    pub centers: Option<&'a mut Array2<T>>,
    pub offsets: Option<&'a mut Array2<T>>,
    pub image: Option<&'a mut [T]>,
}

/// Chain upstream `[B][K·C_pre]` through the bicubic sampler. Center and
/// offset gradients are sums of the per-sample coordinate gradients (every
/// sample shares its center; every batch entry shares the offsets).
pub(crate) fn extract_batch_backward<T: Real>(
    img: &GridImage<T>,
    coords: &[Coord<T>],
    k: usize,
    boundary: BoundaryMode,
    upstream: &Array2<T>,
    grads: ExtractGrads<'_, T>,
) {
    let b = upstream.nrows();
    debug_assert_eq!(coords.len(), b * k);
    let need_coords = grads.centers.is_some() || grads.offsets.is_some();
    let mut coord_grads = if need_coords {
        Some(crate::alloc_track::scratch_vec::<T>(b * k * 2))
    } else {
        None
    };
    sample_backward_into(
        img,
        coords,
        boundary,
        upstream.as_slice().unwrap(),
        coord_grads.as_deref_mut(),
        grads.image,
    );
    if let Some(cg) = coord_grads {
        if let Some(centers) = grads.centers {
            for bi in 0..b {
                let mut gx = T::zero();
                let mut gy = T::zero();
                for ki in 0..k {
                    gx += cg[(bi * k + ki) * 2];
                    gy += cg[(bi * k + ki) * 2 + 1];
                }
                centers[[bi, 0]] += gx;
                centers[[bi, 1]] += gy;
            }
        }
        if let Some(offs) = grads.offsets {
            for bi in 0..b {
                for ki in 0..k {
                    offs[[ki, 0]] += cg[(bi * k + ki) * 2];
                    offs[[ki, 1]] += cg[(bi * k + ki) * 2 + 1];
                }
            }
        }
    }
}

/// Single-center backward: gradients with respect to the center, the
/// offsets, and the image, for upstream of shape `[K][C_pre]`.
pub fn extract_patch_backward<T: Real>(
    img: &GridImage<T>,
    center: Coord<T>,
    offsets: &PatchOffsets<T>,
    boundary: BoundaryMode,
    upstream: &Array2<T>,
) -> Result<(Array2<T>, Array2<T>, GridImage<T>)> {
    let k = offsets.k();
    if upstream.shape() != [k, img.channels()] {
        return Err(Error::Shape(format!(
            "upstream shape {:?} != [{k}, {}]",
            upstream.shape(),
            img.channels()
        )));
    }
    let coords = sample_coords(&[center], &offsets.offsets);
    let up = upstream
        .to_shape((1, k * img.channels()))
        .expect("contiguous")
        .to_owned();
    let mut grad_center = Array2::zeros((1, 2));
    let mut grad_offsets = Array2::zeros((k, 2));
    let mut image_grad = GridImage::zeros(img.height(), img.width(), img.channels());
    extract_batch_backward(
        img,
        &coords,
        k,
        boundary,
        &up,
        ExtractGrads {
            centers: Some(&mut grad_center),
            offsets: Some(&mut grad_offsets),
            image: Some(image_grad.data_mut()),
        },
    );
    Ok((grad_center, grad_offsets, image_grad))
}

/// Stack of T offset-predicting networks. Each stage maps the flattened
/// current patch to residual offsets, bounded by tanh, scaled by rho_max and
/// added to the base geometry.
#[derive(Debug, Clone)]
pub struct CcpgStack<T> {
    pub stages: Vec<Mlp<T>>,
    pub rho_max: T,
}

impl<T: Real> CcpgStack<T> {
    /// Stage networks get zero-initialized final layers so the starting
    /// geometry equals the base circle.
    pub fn init(
        stages: usize,
        k: usize,
        c_pre: usize,
        hidden: &[usize],
        rho_max: T,
        rng: &mut SeedRng,
    ) -> Self {
        let mut dims = vec![k * c_pre];
        dims.extend_from_slice(hidden);
        dims.push(2 * k);
        let stages = (0..stages)
            .map(|_| {
                let mut m = Mlp::he_init(&dims, rng);
                m.zero_last_layer();
                m
            })
            .collect();
        Self { stages, rho_max }
    }

    pub fn t(&self) -> usize {
        self.stages.len()
    }
}

impl<T: Real> Params<T> for CcpgStack<T> {
    fn count(&self) -> usize {
        self.stages.iter().map(|s| s.count()).sum()
    }
    fn for_each(&self, f: &mut dyn FnMut(T)) {
        for s in &self.stages {
            s.for_each(f);
        }
    }
    fn for_each_mut(&mut self, f: &mut dyn FnMut(&mut T)) {
        for s in &mut self.stages {
            s.for_each_mut(f);
        }
    }
}

/// Everything the CCPG backward pass needs.
pub(crate) struct CcpgCache<T> {
    pub stage_caches: Vec<MlpCache<T>>,
    /// tanh of each stage output, `[B][2K]`.
    pub tanh: Vec<Array2<T>>,
    /// Absolute sampling coordinates at every extraction (T+1 of them).
    pub coords: Vec<Vec<Coord<T>>>,
}

/// Batched CCPG forward. Returns the final patch `[B][K·C_pre]` and a cache.
pub(crate) fn ccpg_forward<T: Real>(
    img: &GridImage<T>,
    centers: &[Coord<T>],
    base: &PatchOffsets<T>,
    stack: &CcpgStack<T>,
    boundary: BoundaryMode,
) -> Result<(Array2<T>, CcpgCache<T>)> {
    let k = base.k();
    let c = img.channels();
    let b = centers.len();
    let (mut patch, coords0) = extract_batch(img, centers, &base.offsets, boundary);
    let mut cache = CcpgCache {
        stage_caches: Vec::with_capacity(stack.t()),
        tanh: Vec::with_capacity(stack.t()),
        coords: vec![coords0],
    };
    for stage in &stack.stages {
        let (s, mlp_cache) = stage.forward(patch)?;
        let th = s.mapv(|v| v.tanh());
        record(th.len());
        record(b * k * 2);
        let mut coords = Vec::with_capacity(b * k);
        for (bi, center) in centers.iter().enumerate() {
            for ki in 0..k {
                let dx = base.offsets[[ki, 0]] + stack.rho_max * th[[bi, 2 * ki]];
                let dy = base.offsets[[ki, 1]] + stack.rho_max * th[[bi, 2 * ki + 1]];
                coords.push(Coord::new(center.x + dx, center.y + dy));
            }
        }
        let mut next = scratch_arr2::<T>(b, k * c);
        sample_into(img, &coords, boundary, next.as_slice_mut().unwrap());
        cache.stage_caches.push(mlp_cache);
        cache.tanh.push(th);
        cache.coords.push(coords);
        patch = next;
    }
    Ok((patch, cache))
}

/// Backward through the refinement chain. Per-stage parameter grads
/// accumulate into `stage_acc`; center and image gradients into the
/// remaining buffers.
pub(crate) fn ccpg_backward<T: Real>(
    img: &GridImage<T>,
    centers: &[Coord<T>],
    base: &PatchOffsets<T>,
    stack: &CcpgStack<T>,
    boundary: BoundaryMode,
    cache: &CcpgCache<T>,
    upstream: Array2<T>,
    stage_acc: &mut [Mlp<T>],
    mut grad_centers: Option<&mut Array2<T>>,
    mut grad_image: Option<&mut [T]>,
) -> Result<()> {
    let k = base.k();
    let b = centers.len();
    debug_assert_eq!(stage_acc.len(), stack.t());
    let mut up = upstream; // gradient wrt p^{i+1}
    for i in (0..stack.t()).rev() {
        let coords = &cache.coords[i + 1];
        let mut coord_grads = crate::alloc_track::scratch_vec::<T>(b * k * 2);
        sample_backward_into(
            img,
            coords,
            boundary,
            up.as_slice().unwrap(),
            Some(&mut coord_grads),
            grad_image.as_deref_mut(),
        );
        if let Some(gc) = grad_centers.as_deref_mut() {
            for bi in 0..b {
                for ki in 0..k {
                    gc[[bi, 0]] += coord_grads[(bi * k + ki) * 2];
                    gc[[bi, 1]] += coord_grads[(bi * k + ki) * 2 + 1];
                }
            }
        }
        // Coordinate = center + base + rho_max·tanh(s); chain into s.
        let th = &cache.tanh[i];
        let mut grad_s = scratch_arr2::<T>(b, 2 * k);
        for bi in 0..b {
            for ki in 0..2 * k {
                let t = th[[bi, ki]];
                grad_s[[bi, ki]] =
                    coord_grads[bi * 2 * k + ki] * stack.rho_max * (T::one() - t * t);
            }
        }
        up = stack.stages[i].backward_acc(&cache.stage_caches[i], &grad_s, &mut stage_acc[i])?;
    }
    // Remaining upstream reaches the first extraction at the base geometry.
    let mut coord_grads = if grad_centers.is_some() {
        Some(crate::alloc_track::scratch_vec::<T>(b * k * 2))
    } else {
        None
    };
    sample_backward_into(
        img,
        &cache.coords[0],
        boundary,
        up.as_slice().unwrap(),
        coord_grads.as_deref_mut(),
        grad_image.as_deref_mut(),
    );
    if let (Some(gc), Some(cg)) = (grad_centers, coord_grads) {
        for bi in 0..b {
            for ki in 0..k {
                gc[[bi, 0]] += cg[(bi * k + ki) * 2];
                gc[[bi, 1]] += cg[(bi * k + ki) * 2 + 1];
            }
        }
    }
    Ok(())
}

/// Single-center refinement with the offset trace recorded for export:
/// `trace[0]` is the base geometry, `trace[i]` the stage-i offsets.
/// Returns the final patch `[K][C_pre]` and the `[T+1][K][2]` trace.
pub fn ccpg_refine<T: Real>(
    img: &GridImage<T>,
    center: Coord<T>,
    base: &PatchOffsets<T>,
    stack: &CcpgStack<T>,
    boundary: BoundaryMode,
) -> Result<(Array2<T>, Vec<Array2<T>>)> {
    let k = base.k();
    let c = img.channels();
    let (patch, cache) = ccpg_forward(img, &[center], base, stack, boundary)?;
    let mut trace = vec![base.offsets.clone()];
    for th in &cache.tanh {
        let mut offs = Array2::zeros((k, 2));
        for ki in 0..k {
            offs[[ki, 0]] = base.offsets[[ki, 0]] + stack.rho_max * th[[0, 2 * ki]];
            offs[[ki, 1]] = base.offsets[[ki, 1]] + stack.rho_max * th[[0, 2 * ki + 1]];
        }
        trace.push(offs);
    }
    let patch = patch.to_shape((k, c)).expect("contiguous").to_owned();
    Ok((patch, trace))
}
