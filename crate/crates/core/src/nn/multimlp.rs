//! MultiMLP: the extracted neighborhood is split into contiguous chunks (one
//! ring of the circular geometry per branch), each chunk is processed by its
//! own MLP, and the concatenated branch outputs are fused by a mixer MLP.

use ndarray::{s, Array2};

use super::{Mlp, MlpCache, Params};
use crate::alloc_track::scratch_arr2;
use crate::rng::SeedRng;
use crate::{Error, Real, Result};

#[derive(Debug, Clone)]
pub struct MultiMlp<T> {
    pub branches: Vec<Mlp<T>>,
    pub mixer: Mlp<T>,
}

/// Gradients share the parameter container.
pub type MultiMlpGrads<T> = MultiMlp<T>;

pub struct MultiMlpCache<T> {
    branch: Vec<MlpCache<T>>,
    mixer: MlpCache<T>,
}

impl<T: Real> MultiMlp<T> {
    /// `input_width` is K·C_pre flattened sample-major (channel minor); it
    /// must split evenly over `branches`.
    pub fn build(
        input_width: usize,
        branches: usize,
        branch_hidden: &[usize],
        branch_out: usize,
        mixer_hidden: &[usize],
        out: usize,
        rng: &mut SeedRng,
    ) -> Result<Self> {
        if branches == 0 || input_width % branches != 0 {
            return Err(Error::Config(format!(
                "input width {input_width} not divisible by {branches} branches"
            )));
        }
        let chunk = input_width / branches;
        let mut bdims = vec![chunk];
        bdims.extend_from_slice(branch_hidden);
        bdims.push(branch_out);
        let mut mdims = vec![branches * branch_out];
        mdims.extend_from_slice(mixer_hidden);
        mdims.push(out);
        Ok(Self {
            branches: (0..branches).map(|_| Mlp::he_init(&bdims, rng)).collect(),
            mixer: Mlp::he_init(&mdims, rng),
        })
    }

    pub fn chunk_width(&self) -> usize {
        self.branches[0].in_dim()
    }

    pub fn in_dim(&self) -> usize {
        self.chunk_width() * self.branches.len()
    }

    pub fn out_dim(&self) -> usize {
        self.mixer.out_dim()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            branches: self.branches.iter().map(Mlp::zeros_like).collect(),
            mixer: self.mixer.zeros_like(),
        }
    }

    pub fn add_scaled(&mut self, other: &Self, s: T) {
        for (a, b) in self.branches.iter_mut().zip(other.branches.iter()) {
            a.add_scaled(b, s);
        }
        self.mixer.add_scaled(&other.mixer, s);
    }

    /// `patch` is `[B][K·C_pre]`; returns `[B][C]`.
    pub fn forward(&self, patch: &Array2<T>) -> Result<(Array2<T>, MultiMlpCache<T>)> {
        if patch.ncols() != self.in_dim() {
            return Err(Error::Shape(format!(
                "multimlp input width {} != {}",
                patch.ncols(),
                self.in_dim()
            )));
        }
        let batch = patch.nrows();
        let chunk = self.chunk_width();
        let bout = self.branches[0].out_dim();
        let mut concat = scratch_arr2::<T>(batch, self.branches.len() * bout);
        let mut caches = Vec::with_capacity(self.branches.len());
        for (j, branch) in self.branches.iter().enumerate() {
            let mut xb = scratch_arr2::<T>(batch, chunk);
            xb.assign(&patch.slice(s![.., j * chunk..(j + 1) * chunk]));
            let (yb, cb) = branch.forward(xb)?;
            concat.slice_mut(s![.., j * bout..(j + 1) * bout]).assign(&yb);
            caches.push(cb);
        }
        let (y, mixer_cache) = self.mixer.forward(concat)?;
        Ok((
            y,
            MultiMlpCache {
                branch: caches,
                mixer: mixer_cache,
            },
        ))
    }

    /// Returns (parameter grads, grad wrt the flattened patch).
    pub fn backward(
        &self,
        cache: &MultiMlpCache<T>,
        upstream: &Array2<T>,
    ) -> Result<(MultiMlpGrads<T>, Array2<T>)> {
        let mut grads = self.zeros_like();
        let grad_patch = self.backward_acc(cache, upstream, &mut grads)?;
        Ok((grads, grad_patch))
    }

    /// Backward with gradients accumulated into `acc`.
    pub fn backward_acc(
        &self,
        cache: &MultiMlpCache<T>,
        upstream: &Array2<T>,
        acc: &mut Self,
    ) -> Result<Array2<T>> {
        let grad_concat = self.mixer.backward_acc(&cache.mixer, upstream, &mut acc.mixer)?;
        let batch = grad_concat.nrows();
        let chunk = self.chunk_width();
        let bout = self.branches[0].out_dim();
        let mut grad_patch = scratch_arr2::<T>(batch, self.in_dim());
        for (j, branch) in self.branches.iter().enumerate() {
            let mut up = scratch_arr2::<T>(batch, bout);
            up.assign(&grad_concat.slice(s![.., j * bout..(j + 1) * bout]));
            let gx = branch.backward_acc(&cache.branch[j], &up, &mut acc.branches[j])?;
            grad_patch
                .slice_mut(s![.., j * chunk..(j + 1) * chunk])
                .assign(&gx);
        }
        Ok(grad_patch)
    }
}

impl<T: Real> Params<T> for MultiMlp<T> {
    fn count(&self) -> usize {
        self.branches.iter().map(|b| b.count()).sum::<usize>() + self.mixer.count()
    }
    fn for_each(&self, f: &mut dyn FnMut(T)) {
        for b in &self.branches {
            b.for_each(f);
        }
        self.mixer.for_each(f);
    }
    fn for_each_mut(&mut self, f: &mut dyn FnMut(&mut T)) {
        for b in &mut self.branches {
            b.for_each_mut(f);
        }
        self.mixer.for_each_mut(f);
    }
}
