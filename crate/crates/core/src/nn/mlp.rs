//! Plain MLP: affine layers with ReLU hidden activations and an identity
//! output layer.

use ndarray::{Array1, Array2, Axis};

use super::{matmul_into, Params};
use crate::alloc_track::{scratch_arr1, scratch_arr2};
use crate::rng::SeedRng;
use crate::{Error, Real, Result};

#[derive(Debug, Clone)]
pub struct Linear<T> {
    /// `[out][in]` weight matrix.
    pub w: Array2<T>,
    /// `[out]` bias.
    pub b: Array1<T>,
}

#[derive(Debug, Clone)]
pub struct Mlp<T> {
    pub layers: Vec<Linear<T>>,
}

/// Forward cache: the input batch plus post-ReLU activations of each hidden
/// layer. ReLU derivative masks are recovered from the activations themselves
/// (a > 0 iff the pre-activation was > 0; the subgradient at 0 is 0).
pub struct MlpCache<T> {
    pub input: Array2<T>,
    pub hidden: Vec<Array2<T>>,
}

impl<T: Real> Mlp<T> {
    /// He (fan-in) normal initialization for ReLU stacks; biases zero.
    pub fn he_init(dims: &[usize], rng: &mut SeedRng) -> Self {
        assert!(dims.len() >= 2, "need at least one layer");
        let layers = dims
            .windows(2)
            .map(|d| {
                let (fan_in, fan_out) = (d[0], d[1]);
                let std = (2.0 / fan_in as f64).sqrt();
                let w = Array2::from_shape_fn((fan_out, fan_in), |_| {
                    T::from_f64_c(rng.normal() * std)
                });
                Linear {
                    w,
                    b: Array1::zeros(fan_out),
                }
            })
            .collect();
        Self { layers }
    }

    pub fn zeros(dims: &[usize]) -> Self {
        let layers = dims
            .windows(2)
            .map(|d| Linear {
                w: Array2::zeros((d[1], d[0])),
                b: Array1::zeros(d[1]),
            })
            .collect();
        Self { layers }
    }

    /// Zero the final layer (residual-style heads start as the identity map).
    pub fn zero_last_layer(&mut self) {
        let last = self.layers.last_mut().expect("non-empty");
        last.w.fill(T::zero());
        last.b.fill(T::zero());
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Linear {
                    w: Array2::zeros(l.w.raw_dim()),
                    b: Array1::zeros(l.b.raw_dim()),
                })
                .collect(),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].w.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().unwrap().w.nrows()
    }

    pub fn add_scaled(&mut self, other: &Self, s: T) {
        for (a, b) in self.layers.iter_mut().zip(other.layers.iter()) {
            a.w.zip_mut_with(&b.w, |x, y| *x += s * *y);
            a.b.zip_mut_with(&b.b, |x, y| *x += s * *y);
        }
    }

    /// `x` is `[B][in]`; returns `[B][out]` and the cache for backward.
    pub fn forward(&self, x: Array2<T>) -> Result<(Array2<T>, MlpCache<T>)> {
        if x.ncols() != self.in_dim() {
            return Err(Error::Shape(format!(
                "mlp input width {} != {}",
                x.ncols(),
                self.in_dim()
            )));
        }
        let batch = x.nrows();
        let n = self.layers.len();
        let mut hidden = Vec::with_capacity(n.saturating_sub(1));
        let mut prev: Option<Array2<T>> = None;
        for i in 0..n {
            let mut out = scratch_arr2::<T>(batch, self.layers[i].w.nrows());
            {
                let input = match &prev {
                    None => x.view(),
                    Some(h) => h.view(),
                };
                matmul_into(input, self.layers[i].w.t(), &mut out);
            }
            out += &self.layers[i].b;
            if let Some(h) = prev.take() {
                hidden.push(h);
            }
            if i + 1 < n {
                out.mapv_inplace(|v| v.max(T::zero()));
                prev = Some(out);
            } else {
                return Ok((out, MlpCache { input: x, hidden }));
            }
        }
        unreachable!("mlp has at least one layer")
    }

    /// Reverse-mode gradients. Returns (parameter grads, input grads).
    pub fn backward(&self, cache: &MlpCache<T>, upstream: &Array2<T>) -> Result<(Self, Array2<T>)> {
        let mut grads = self.zeros_like();
        let grad_input = self.backward_acc(cache, upstream, &mut grads)?;
        Ok((grads, grad_input))
    }

    /// Reverse-mode gradients accumulated into `acc` (shapes must match);
    /// returns the input gradient. The hot training path uses this form so
    /// per-task gradient buffers are written exactly once.
    pub fn backward_acc(
        &self,
        cache: &MlpCache<T>,
        upstream: &Array2<T>,
        acc: &mut Self,
    ) -> Result<Array2<T>> {
        let n = self.layers.len();
        let batch = cache.input.nrows();
        if upstream.shape() != [batch, self.out_dim()] {
            return Err(Error::Shape(format!(
                "mlp upstream shape {:?} != [{batch}, {}]",
                upstream.shape(),
                self.out_dim()
            )));
        }
        if cache.hidden.len() != n - 1 {
            return Err(Error::Shape("stale cache for this mlp".into()));
        }
        let mut delta = upstream.clone();
        crate::alloc_track::record(delta.len());
        for i in (0..n).rev() {
            let x_i = if i == 0 {
                cache.input.view()
            } else {
                cache.hidden[i - 1].view()
            };
            ndarray::linalg::general_mat_mul(
                T::one(),
                &delta.t(),
                &x_i,
                T::one(),
                &mut acc.layers[i].w,
            );
            acc.layers[i].b += &delta.sum_axis(Axis(0));
            // Propagate through the affine map and the ReLU mask below it.
            let mut prev = scratch_arr2::<T>(batch, self.layers[i].w.ncols());
            matmul_into(delta.view(), self.layers[i].w.view(), &mut prev);
            if i > 0 {
                prev.zip_mut_with(&cache.hidden[i - 1], |d, a| {
                    if *a <= T::zero() {
                        *d = T::zero();
                    }
                });
            }
            delta = prev;
        }
        Ok(delta)
    }
}

impl<T: Real> Params<T> for Mlp<T> {
    fn count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }
    fn for_each(&self, f: &mut dyn FnMut(T)) {
        for l in &self.layers {
            for v in l.w.iter() {
                f(*v);
            }
            for v in l.b.iter() {
                f(*v);
            }
        }
    }
    fn for_each_mut(&mut self, f: &mut dyn FnMut(&mut T)) {
        for l in &mut self.layers {
            for v in l.w.iter_mut() {
                f(v);
            }
            for v in l.b.iter_mut() {
                f(v);
            }
        }
    }
}

/// Mean absolute error and its subgradient (sign(0) := 0), both scaled by
/// 1/(B·C) so the gradient matches the mean.
pub fn l1_loss<T: Real>(pred: &Array2<T>, target: &Array2<T>) -> Result<(T, Array2<T>)> {
    if pred.shape() != target.shape() {
        return Err(Error::Shape(format!(
            "l1 shapes differ: {:?} vs {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let n = T::from_f64_c(pred.len() as f64);
    let mut grad = scratch_arr2::<T>(pred.nrows(), pred.ncols());
    let mut loss = T::zero();
    ndarray::Zip::from(&mut grad)
        .and(pred)
        .and(target)
        .for_each(|g, &p, &t| {
            let d = p - t;
            loss += d.abs();
            *g = if d > T::zero() {
                T::one() / n
            } else if d < T::zero() {
                -T::one() / n
            } else {
                T::zero()
            };
        });
    Ok((loss / n, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn fd_check(net: &Mlp<f64>, x: &Array2<f64>, tol: f64) {
        // Smooth scalar functional: weighted sum of outputs.
        let w = Array2::from_shape_fn((x.nrows(), net.out_dim()), |(i, j)| {
            0.3 + 0.1 * (i as f64) - 0.07 * (j as f64)
        });
        let (_, cache) = net.forward(x.clone()).unwrap();
        let (grads, gin) = net.backward(&cache, &w).unwrap();

        let eval = |net: &Mlp<f64>, x: &Array2<f64>| -> f64 {
            let (y, _) = net.forward(x.clone()).unwrap();
            (y * &w).sum()
        };
        let eps = 1e-6;

        // Weights and biases.
        for li in 0..net.layers.len() {
            let mut probe = net.clone();
            for idx in [(0usize, 0usize), (probe.layers[li].w.nrows() - 1, 0)] {
                let orig = probe.layers[li].w[idx];
                probe.layers[li].w[idx] = orig + eps;
                let hi = eval(&probe, x);
                probe.layers[li].w[idx] = orig - eps;
                let lo = eval(&probe, x);
                probe.layers[li].w[idx] = orig;
                let fd = (hi - lo) / (2.0 * eps);
                assert_relative_eq!(grads.layers[li].w[idx], fd, max_relative = tol, epsilon = 1e-9);
            }
            let orig = probe.layers[li].b[0];
            probe.layers[li].b[0] = orig + eps;
            let hi = eval(&probe, x);
            probe.layers[li].b[0] = orig - eps;
            let lo = eval(&probe, x);
            probe.layers[li].b[0] = orig;
            let fd = (hi - lo) / (2.0 * eps);
            assert_relative_eq!(grads.layers[li].b[0], fd, max_relative = tol, epsilon = 1e-9);
        }

        // Inputs.
        for idx in [(0usize, 0usize), (x.nrows() - 1, x.ncols() - 1)] {
            let mut xp = x.clone();
            let orig = xp[idx];
            xp[idx] = orig + eps;
            let hi = eval(net, &xp);
            xp[idx] = orig - eps;
            let lo = eval(net, &xp);
            let fd = (hi - lo) / (2.0 * eps);
            assert_relative_eq!(gin[idx], fd, max_relative = tol, epsilon = 1e-9);
        }
    }

    #[test]
    fn zero_weights_bias_passthrough() {
        let mut net = Mlp::<f64>::zeros(&[3, 4]);
        net.layers[0].b.fill(0.25);
        let x = Array2::from_shape_fn((2, 3), |(i, j)| (i + j) as f64);
        let (y, _) = net.forward(x).unwrap();
        assert!(y.iter().all(|v| (*v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn identity_single_layer() {
        let mut net = Mlp::<f64>::zeros(&[3, 3]);
        for i in 0..3 {
            net.layers[0].w[[i, i]] = 1.0;
        }
        let x = Array2::from_shape_fn((2, 3), |(i, j)| 1.0 + i as f64 + j as f64);
        let (y, _) = net.forward(x.clone()).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn forward_matches_straight_line_reference() {
        let mut rng = crate::rng::SeedRng::new(77);
        let net = Mlp::<f64>::he_init(&[4, 5, 3], &mut rng);
        let x = Array2::from_shape_fn((3, 4), |(i, j)| rng.normal() + (i * j) as f64 * 0.01);
        let (y, _) = net.forward(x.clone()).unwrap();
        // Independent evaluation, scalar loops only.
        for b in 0..3 {
            let mut h = vec![0.0f64; 5];
            for o in 0..5 {
                let mut acc = net.layers[0].b[o];
                for i in 0..4 {
                    acc += net.layers[0].w[[o, i]] * x[[b, i]];
                }
                h[o] = acc.max(0.0);
            }
            for o in 0..3 {
                let mut acc = net.layers[1].b[o];
                for i in 0..5 {
                    acc += net.layers[1].w[[o, i]] * h[i];
                }
                assert_relative_eq!(y[[b, o]], acc, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn zero_upstream_zero_grads() {
        let mut rng = crate::rng::SeedRng::new(3);
        let net = Mlp::<f64>::he_init(&[4, 6, 2], &mut rng);
        let x = Array2::from_shape_fn((5, 4), |_| rng.normal());
        let (_, cache) = net.forward(x).unwrap();
        let (g, gi) = net.backward(&cache, &Array2::zeros((5, 2))).unwrap();
        assert!(g.flat().iter().all(|v| *v == 0.0));
        assert!(gi.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn linear_net_input_grad_is_w_transpose() {
        // Single affine layer: grad_input = upstream · W.
        let mut rng = crate::rng::SeedRng::new(13);
        let net = Mlp::<f64>::he_init(&[3, 2], &mut rng);
        let x = Array2::from_shape_fn((1, 3), |_| rng.normal());
        let (_, cache) = net.forward(x).unwrap();
        let up = Array2::from_shape_fn((1, 2), |_| rng.normal());
        let (_, gi) = net.backward(&cache, &up).unwrap();
        for j in 0..3 {
            let expect: f64 = (0..2).map(|o| up[[0, o]] * net.layers[0].w[[o, j]]).sum();
            assert_relative_eq!(gi[[0, j]], expect, max_relative = 1e-12);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = crate::rng::SeedRng::new(19);
        for seed in 0..4u64 {
            let mut r = crate::rng::SeedRng::new(100 + seed);
            let net = Mlp::<f64>::he_init(&[3, 7, 5, 2], &mut r);
            let x = Array2::from_shape_fn((4, 3), |_| rng.normal());
            fd_check(&net, &x, 1e-6);
        }
    }

    #[test]
    fn positive_homogeneity_per_layer() {
        // Scaling a hidden layer's incoming weights and biases by c > 0
        // scales its activations by c.
        let mut rng = crate::rng::SeedRng::new(23);
        let net = Mlp::<f64>::he_init(&[3, 6, 2], &mut rng);
        let x = Array2::from_shape_fn((2, 3), |_| rng.normal());
        let (_, cache) = net.forward(x.clone()).unwrap();
        let mut scaled = net.clone();
        let c = 2.5;
        scaled.layers[0].w.mapv_inplace(|v| v * c);
        scaled.layers[0].b.mapv_inplace(|v| v * c);
        let (_, cache2) = scaled.forward(x).unwrap();
        for (a, b) in cache.hidden[0].iter().zip(cache2.hidden[0].iter()) {
            assert_relative_eq!(*a * c, *b, max_relative = 1e-12);
        }
    }

    #[test]
    fn l1_cases() {
        let p = Array2::from_shape_vec((2, 2), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (loss, grad) = l1_loss(&p, &p).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|v| *v == 0.0));

        let t = p.mapv(|v| v - 0.5);
        let (loss, grad) = l1_loss(&p, &t).unwrap();
        assert_relative_eq!(loss, 0.5, max_relative = 1e-12);
        assert!(grad.iter().all(|v: &f64| (*v - 0.25).abs() < 1e-12));

        // Mixed signs, enumerated by hand.
        let a = Array2::from_shape_vec((2, 2), vec![1.0, -2.0, 0.0, 3.0]).unwrap();
        let b = Array2::from_shape_vec((2, 2), vec![0.0, -1.0, 0.0, 5.0]).unwrap();
        let (loss, grad) = l1_loss(&a, &b).unwrap();
        assert_relative_eq!(loss, (1.0 + 1.0 + 0.0 + 2.0) / 4.0, max_relative = 1e-12);
        assert_eq!(grad[[0, 0]], 0.25);
        assert_eq!(grad[[0, 1]], -0.25);
        assert_eq!(grad[[1, 0]], 0.0);
        assert_eq!(grad[[1, 1]], -0.25);
    }

    #[test]
    fn width_mismatch_is_error() {
        let net = Mlp::<f64>::zeros(&[3, 2]);
        assert!(net.forward(Array2::zeros((1, 4))).is_err());
    }
}
