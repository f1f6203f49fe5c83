//! Masking operators: pixel-domain inpainting and gridded Fourier coverage
//! (the simplified radio-interferometry model), plus a synthetic uv-coverage
//! generator.

use num_complex::Complex;

use crate::fft::{fft2, freq_index, ifft2};
use crate::grid::GridImage;
use crate::ops::{awgn, LinearOperator, NoiseSpec};
use crate::rng::SeedRng;
use crate::{Error, Real, Result};

/// Elementwise pixel mask (entries in {0, 1}).
pub struct InpaintOp<T> {
    pub mask: GridImage<T>,
}

impl<T: Real> InpaintOp<T> {
    pub fn new(mask: GridImage<T>) -> Result<Self> {
        if !mask.data().iter().all(|v| *v == T::zero() || *v == T::one()) {
            return Err(Error::InvalidInput("mask entries must be 0 or 1".into()));
        }
        Ok(Self { mask })
    }

    /// Bernoulli mask keeping each pixel with probability `1 - p_masked`,
    /// shared across channels.
    pub fn random(h: usize, w: usize, c: usize, p_masked: f64, rng: &mut SeedRng) -> Self {
        let mut mask = GridImage::zeros(h, w, c);
        for i in 0..h * w {
            let keep = rng.uniform() >= p_masked;
            for ch in 0..c {
                mask.data_mut()[i * c + ch] = if keep { T::one() } else { T::zero() };
            }
        }
        Self { mask }
    }

    pub fn coverage(&self) -> f64 {
        let kept = self.mask.data().iter().filter(|v| **v == T::one()).count();
        kept as f64 / self.mask.data().len() as f64
    }
}

impl<T: Real> LinearOperator<T> for InpaintOp<T> {
    fn apply(&self, f: &GridImage<T>) -> Result<GridImage<T>> {
        if !f.same_shape(&self.mask) {
            return Err(Error::Shape("image does not match mask shape".into()));
        }
        let data = f
            .data()
            .iter()
            .zip(self.mask.data())
            .map(|(&a, &m)| a * m)
            .collect();
        Ok(GridImage::from_vec_unchecked(
            f.height(),
            f.width(),
            f.channels(),
            data,
        ))
    }

    fn adjoint(&self, q: &GridImage<T>) -> Result<GridImage<T>> {
        self.apply(q)
    }

    fn domain_shape(&self) -> (usize, usize, usize) {
        (self.mask.height(), self.mask.width(), self.mask.channels())
    }

    /// Observed pixels blend toward the data, unobserved stay at z:
    /// x = (m·q + α·z) / (m + α).
    fn data_prox(&self, z: &GridImage<T>, q: &GridImage<T>, alpha: T) -> Option<Result<GridImage<T>>> {
        if !q.same_shape(&self.mask) || !z.same_shape(&self.mask) {
            return Some(Err(Error::Shape("data_prox shapes do not match mask".into())));
        }
        let data = self
            .mask
            .data()
            .iter()
            .zip(q.data().iter().zip(z.data().iter()))
            .map(|(&m, (&qi, &zi))| (m * qi + alpha * zi) / (m + alpha))
            .collect();
        Some(Ok(GridImage::from_vec_unchecked(
            q.height(),
            q.width(),
            q.channels(),
            data,
        )))
    }
}

/// Masked unitary Fourier measurements of a real single-channel image.
/// Measurements are stored as a full-grid 2-channel (Re, Im) image with
/// zeros off the mask; the forward transform is scaled by 1/M so the
/// operator is a partial isometry and its adjoint is the zero-filled
/// inverse transform.
pub struct FourierMaskOp {
    pub m: usize,
    /// Row-major `m·m` coverage flags.
    pub mask: Vec<bool>,
}

impl FourierMaskOp {
    pub fn new(m: usize, mask: Vec<bool>) -> Result<Self> {
        crate::fft::check_pow2(m, m)?;
        if mask.len() != m * m {
            return Err(Error::Shape("mask length != m*m".into()));
        }
        Ok(Self { m, mask })
    }

    pub fn coverage(&self) -> f64 {
        self.mask.iter().filter(|v| **v).count() as f64 / self.mask.len() as f64
    }

    /// Effective symbol of A*A on real images: the mask averaged with its
    /// point reflection (real fields tie +k and -k).
    fn sym_mask(&self, k: usize) -> f64 {
        let m = self.m;
        let (r, c) = (k / m, k % m);
        let rr = (m - r) % m;
        let cc = (m - c) % m;
        let a = if self.mask[k] { 1.0 } else { 0.0 };
        let b = if self.mask[rr * m + cc] { 1.0 } else { 0.0 };
        0.5 * (a + b)
    }
}

impl<T: Real> LinearOperator<T> for FourierMaskOp {
    fn apply(&self, f: &GridImage<T>) -> Result<GridImage<T>> {
        let m = self.m;
        if f.height() != m || f.width() != m || f.channels() != 1 {
            return Err(Error::Shape(format!(
                "fourier mask expects {m}x{m}x1, got {}x{}x{}",
                f.height(),
                f.width(),
                f.channels()
            )));
        }
        let scale = T::one() / T::from_f64_c(m as f64);
        let spec = fft2(f.data(), m)?;
        let mut out = GridImage::zeros(m, m, 2);
        for (i, s) in spec.iter().enumerate() {
            if self.mask[i] {
                out.data_mut()[2 * i] = s.re * scale;
                out.data_mut()[2 * i + 1] = s.im * scale;
            }
        }
        Ok(out)
    }

    fn adjoint(&self, q: &GridImage<T>) -> Result<GridImage<T>> {
        let m = self.m;
        if q.height() != m || q.width() != m || q.channels() != 2 {
            return Err(Error::Shape("adjoint expects an mxmx2 spectrum image".into()));
        }
        let mut spec = vec![Complex::new(T::zero(), T::zero()); m * m];
        for i in 0..m * m {
            if self.mask[i] {
                spec[i] = Complex::new(q.data()[2 * i], q.data()[2 * i + 1]);
            }
        }
        let field = ifft2(&spec, m)?;
        let scale = T::from_f64_c(m as f64);
        let data = field.iter().map(|v| v.re * scale).collect();
        Ok(GridImage::from_vec_unchecked(m, m, 1, data))
    }

    fn domain_shape(&self) -> (usize, usize, usize) {
        (self.m, self.m, 1)
    }

    /// Diagonal solve in the Fourier domain with the symmetrized mask
    /// symbol: x̂ = ŵ / (m_sym + α), w = A*q + α·z.
    fn data_prox(&self, z: &GridImage<T>, q: &GridImage<T>, alpha: T) -> Option<Result<GridImage<T>>> {
        let run = || -> Result<GridImage<T>> {
            let m = self.m;
            let aq = self.adjoint(q)?;
            let w: Vec<T> = aq
                .data()
                .iter()
                .zip(z.data().iter())
                .map(|(&a, &b)| a + alpha * b)
                .collect();
            let mut spec = fft2(&w, m)?;
            for (k, v) in spec.iter_mut().enumerate() {
                let denom = T::from_f64_c(self.sym_mask(k)) + alpha;
                *v = *v / denom;
            }
            let field = ifft2(&spec, m)?;
            Ok(GridImage::from_vec_unchecked(
                m,
                m,
                1,
                field.iter().map(|v| v.re).collect(),
            ))
        };
        Some(run())
    }

    /// Complex noise lands only on observed coefficients; the SNR is
    /// measured over the observed entries.
    fn simulate(&self, f: &GridImage<T>, noise: &NoiseSpec, rng: &mut SeedRng) -> Result<GridImage<T>> {
        let q = self.apply(f)?;
        let observed: Vec<T> = (0..self.m * self.m)
            .filter(|i| self.mask[*i])
            .flat_map(|i| [q.data()[2 * i], q.data()[2 * i + 1]])
            .collect();
        let norm2 = observed.iter().map(|v| v.to_f64_c().powi(2)).sum::<f64>().sqrt();
        let sigma = noise.sigma_for(norm2, observed.len());
        let mut out = q;
        for i in 0..self.m * self.m {
            if self.mask[i] {
                out.data_mut()[2 * i] += T::from_f64_c(rng.normal() * sigma);
                out.data_mut()[2 * i + 1] += T::from_f64_c(rng.normal() * sigma);
            }
        }
        Ok(out)
    }
}

/// Synthetic uv coverage: a union of elliptical tracks through the frequency
/// plane, Hermitian-symmetrized so masked spectra of real images stay
/// conjugate-symmetric.
pub fn uv_mask_gen(m: usize, tracks: usize, rng: &mut SeedRng) -> Result<Vec<bool>> {
    crate::fft::check_pow2(m, m)?;
    if tracks == 0 {
        return Err(Error::InvalidInput("need at least one uv track".into()));
    }
    let mut mask = vec![false; m * m];
    let half = m as f64 / 2.0;
    for _ in 0..tracks {
        let a = (0.08 + 0.38 * rng.uniform()) * half;
        let b = (0.08 + 0.38 * rng.uniform()) * half;
        let phi = rng.uniform() * std::f64::consts::PI;
        let (sp, cp) = phi.sin_cos();
        let start = rng.uniform() * 2.0 * std::f64::consts::PI;
        let span = (0.5 + 1.5 * rng.uniform()) * std::f64::consts::PI;
        let steps = (4 * m).max(64);
        for s in 0..steps {
            let th = start + span * s as f64 / steps as f64;
            let (u0, v0) = (a * th.cos(), b * th.sin());
            let u = cp * u0 - sp * v0;
            let v = sp * u0 + cp * v0;
            let ku = (u.round() as i64).rem_euclid(m as i64) as usize;
            let kv = (v.round() as i64).rem_euclid(m as i64) as usize;
            mask[kv * m + ku] = true;
        }
    }
    // Hermitian closure: mask[-k] == mask[k].
    let snapshot = mask.clone();
    for r in 0..m {
        for c in 0..m {
            if snapshot[r * m + c] {
                let rr = (m - r) % m;
                let cc = (m - c) % m;
                mask[rr * m + cc] = true;
            }
        }
    }
    Ok(mask)
}

/// Fraction of frequency bins covered by a mask.
pub fn mask_coverage(mask: &[bool]) -> f64 {
    mask.iter().filter(|v| **v).count() as f64 / mask.len() as f64
}

/// Convenience for tests: does the mask have Hermitian symmetry?
pub fn is_hermitian(mask: &[bool], m: usize) -> bool {
    for r in 0..m {
        for c in 0..m {
            let rr = (m - r) % m;
            let cc = (m - c) % m;
            if mask[r * m + c] != mask[rr * m + cc] {
                return false;
            }
        }
    }
    true
}

/// Low-frequency disk mask (test helper and simple coverage baseline).
pub fn lowpass_mask(m: usize, radius: f64) -> Vec<bool> {
    let mut mask = vec![false; m * m];
    for r in 0..m {
        let ky = freq_index(r, m) as f64;
        for c in 0..m {
            let kx = freq_index(c, m) as f64;
            if (kx * kx + ky * ky).sqrt() <= radius {
                mask[r * m + c] = true;
            }
        }
    }
    mask
}

/// Masked noisy observation for inpainting: mask ⊙ (f + n).
pub fn inpaint_simulate<T: Real>(
    op: &InpaintOp<T>,
    f: &GridImage<T>,
    noise: &NoiseSpec,
    rng: &mut SeedRng,
) -> Result<GridImage<T>> {
    let noisy = awgn(f, noise, rng);
    op.apply(&noisy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn random_image(rng: &mut SeedRng, m: usize, c: usize) -> GridImage<f64> {
        GridImage::from_vec(m, m, c, (0..m * m * c).map(|_| rng.normal()).collect()).unwrap()
    }

    fn dot(a: &GridImage<f64>, b: &GridImage<f64>) -> f64 {
        a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn inpaint_prox_closed_forms() {
        let mut rng = SeedRng::new(2);
        // Full mask: (q + a z)/(1 + a).
        let full = InpaintOp::new(GridImage::from_vec(2, 2, 1, vec![1.0; 4]).unwrap()).unwrap();
        let q = GridImage::from_vec(2, 2, 1, vec![1.0; 4]).unwrap();
        let z = GridImage::zeros(2, 2, 1);
        let x = full.data_prox(&z, &q, 0.05).unwrap().unwrap();
        for v in x.data() {
            assert_relative_eq!(*v, 1.0 / 1.05, max_relative = 1e-12);
        }
        // Empty mask: returns z.
        let empty = InpaintOp::new(GridImage::zeros(2, 2, 1)).unwrap();
        let z = random_image(&mut rng, 2, 1);
        let x = empty.data_prox(&z, &q, 0.3).unwrap().unwrap();
        for (a, b) in x.data().iter().zip(z.data()) {
            assert_relative_eq!(a, b, max_relative = 1e-12);
        }
    }

    #[test]
    fn inpaint_adjoint_identity() {
        let mut rng = SeedRng::new(3);
        let op = InpaintOp::<f64>::random(8, 8, 1, 0.3, &mut rng);
        let f = random_image(&mut rng, 8, 1);
        let q = random_image(&mut rng, 8, 1);
        let lhs = dot(&op.apply(&f).unwrap(), &q);
        let rhs = dot(&f, &op.adjoint(&q).unwrap());
        assert_relative_eq!(lhs, rhs, max_relative = 1e-12);
    }

    #[test]
    fn fourier_mask_adjoint_identity() {
        let mut rng = SeedRng::new(5);
        let m = 16;
        let mask = uv_mask_gen(m, 3, &mut rng).unwrap();
        let op = FourierMaskOp::new(m, mask).unwrap();
        let f = random_image(&mut rng, m, 1);
        let q = random_image(&mut rng, m, 2);
        let lhs = dot(&LinearOperator::<f64>::apply(&op, &f).unwrap(), &q);
        let rhs = dot(&f, &LinearOperator::<f64>::adjoint(&op, &q).unwrap());
        assert_relative_eq!(lhs, rhs, max_relative = 1e-8, epsilon = 1e-10);
    }

    #[test]
    fn fourier_full_mask_prox_is_blend() {
        // Full coverage: x = (A*q + a z)/(1 + a) = blended image.
        let mut rng = SeedRng::new(7);
        let m = 8;
        let op = FourierMaskOp::new(m, vec![true; m * m]).unwrap();
        let f = random_image(&mut rng, m, 1);
        let q = LinearOperator::<f64>::apply(&op, &f).unwrap();
        let z = random_image(&mut rng, m, 1);
        let alpha = 0.4;
        let x = op.data_prox(&z, &q, alpha).unwrap().unwrap();
        for i in 0..m * m {
            let expect = (f.data()[i] + alpha * z.data()[i]) / (1.0 + alpha);
            assert_relative_eq!(x.data()[i], expect, max_relative = 1e-9, epsilon = 1e-11);
        }
    }

    #[test]
    fn fourier_empty_mask_prox_returns_z() {
        let mut rng = SeedRng::new(9);
        let m = 8;
        let op = FourierMaskOp::new(m, vec![false; m * m]).unwrap();
        let q = GridImage::zeros(m, m, 2);
        let z = random_image(&mut rng, m, 1);
        let x = op.data_prox(&z, &q, 0.7).unwrap().unwrap();
        for (a, b) in x.data().iter().zip(z.data()) {
            assert_relative_eq!(a, b, max_relative = 1e-9, epsilon = 1e-12);
        }
    }

    #[test]
    fn uv_mask_properties() {
        let m = 32;
        let mut rng = SeedRng::new(11);
        let mask = uv_mask_gen(m, 4, &mut rng).unwrap();
        assert!(mask.iter().any(|v| *v), "mask must be nonempty");
        assert!(is_hermitian(&mask, m));
        // Deterministic under the seed.
        let mut rng2 = SeedRng::new(11);
        let mask2 = uv_mask_gen(m, 4, &mut rng2).unwrap();
        assert_eq!(mask, mask2);
        assert!(mask_coverage(&mask) > 0.0);
        assert!(uv_mask_gen(m, 0, &mut rng).is_err());
    }

    #[test]
    fn observed_snr_in_simulate() {
        let mut rng = SeedRng::new(13);
        let m = 64;
        let mask = lowpass_mask(m, 20.0);
        let op = FourierMaskOp::new(m, mask.clone()).unwrap();
        let f = random_image(&mut rng, m, 1);
        let q = LinearOperator::<f64>::apply(&op, &f).unwrap();
        let qn = op
            .simulate(&f, &NoiseSpec::SnrDb { snr_db: 30.0 }, &mut rng)
            .unwrap();
        let mut sig = 0.0;
        let mut noise = 0.0;
        for i in 0..m * m {
            if mask[i] {
                for ch in 0..2 {
                    let a = q.data()[2 * i + ch];
                    let b = qn.data()[2 * i + ch];
                    sig += a * a;
                    noise += (a - b) * (a - b);
                }
            } else {
                assert_eq!(qn.data()[2 * i], 0.0);
            }
        }
        let snr = 10.0 * (sig / noise).log10();
        assert!((snr - 30.0).abs() < 1.0, "snr {snr}");
    }
}
