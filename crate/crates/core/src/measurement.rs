//! Heterodyne and homodyne detection on single-mode Gaussian states.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use nalgebra::{Matrix2, Vector2};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::phasespace::{coherent, fidelity, GaussianState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasurementError {
    #[error("quadrature angle {0} outside [0, π)")]
    Angle(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasurementKind {
    Heterodyne,
    Homodyne,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub kind: MeasurementKind,
    /// Homodyne only; `0` measures `q̂` and `π/2` measures `p̂`.
    pub quadrature_angle: f64,
}

impl Measurement {
    pub fn heterodyne() -> Self {
        Measurement { kind: MeasurementKind::Heterodyne, quadrature_angle: 0.0 }
    }

    pub fn homodyne(angle: f64) -> Result<Self, MeasurementError> {
        if !(0.0..PI).contains(&angle) {
            return Err(MeasurementError::Angle(angle));
        }
        Ok(Measurement { kind: MeasurementKind::Homodyne, quadrature_angle: angle })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Outcome {
    Complex(Complex64),
    Real(f64),
}

impl Outcome {
    pub fn real(&self) -> f64 {
        match *self {
            Outcome::Real(q) => q,
            Outcome::Complex(b) => b.re,
        }
    }

    pub fn complex(&self) -> Complex64 {
        match *self {
            Outcome::Real(q) => Complex64::new(q, 0.0),
            Outcome::Complex(b) => b,
        }
    }
}

/// Generator for sample `index` of a run seeded with `seed`. Streams are
/// independent of one another and of evaluation order.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Seed for an independent sub-run `tag` of a run seeded with `seed`.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// `(1/π) F(|β⟩, ρ)` through the general fidelity formula.
pub fn heterodyne_density(st: &GaussianState, beta: Complex64) -> f64 {
    fidelity(&coherent(beta), st) / PI
}

/// Precomputed heterodyne outcome density of a fixed state. Agrees with
/// [`heterodyne_density`] and is much cheaper to evaluate repeatedly.
#[derive(Debug, Clone, Copy)]
pub struct HeterodyneKernel {
    mean: Vector2<f64>,
    inv: Matrix2<f64>,
    norm: f64,
}

impl HeterodyneKernel {
    pub fn new(st: &GaussianState) -> Self {
        let m = st.cov + Matrix2::identity() * 0.5;
        let inv = m.try_inverse().expect("σ + I/2 is positive definite");
        HeterodyneKernel { mean: st.mean, inv, norm: 1.0 / (PI * m.determinant().sqrt()) }
    }

    /// Density at `β = (re, im)`.
    #[inline]
    pub fn density_xy(&self, re: f64, im: f64) -> f64 {
        let s2 = std::f64::consts::SQRT_2;
        let d0 = s2 * re - self.mean[0];
        let d1 = s2 * im - self.mean[1];
        let q = self.inv[(0, 0)] * d0 * d0 + 2.0 * self.inv[(0, 1)] * d0 * d1 + self.inv[(1, 1)] * d1 * d1;
        self.norm * (-0.5 * q).exp()
    }

    pub fn density(&self, beta: Complex64) -> f64 {
        self.density_xy(beta.re, beta.im)
    }
}

/// Mean and variance of the homodyne record at `angle`.
pub fn homodyne_moments(st: &GaussianState, angle: f64) -> (f64, f64) {
    let (s, c) = angle.sin_cos();
    let mean = c * st.mean[0] + s * st.mean[1];
    let var = c * c * st.cov[(0, 0)] + 2.0 * c * s * st.cov[(0, 1)] + s * s * st.cov[(1, 1)];
    (mean, var)
}

pub fn gaussian_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    (-0.5 * d * d / var).exp() / (2.0 * PI * var).sqrt()
}

pub fn homodyne_density(st: &GaussianState, q: f64, angle: f64) -> f64 {
    let (m, v) = homodyne_moments(st, angle);
    gaussian_pdf(q, m, v)
}

pub fn sample_outcome<R: Rng + ?Sized>(st: &GaussianState, meas: &Measurement, rng: &mut R) -> Outcome {
    match meas.kind {
        MeasurementKind::Heterodyne => {
            let m = st.cov + Matrix2::identity() * 0.5;
            let l00 = m[(0, 0)].sqrt();
            let l10 = m[(1, 0)] / l00;
            let l11 = (m[(1, 1)] - l10 * l10).sqrt();
            let z0: f64 = rng.sample(StandardNormal);
            let z1: f64 = rng.sample(StandardNormal);
            let x0 = st.mean[0] + l00 * z0;
            let x1 = st.mean[1] + l10 * z0 + l11 * z1;
            Outcome::Complex(Complex64::new(x0, x1) * FRAC_1_SQRT_2)
        }
        MeasurementKind::Homodyne => {
            let (m, v) = homodyne_moments(st, meas.quadrature_angle);
            let z: f64 = rng.sample(StandardNormal);
            Outcome::Real(m + v.sqrt() * z)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phasespace::{displace, gamma_qq, rotate, squeeze, vacuum, ProbeSpec};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn heterodyne_peak_values() {
        let a = c(0.7, -0.4);
        assert_relative_eq!(heterodyne_density(&coherent(a), a), 1.0 / PI, max_relative = 1e-14);
        let r = 0.9;
        let sq = squeeze(&vacuum(), r, 0.0);
        assert_relative_eq!(heterodyne_density(&sq, c(0.0, 0.0)), 1.0 / (PI * r.cosh()), max_relative = 1e-14);
    }

    #[test]
    fn kernel_agrees_with_fidelity_route() {
        let st = ProbeSpec::new(c(0.5, 1.2), 0.8, 2.1).unwrap().state();
        let k = HeterodyneKernel::new(&st);
        for &b in &[c(0.0, 0.0), c(1.0, -0.3), c(-2.0, 2.5), c(0.5, 1.2)] {
            assert_relative_eq!(k.density(b), heterodyne_density(&st, b), max_relative = 1e-12);
        }
    }

    #[test]
    fn heterodyne_normalised_on_disc() {
        let st = ProbeSpec::new(c(0.3, 0.0), 0.5, 0.0).unwrap().state();
        let k = HeterodyneKernel::new(&st);
        let (n, half) = (400usize, 8.0);
        let h = 2.0 * half / n as f64;
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                let x = -half + h * (i as f64 + 0.5);
                let y = -half + h * (j as f64 + 0.5);
                total += k.density_xy(0.3 + x, y);
            }
        }
        assert!((total * h * h - 1.0).abs() < 1e-5);
    }

    #[test]
    fn homodyne_closed_forms() {
        assert_relative_eq!(homodyne_density(&vacuum(), 0.0, 0.0), 1.0 / PI.sqrt(), max_relative = 1e-15);
        // Displaced squeezed probe rotated by θ, read out on q̂.
        let (alpha, r, phi, theta, q) = (1.3, 0.6, 0.9, 0.4, 0.25);
        let st = rotate(&displace(&squeeze(&vacuum(), r, phi), c(alpha, 0.0)), theta);
        let g = gamma_qq(r, phi + 2.0 * theta);
        let oracle = (-(q - 2f64.sqrt() * alpha * theta.cos()).powi(2) / g).exp() / (PI * g).sqrt();
        assert_relative_eq!(homodyne_density(&st, q, 0.0), oracle, max_relative = 1e-13);
    }

    #[test]
    fn homodyne_angle_reads_rotated_quadrature() {
        let st = coherent(c(0.0, 1.0));
        let (m, _) = homodyne_moments(&st, PI / 2.0);
        assert_relative_eq!(m, 2f64.sqrt(), max_relative = 1e-15);
        let (m_rot, v_rot) = homodyne_moments(&rotate(&st, 0.3), 0.0);
        let (m_ang, v_ang) = homodyne_moments(&st, 0.3);
        assert_relative_eq!(m_rot, m_ang, epsilon = 1e-15);
        assert_relative_eq!(v_rot, v_ang, epsilon = 1e-15);
        assert!(Measurement::homodyne(PI).is_err());
    }

    #[test]
    fn homodyne_normalised() {
        let st = ProbeSpec::new(c(1.0, 0.5), 1.0, 0.3).unwrap().state();
        let (m, v) = homodyne_moments(&st, 0.7);
        let sd = v.sqrt();
        let n = 4000;
        let h = 20.0 * sd / n as f64;
        let total: f64 = (0..=n)
            .map(|i| {
                let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                w * homodyne_density(&st, m - 10.0 * sd + h * i as f64, 0.7)
            })
            .sum();
        assert!((total * h - 1.0).abs() < 1e-8);
    }

    #[test]
    fn sample_moments() {
        let n = 100_000;
        let mut rng = stream_rng(7, 0);
        let hom = Measurement::homodyne(0.0).unwrap();
        let mean: f64 = (0..n).map(|_| sample_outcome(&vacuum(), &hom, &mut rng).real()).sum::<f64>() / n as f64;
        assert!(mean.abs() < 3.0 * FRAC_1_SQRT_2 / (n as f64).sqrt());
        let het = Measurement::heterodyne();
        let st = coherent(c(1.0, 0.0));
        let mean: f64 = (0..n).map(|_| sample_outcome(&st, &het, &mut rng).complex().re).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 3.0 / (n as f64).sqrt());
    }

    #[test]
    fn sampling_is_deterministic() {
        let st = ProbeSpec::new(c(0.2, 0.1), 0.4, 1.0).unwrap().state();
        let het = Measurement::heterodyne();
        let a: Vec<Outcome> = {
            let mut rng = stream_rng(11, 3);
            (0..20).map(|_| sample_outcome(&st, &het, &mut rng)).collect()
        };
        let b: Vec<Outcome> = {
            let mut rng = stream_rng(11, 3);
            (0..20).map(|_| sample_outcome(&st, &het, &mut rng)).collect()
        };
        assert_eq!(a, b);
        let mut other = stream_rng(11, 4);
        assert_ne!(a[0], sample_outcome(&st, &het, &mut other));
    }

    #[test]
    fn heterodyne_covariance_of_samples() {
        // Empirical second moments of x = √2 β against σ + I/2.
        let st = ProbeSpec::new(c(0.5, -0.5), 0.7, 0.8).unwrap().state();
        let het = Measurement::heterodyne();
        let n = 100_000;
        let mut rng = stream_rng(5, 0);
        let xs: Vec<Vector2<f64>> = (0..n)
            .map(|_| {
                let b = sample_outcome(&st, &het, &mut rng).complex();
                Vector2::new(b.re, b.im) * 2f64.sqrt()
            })
            .collect();
        let m: Vector2<f64> = xs.iter().sum::<Vector2<f64>>() / n as f64;
        let target = st.cov + Matrix2::identity() * 0.5;
        for i in 0..2 {
            let se = (target[(i, i)] / n as f64).sqrt();
            assert!((m[i] - st.mean[i]).abs() < 4.0 * se);
            for j in 0..2 {
                let cov_ij: f64 = xs.iter().map(|x| (x[i] - m[i]) * (x[j] - m[j])).sum::<f64>() / (n - 1) as f64;
                let se = ((target[(i, i)] * target[(j, j)] + target[(i, j)].powi(2)) / n as f64).sqrt();
                assert!((cov_ij - target[(i, j)]).abs() < 4.0 * se, "{i}{j}: {cov_ij}");
            }
        }
    }

    proptest! {
        #[test]
        fn heterodyne_is_displacement_covariant(
            ar in -2.0..2.0f64, ai in -2.0..2.0f64, r in 0.0..1.2f64, phi in 0.0..std::f64::consts::TAU,
            br in -3.0..3.0f64, bi in -3.0..3.0f64,
        ) {
            let base = squeeze(&vacuum(), r, phi);
            let shifted = displace(&base, c(ar, ai));
            let lhs = heterodyne_density(&shifted, c(br, bi));
            let rhs = heterodyne_density(&base, c(br - ar, bi - ai));
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1e-300) + 1e-300);
        }
    }
}
