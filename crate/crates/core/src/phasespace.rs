//! Single-mode Gaussian states in the `(q, p)` quadrature representation.
//!
//! Covariances follow the vacuum = ½·I convention. The Wigner function and
//! the fidelity are written in terms of `Γ = 2σ`.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Vector2};
use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhaseSpaceError {
    #[error("covariance is not symmetric positive definite")]
    NotPositiveDefinite,
    #[error("covariance violates the uncertainty relation: det = {det}")]
    Uncertainty { det: f64 },
    #[error("degenerate state: det Γ = {det}")]
    Degenerate { det: f64 },
    #[error("squeezing strength must be non-negative, got {0}")]
    NegativeSqueezing(f64),
}

/// First and second moments of a single-mode Gaussian state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianState {
    pub mean: Vector2<f64>,
    pub cov: Matrix2<f64>,
}

impl GaussianState {
    /// Validated constructor.
    pub fn new(mean: Vector2<f64>, cov: Matrix2<f64>) -> Result<Self, PhaseSpaceError> {
        let sym = (cov[(0, 1)] - cov[(1, 0)]).abs() <= 1e-12 * cov.abs().max().max(1.0);
        if !sym || cov[(0, 0)] <= 0.0 || cov.determinant() <= 0.0 {
            return Err(PhaseSpaceError::NotPositiveDefinite);
        }
        let det = cov.determinant();
        if det < 0.25 - 1e-12 {
            return Err(PhaseSpaceError::Uncertainty { det });
        }
        Ok(GaussianState { mean, cov })
    }

    pub fn gamma(&self) -> Matrix2<f64> {
        self.cov * 2.0
    }

    pub fn is_pure(&self) -> bool {
        (self.cov.determinant() - 0.25).abs() <= 1e-9
    }
}

/// Displacement, squeezing strength and squeezing angle of a probe
/// `D(α) S(s e^{iψ}) |0⟩`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeSpec {
    pub alpha: Complex64,
    pub s: f64,
    pub psi: f64,
}

impl ProbeSpec {
    pub fn new(alpha: Complex64, s: f64, psi: f64) -> Result<Self, PhaseSpaceError> {
        if !(s >= 0.0) {
            return Err(PhaseSpaceError::NegativeSqueezing(s));
        }
        Ok(ProbeSpec { alpha, s, psi })
    }

    pub fn coherent(alpha: Complex64) -> Self {
        ProbeSpec { alpha, s: 0.0, psi: 0.0 }
    }

    pub fn state(&self) -> GaussianState {
        displace(&squeeze(&vacuum(), self.s, self.psi), self.alpha)
    }

    /// `|α|² + sinh² s`.
    pub fn mean_photon(&self) -> f64 {
        self.alpha.norm_sqr() + self.s.sinh().powi(2)
    }
}

pub fn vacuum() -> GaussianState {
    GaussianState { mean: Vector2::zeros(), cov: Matrix2::identity() * 0.5 }
}

pub fn coherent(alpha: Complex64) -> GaussianState {
    displace(&vacuum(), alpha)
}

pub fn displace(st: &GaussianState, alpha: Complex64) -> GaussianState {
    let shift = Vector2::new(alpha.re, alpha.im) * std::f64::consts::SQRT_2;
    GaussianState { mean: st.mean + shift, cov: st.cov }
}

/// Symplectic matrix of `S(r e^{iφ})`.
pub fn squeeze_symplectic(r: f64, phi: f64) -> Matrix2<f64> {
    let (s, c) = phi.sin_cos();
    let a = Matrix2::new(c, -s, -s, -c);
    Matrix2::identity() * r.cosh() - a * r.sinh()
}

/// Clockwise rotation matrix, so that a coherent amplitude `α` rotated by
/// `θ` has mean `√2 α (cos θ, −sin θ)`.
pub fn rotation(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, s, -s, c)
}

fn transform(st: &GaussianState, m: &Matrix2<f64>) -> GaussianState {
    let cov = m * st.cov * m.transpose();
    GaussianState { mean: m * st.mean, cov: (cov + cov.transpose()) * 0.5 }
}

pub fn squeeze(st: &GaussianState, r: f64, phi: f64) -> GaussianState {
    transform(st, &squeeze_symplectic(r, phi))
}

pub fn rotate(st: &GaussianState, theta: f64) -> GaussianState {
    transform(st, &rotation(theta))
}

/// Covariance entry `Γ_qq = cosh 2r − cos φ sinh 2r` of a squeezed vacuum.
pub fn gamma_qq(r: f64, phi: f64) -> f64 {
    (2.0 * r).cosh() - phi.cos() * (2.0 * r).sinh()
}

pub fn wigner(st: &GaussianState, x: Vector2<f64>) -> Result<f64, PhaseSpaceError> {
    let g = st.gamma();
    let det = g.determinant();
    let inv = g.try_inverse().filter(|_| det > 0.0);
    let inv = inv.ok_or(PhaseSpaceError::Degenerate { det })?;
    let d = x - st.mean;
    Ok((-(d.transpose() * inv * d)[(0, 0)]).exp() / (PI * det.sqrt()))
}

/// Uhlmann fidelity between two single-mode Gaussian states.
pub fn fidelity(a: &GaussianState, b: &GaussianState) -> f64 {
    let ga = a.gamma();
    let gb = b.gamma();
    let sum = ga + gb;
    let big = sum.determinant();
    let small = ((ga.determinant() - 1.0) * (gb.determinant() - 1.0)).max(0.0);
    let d = a.mean - b.mean;
    let inv = sum.try_inverse().unwrap_or_else(Matrix2::zeros);
    let quad = (d.transpose() * inv * d)[(0, 0)];
    let f = 2.0 * (-quad).exp() / ((big + small).sqrt() - small.sqrt());
    f.clamp(0.0, 1.0)
}

pub fn mean_photon(st: &GaussianState) -> f64 {
    0.5 * st.mean.norm_squared() + 0.5 * (st.cov.trace() - 1.0)
}

/// Finite-difference quantum Fisher information.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QfiEstimate {
    pub value: f64,
    /// Set when rounding pushed the fidelity above one and the estimate was
    /// clamped to zero.
    pub clamped: bool,
}

pub const DEFAULT_QFI_STEP: f64 = 1e-4;

pub fn qfi_fidelity<F>(family: F, theta: f64, dtheta: f64) -> QfiEstimate
where
    F: Fn(f64) -> GaussianState,
{
    let f = fidelity(&family(theta), &family(theta + dtheta));
    let raw = 8.0 * (1.0 - f.sqrt()) / (dtheta * dtheta);
    if raw < 0.0 {
        QfiEstimate { value: 0.0, clamped: true }
    } else {
        QfiEstimate { value: raw, clamped: false }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn vacuum_basics() {
        let v = vacuum();
        assert_eq!(v.mean, Vector2::zeros());
        assert_relative_eq!(v.cov.determinant(), 0.25);
        assert_relative_eq!(wigner(&v, Vector2::zeros()).unwrap(), 1.0 / PI);
        assert_eq!(mean_photon(&v), 0.0);
    }

    #[test]
    fn displacement_moves_the_mean() {
        let s2 = std::f64::consts::SQRT_2;
        assert_relative_eq!(coherent(c(1.0, 0.0)).mean, Vector2::new(s2, 0.0));
        assert_relative_eq!(coherent(c(0.0, 1.0)).mean, Vector2::new(0.0, s2));
        let back = displace(&coherent(c(0.3, -1.1)), c(-0.3, 1.1));
        assert_relative_eq!(back.mean, vacuum().mean, epsilon = 1e-15);
    }

    #[test]
    fn squeezed_vacuum_covariances() {
        let r = 0.7;
        let s0 = squeeze(&vacuum(), r, 0.0);
        assert_relative_eq!(
            s0.cov,
            Matrix2::new((-2.0 * r).exp() / 2.0, 0.0, 0.0, (2.0 * r).exp() / 2.0),
            epsilon = 1e-14
        );
        let spi = squeeze(&vacuum(), r, PI);
        assert_relative_eq!(
            spi.cov,
            Matrix2::new((2.0 * r).exp() / 2.0, 0.0, 0.0, (-2.0 * r).exp() / 2.0),
            epsilon = 1e-14
        );
        let phi = 1.1;
        let sp = squeeze(&vacuum(), r, phi);
        let (ch, sh) = ((2.0 * r).cosh(), (2.0 * r).sinh());
        let expect = Matrix2::new(ch - phi.cos() * sh, phi.sin() * sh, phi.sin() * sh, ch + phi.cos() * sh) * 0.5;
        assert_relative_eq!(sp.cov, expect, epsilon = 1e-14);
    }

    #[test]
    fn rotation_convention() {
        let st = rotate(&coherent(c(1.0, 0.0)), PI / 2.0);
        assert_relative_eq!(st.mean, Vector2::new(0.0, -std::f64::consts::SQRT_2), epsilon = 1e-15);
        let p = ProbeSpec::new(c(0.4, 0.9), 0.6, 0.3).unwrap().state();
        let full = rotate(&p, 2.0 * PI);
        assert_relative_eq!(full.mean, p.mean, epsilon = 1e-14);
        assert_relative_eq!(full.cov, p.cov, epsilon = 1e-14);
        assert_relative_eq!(rotate(&vacuum(), 0.77).cov, vacuum().cov, epsilon = 1e-16);
    }

    #[test]
    fn rotation_shifts_squeezing_angle_by_twice_theta() {
        let (r, phi, theta) = (0.8, 0.4, 0.9);
        let a = rotate(&squeeze(&vacuum(), r, phi), theta);
        let b = squeeze(&vacuum(), r, phi + 2.0 * theta);
        assert_relative_eq!(a.cov, b.cov, epsilon = 1e-13);
    }

    #[test]
    fn wigner_peak_and_normalisation() {
        let st = coherent(c(1.0, 0.0));
        let peak = wigner(&st, Vector2::new(std::f64::consts::SQRT_2, 0.0)).unwrap();
        assert_relative_eq!(peak, 1.0 / PI, max_relative = 1e-15);
        let degenerate = GaussianState { mean: Vector2::zeros(), cov: Matrix2::zeros() };
        assert!(wigner(&degenerate, Vector2::zeros()).is_err());
    }

    #[test]
    fn fidelity_closed_forms() {
        let v = vacuum();
        assert_relative_eq!(fidelity(&v, &v), 1.0, epsilon = 1e-15);
        assert_relative_eq!(fidelity(&v, &coherent(c(1.0, 0.0))), (-1.0f64).exp(), max_relative = 1e-14);
        let sq = squeeze(&v, 1.0, 0.0);
        assert_relative_eq!(fidelity(&v, &sq), 1.0 / 1.0f64.cosh(), max_relative = 1e-14);
    }

    #[test]
    fn fidelity_between_mixed_states() {
        // Thermal states with mean photon numbers a and b have fidelity
        // 1/(√((a+1)(b+1)) − √(ab))².
        let thermal = |n: f64| GaussianState { mean: Vector2::zeros(), cov: Matrix2::identity() * (n + 0.5) };
        let (a, b) = (0.4f64, 1.3f64);
        let oracle = 1.0 / (((a + 1.0) * (b + 1.0)).sqrt() - (a * b).sqrt()).powi(2);
        assert_relative_eq!(fidelity(&thermal(a), &thermal(b)), oracle, max_relative = 1e-13);
    }

    #[test]
    fn photon_number() {
        assert_relative_eq!(mean_photon(&coherent(c(0.6, -0.8))), 1.0, epsilon = 1e-15);
        let sq = squeeze(&vacuum(), 1.0, 0.0);
        assert_relative_eq!(mean_photon(&sq), 1.0f64.sinh().powi(2), max_relative = 1e-14);
    }

    #[test]
    fn qfi_of_displacement_on_squeezed_vacuum() {
        let r = 0.6;
        let base = squeeze(&vacuum(), r, 0.0);
        let q = qfi_fidelity(|t| displace(&base, c(t, 0.0)), 0.0, DEFAULT_QFI_STEP);
        let bound = 4.0 * (2.0 * r).exp();
        assert!(!q.clamped);
        assert!(q.value <= bound * (1.0 + 1e-3));
        assert_relative_eq!(q.value, bound, max_relative = 1e-3);
    }

    #[test]
    fn qfi_of_phase_on_vacuum_vanishes() {
        let q = qfi_fidelity(|t| rotate(&vacuum(), t), 0.3, DEFAULT_QFI_STEP);
        assert!(q.value.abs() < 1e-6);
    }

    #[test]
    fn qfi_of_squeezing_respects_gaussian_bound() {
        for &(a, s) in &[(1.0, 0.0), (0.8, 0.5), (0.0, 1.0), (1.5, 0.3)] {
            let probe = ProbeSpec::new(c(a, 0.0), s, 0.0).unwrap();
            let n = probe.mean_photon();
            let st = probe.state();
            let q = qfi_fidelity(|t| squeeze(&st, t, 0.0), 0.0, DEFAULT_QFI_STEP);
            assert!(q.value <= 2.0 * (2.0 * n + 1.0).powi(2) + 1e-2, "{a} {s}: {}", q.value);
        }
    }

    #[test]
    fn constructor_rejects_unphysical_covariance() {
        let bad = Matrix2::identity() * 0.1;
        assert!(matches!(GaussianState::new(Vector2::zeros(), bad), Err(PhaseSpaceError::Uncertainty { .. })));
        assert!(GaussianState::new(Vector2::zeros(), Matrix2::new(1.0, 2.0, 2.0, 1.0)).is_err());
        assert!(ProbeSpec::new(c(0.0, 0.0), -0.1, 0.0).is_err());
    }

    fn arb_state() -> impl Strategy<Value = GaussianState> {
        (-2.0..2.0f64, -2.0..2.0f64, 0.0..1.2f64, 0.0..(2.0 * PI), -PI..PI, 0.0..1.0f64, 0.0..(2.0 * PI)).prop_map(
            |(ar, ai, r1, p1, th, r2, p2)| {
                let st = squeeze(&vacuum(), r1, p1);
                let st = displace(&st, c(ar, ai));
                let st = rotate(&st, th);
                squeeze(&st, r2, p2)
            },
        )
    }

    proptest! {
        #[test]
        fn compositions_stay_pure(st in arb_state()) {
            prop_assert!((st.cov.determinant() - 0.25).abs() < 1e-12 * st.cov.norm().max(1.0).powi(2));
        }

        #[test]
        fn fidelity_symmetric_and_bounded(a in arb_state(), b in arb_state()) {
            let fab = fidelity(&a, &b);
            let fba = fidelity(&b, &a);
            prop_assert!((fab - fba).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&fab));
            prop_assert!((fidelity(&a, &a) - 1.0).abs() < 1e-9);
        }

        #[test]
        fn photon_number_of_probe(ar in -2.0..2.0f64, ai in -2.0..2.0f64, r in 0.0..1.5f64, psi in 0.0..(2.0 * PI)) {
            let p = ProbeSpec::new(c(ar, ai), r, psi).unwrap();
            let n = mean_photon(&p.state());
            prop_assert!((n - p.mean_photon()).abs() < 1e-10);
        }

        #[test]
        fn wigner_normalised(st in arb_state()) {
            // Integrate in the eigenbasis of the covariance, 12 standard
            // deviations wide on each axis.
            let eig = st.cov.symmetric_eigen();
            let k = 241usize;
            let half = 6.0;
            let h = 2.0 * half / (k - 1) as f64;
            let sd = [eig.eigenvalues[0].sqrt(), eig.eigenvalues[1].sqrt()];
            let mut total = 0.0;
            for i in 0..k {
                for j in 0..k {
                    let u = -half + h * i as f64;
                    let v = -half + h * j as f64;
                    let local = Vector2::new(u * sd[0], v * sd[1]);
                    let x = st.mean + eig.eigenvectors * local;
                    total += wigner(&st, x).unwrap();
                }
            }
            total *= h * h * sd[0] * sd[1];
            prop_assert!((total - 1.0).abs() < 1e-6, "{}", total);
        }
    }
}
