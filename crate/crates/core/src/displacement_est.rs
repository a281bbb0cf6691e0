//! Displacement estimation with squeezed probes: closed-form Gaussian
//! posteriors for heterodyne and homodyne detection, and engine strategies
//! that reproduce them numerically.

use num_complex::Complex64;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::bayes::{
    average_posterior_variance, gaussian_update, BayesError, Estimate, EstimationStrategy, GaussianPrior,
    GridDistribution, Method, OutcomeRule, DEFAULT_LINEAR_NODES,
};
use crate::measurement::{derive_seed, gaussian_pdf, sample_outcome, Measurement, MeasurementKind, Outcome};
use crate::phasespace::{displace, gamma_qq, squeeze, vacuum};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DisplacementError {
    #[error("prior variance must be positive, got {0}")]
    PriorVariance(f64),
    #[error("probe squeezing must be non-negative, got {0}")]
    Squeezing(f64),
    #[error("task uses {actual:?} detection, expected {expected:?}")]
    WrongMeasurement { expected: MeasurementKind, actual: MeasurementKind },
    #[error(transparent)]
    Bayes(#[from] BayesError),
}

pub type Result<T> = std::result::Result<T, DisplacementError>;

/// Isotropic Gaussian prior on α, probe `S(r e^{iφ})|0⟩` and a detector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisplacementTask {
    pub alpha0: Complex64,
    pub sigma0sq: f64,
    pub probe_r: f64,
    pub probe_phi: f64,
    pub measurement: Measurement,
}

impl DisplacementTask {
    pub fn new(
        alpha0: Complex64,
        sigma0sq: f64,
        probe_r: f64,
        probe_phi: f64,
        measurement: Measurement,
    ) -> Result<Self> {
        if !(sigma0sq > 0.0) {
            return Err(DisplacementError::PriorVariance(sigma0sq));
        }
        if !(probe_r >= 0.0) {
            return Err(DisplacementError::Squeezing(probe_r));
        }
        Ok(DisplacementTask { alpha0, sigma0sq, probe_r, probe_phi, measurement })
    }

    pub fn prior_re(&self) -> GaussianPrior {
        GaussianPrior { mu0: self.alpha0.re, var0: self.sigma0sq }
    }

    pub fn prior_im(&self) -> GaussianPrior {
        GaussianPrior { mu0: self.alpha0.im, var0: self.sigma0sq }
    }

    fn expect(&self, kind: MeasurementKind) -> Result<()> {
        if self.measurement.kind != kind {
            return Err(DisplacementError::WrongMeasurement { expected: kind, actual: self.measurement.kind });
        }
        Ok(())
    }
}

/// Variance of `Re β` (`Axis::Re`) or `Im β` given α, for a probe squeezed
/// along `q̂`.
pub fn het_outcome_variance(r: f64, axis: Axis) -> f64 {
    match axis {
        Axis::Re => 0.25 * (1.0 + (-2.0 * r).exp()),
        Axis::Im => 0.25 * (1.0 + (2.0 * r).exp()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Re,
    Im,
}

/// Posteriors for `α_R` and `α_I` after the heterodyne outcome β. The
/// probe is squeezed along `q̂`, whatever `probe_phi` says.
pub fn het_posterior(task: &DisplacementTask, beta: Complex64) -> Result<(GaussianPrior, GaussianPrior)> {
    task.expect(MeasurementKind::Heterodyne)?;
    let r = task.probe_r;
    let re = gaussian_update(task.prior_re(), beta.re, het_outcome_variance(r, Axis::Re))?;
    let im = gaussian_update(task.prior_im(), beta.im, het_outcome_variance(r, Axis::Im))?;
    Ok((re, im))
}

/// `Σ± (1/σ₀² + 2(1 ± tanh r))⁻¹`.
pub fn het_avg_total_variance(sigma0sq: f64, r: f64) -> f64 {
    let t = r.tanh();
    1.0 / (1.0 / sigma0sq + 2.0 * (1.0 + t)) + 1.0 / (1.0 / sigma0sq + 2.0 * (1.0 - t))
}

/// Posteriors for `α_R` and `α_I` after a `q̂` homodyne outcome. The
/// imaginary part is not informed and keeps its prior.
pub fn hom_posterior(task: &DisplacementTask, q: f64) -> Result<(GaussianPrior, GaussianPrior)> {
    task.expect(MeasurementKind::Homodyne)?;
    let g = gamma_qq(task.probe_r, task.probe_phi);
    let re = gaussian_update(task.prior_re(), q / std::f64::consts::SQRT_2, 0.25 * g)?;
    Ok((re, task.prior_im()))
}

/// `(1/σ₀² + 4e^{2r})⁻¹`: average posterior variance of `α_R` with a
/// probe squeezed along `q̂`.
pub fn hom_avg_variance_q(sigma0sq: f64, r: f64) -> f64 {
    1.0 / (1.0 / sigma0sq + 4.0 * (2.0 * r).exp())
}

/// Same for an arbitrary squeezing angle: `(1/σ₀² + 4/Γ_qq)⁻¹`.
pub fn hom_avg_variance(sigma0sq: f64, r: f64, phi: f64) -> f64 {
    1.0 / (1.0 / sigma0sq + 4.0 / gamma_qq(r, phi))
}

/// Squeezing above which homodyne beats heterodyne in total variance, or
/// `None` when heterodyne is never beaten.
pub fn squeezing_threshold(sigma0sq: f64) -> Option<f64> {
    if sigma0sq < 0.5 {
        Some(-0.5 * (1.0 - 2.0 * sigma0sq).ln())
    } else {
        None
    }
}

/// One more homodyne round: `V ↦ (1/V + 4e^{2r})⁻¹`.
pub fn repeated_step(v: f64, r: f64) -> f64 {
    1.0 / (1.0 / v + 4.0 * (2.0 * r).exp())
}

/// `(1/σ₀² + 4m e^{2r})⁻¹` after `m` rounds.
pub fn repeated_variance(sigma0sq: f64, r: f64, m: u32) -> f64 {
    1.0 / (1.0 / sigma0sq + 4.0 * m as f64 * (2.0 * r).exp())
}

/// One coordinate of α observed through heterodyne detection.
#[derive(Debug, Clone, Copy)]
pub struct HetCoordinate {
    pub r: f64,
    pub axis: Axis,
    pub outcome_nodes: usize,
}

impl HetCoordinate {
    pub fn new(r: f64, axis: Axis) -> Self {
        HetCoordinate { r, axis, outcome_nodes: 801 }
    }
}

fn prior_moments(prior: &GridDistribution) -> (f64, f64) {
    let m = prior.expect(|t| t);
    (m, prior.expect(|t| (t - m) * (t - m)))
}

impl EstimationStrategy for HetCoordinate {
    fn likelihood(&self, theta: f64, outcome: &Outcome) -> f64 {
        gaussian_pdf(outcome.real(), theta, het_outcome_variance(self.r, self.axis))
    }

    fn outcome_rule(&self, prior: &GridDistribution) -> OutcomeRule {
        let (m, v) = prior_moments(prior);
        let sd = (v + het_outcome_variance(self.r, self.axis)).sqrt();
        OutcomeRule::line(m, 10.0 * sd, self.outcome_nodes)
    }

    fn sample(&self, theta: f64, rng: &mut ChaCha8Rng) -> Outcome {
        let alpha = match self.axis {
            Axis::Re => Complex64::new(theta, 0.0),
            Axis::Im => Complex64::new(0.0, theta),
        };
        let st = displace(&squeeze(&vacuum(), self.r, 0.0), alpha);
        let beta = sample_outcome(&st, &Measurement::heterodyne(), rng).complex();
        Outcome::Real(match self.axis {
            Axis::Re => beta.re,
            Axis::Im => beta.im,
        })
    }
}

/// `α_R` observed through `q̂` homodyne detection.
#[derive(Debug, Clone, Copy)]
pub struct HomodyneDisplacement {
    pub r: f64,
    pub phi: f64,
    pub outcome_nodes: usize,
}

impl HomodyneDisplacement {
    pub fn new(r: f64, phi: f64) -> Self {
        HomodyneDisplacement { r, phi, outcome_nodes: 801 }
    }

    fn outcome_variance(&self) -> f64 {
        0.5 * gamma_qq(self.r, self.phi)
    }
}

impl EstimationStrategy for HomodyneDisplacement {
    fn likelihood(&self, theta: f64, outcome: &Outcome) -> f64 {
        gaussian_pdf(outcome.real(), std::f64::consts::SQRT_2 * theta, self.outcome_variance())
    }

    fn outcome_rule(&self, prior: &GridDistribution) -> OutcomeRule {
        let (m, v) = prior_moments(prior);
        let sd = (2.0 * v + self.outcome_variance()).sqrt();
        OutcomeRule::line(std::f64::consts::SQRT_2 * m, 10.0 * sd, self.outcome_nodes)
    }

    fn sample(&self, theta: f64, rng: &mut ChaCha8Rng) -> Outcome {
        let st = displace(&squeeze(&vacuum(), self.r, self.phi), Complex64::new(theta, 0.0));
        sample_outcome(&st, &Measurement::homodyne(0.0).expect("angle 0 is valid"), rng)
    }
}

/// Engine estimate of the summed posterior variance of `α_R` and `α_I`
/// under heterodyne detection.
pub fn het_total_variance_engine(sigma0sq: f64, r: f64, alpha0: Complex64, method: Method) -> Result<Estimate> {
    let mut total = Estimate { value: 0.0, std_error: 0.0 };
    for (k, (axis, mu)) in [(Axis::Re, alpha0.re), (Axis::Im, alpha0.im)].into_iter().enumerate() {
        let prior = GaussianPrior::new(mu, sigma0sq)?.to_grid(DEFAULT_LINEAR_NODES);
        let m = match method {
            Method::MonteCarlo { samples, seed } => Method::MonteCarlo { samples, seed: derive_seed(seed, k as u64) },
            Method::Quadrature => Method::Quadrature,
        };
        let e = average_posterior_variance(&HetCoordinate::new(r, axis), &prior, m)?;
        total.value += e.value;
        total.std_error = match method {
            Method::MonteCarlo { .. } => total.std_error.hypot(e.std_error),
            Method::Quadrature => total.std_error + e.std_error,
        };
    }
    Ok(total)
}

/// Engine estimate of the average posterior variance of `α_R` under `q̂`
/// homodyne detection.
pub fn hom_variance_engine(sigma0sq: f64, r: f64, phi: f64, mu0: f64, method: Method) -> Result<Estimate> {
    let prior = GaussianPrior::new(mu0, sigma0sq)?.to_grid(DEFAULT_LINEAR_NODES);
    Ok(average_posterior_variance(&HomodyneDisplacement::new(r, phi), &prior, method)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn het_task(s0: f64, r: f64, a0: Complex64) -> DisplacementTask {
        DisplacementTask::new(a0, s0, r, 0.0, Measurement::heterodyne()).unwrap()
    }

    fn hom_task(s0: f64, r: f64, phi: f64) -> DisplacementTask {
        DisplacementTask::new(Complex64::new(0.0, 0.0), s0, r, phi, Measurement::homodyne(0.0).unwrap()).unwrap()
    }

    #[test]
    fn het_posterior_examples() {
        let (re, im) = het_posterior(&het_task(0.5, 0.0, Complex64::new(0.0, 0.0)), Complex64::new(1.0, 0.0)).unwrap();
        assert_relative_eq!(re.mu0, 0.5, max_relative = 1e-15);
        assert_relative_eq!(re.var0, 0.25, max_relative = 1e-15);
        assert_relative_eq!(im.mu0, 0.0);
        let s0 = 0.7;
        let (re, _) = het_posterior(&het_task(s0, 20.0, Complex64::new(0.0, 0.0)), Complex64::new(0.3, 0.0)).unwrap();
        assert_relative_eq!(re.var0, 1.0 / (1.0 / s0 + 4.0), max_relative = 1e-12);
        let a0 = Complex64::new(0.4, -1.2);
        let (re, im) = het_posterior(&het_task(s0, 0.8, a0), a0).unwrap();
        assert_relative_eq!(re.mu0, a0.re, max_relative = 1e-15);
        assert_relative_eq!(im.mu0, a0.im, max_relative = 1e-15);
        assert!(het_posterior(&hom_task(1.0, 0.0, 0.0), a0).is_err());
    }

    #[test]
    fn het_posterior_matches_closed_form_estimator() {
        // α̂ᵢ = (4βᵢσ₀² + α₀ᵢ(1 + e^{∓2r})) / (4σ₀² + 1 + e^{∓2r})
        let (s0, r) = (0.3, 0.6);
        let a0 = Complex64::new(0.2, 0.5);
        let b = Complex64::new(-0.4, 1.1);
        let (re, im) = het_posterior(&het_task(s0, r, a0), b).unwrap();
        let em = (-2.0 * r).exp();
        let ep = (2.0 * r).exp();
        assert_relative_eq!(
            re.mu0,
            (4.0 * b.re * s0 + a0.re * (1.0 + em)) / (4.0 * s0 + 1.0 + em),
            max_relative = 1e-14
        );
        assert_relative_eq!(
            im.mu0,
            (4.0 * b.im * s0 + a0.im * (1.0 + ep)) / (4.0 * s0 + 1.0 + ep),
            max_relative = 1e-14
        );
        assert_relative_eq!(re.var0, 1.0 / (1.0 / s0 + 2.0 * (1.0 + r.tanh())), max_relative = 1e-14);
        assert_relative_eq!(im.var0, 1.0 / (1.0 / s0 + 2.0 * (1.0 - r.tanh())), max_relative = 1e-14);
    }

    #[test]
    fn het_total_variance() {
        assert_relative_eq!(het_avg_total_variance(0.25, 0.0), 1.0 / 3.0, max_relative = 1e-15);
        assert!(het_avg_total_variance(0.25, 1.0) > het_avg_total_variance(0.25, 0.0));
        assert!((het_avg_total_variance(1e6, 0.0) - 1.0).abs() < 1e-5);
        for k in 1..=500 {
            let r = 0.01 * k as f64;
            assert!(het_avg_total_variance(0.25, r) >= het_avg_total_variance(0.25, 0.0));
        }
    }

    #[test]
    fn hom_posterior_examples() {
        let (re, im) = hom_posterior(&hom_task(1.0, 0.0, 0.0), 2f64.sqrt()).unwrap();
        assert_relative_eq!(re.mu0, 0.8, max_relative = 1e-15);
        assert_relative_eq!(re.var0, 0.2, max_relative = 1e-15);
        assert_eq!(im, GaussianPrior { mu0: 0.0, var0: 1.0 });
        let v0 = hom_posterior(&hom_task(1.0, 0.7, 0.0), 0.1).unwrap().0.var0;
        let vpi = hom_posterior(&hom_task(1.0, 0.7, std::f64::consts::PI), 0.1).unwrap().0.var0;
        assert!(vpi > v0);
        let s0 = 0.6;
        let v = hom_posterior(&hom_task(s0, 0.0, 0.0), 0.3).unwrap().0.var0;
        assert_relative_eq!(v, s0 / (4.0 * s0 + 1.0), max_relative = 1e-14);
    }

    #[test]
    fn hom_average_variance() {
        assert_relative_eq!(hom_avg_variance_q(1.0, 0.0), 0.2, max_relative = 1e-15);
        assert_relative_eq!(
            hom_avg_variance_q(1.0, 0.5),
            1.0 / (1.0 + 4.0 * std::f64::consts::E),
            max_relative = 1e-14
        );
        assert!(hom_avg_variance_q(1.0, 20.0) < 1e-17);
        assert_relative_eq!(hom_avg_variance(0.8, 0.4, 0.0), hom_avg_variance_q(0.8, 0.4), max_relative = 1e-14);
    }

    #[test]
    fn threshold() {
        assert_relative_eq!(squeezing_threshold(0.25).unwrap(), -0.5 * 0.5f64.ln(), max_relative = 1e-15);
        assert_eq!(squeezing_threshold(0.5), None);
        // Root of σ₀² + hom(σ₀², r) = het(σ₀², 0) by bisection.
        let s0 = 0.1;
        let f = |r: f64| s0 + hom_avg_variance_q(s0, r) - het_avg_total_variance(s0, 0.0);
        let (mut lo, mut hi) = (0.0, 5.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((0.5 * (lo + hi) - squeezing_threshold(s0).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn repetition_law() {
        assert_relative_eq!(repeated_variance(1.0, 0.0, 3), 1.0 / 13.0, max_relative = 1e-15);
        assert_eq!(repeated_variance(0.37, 1.1, 0), 0.37);
        let mut v = 1.0;
        for _ in 0..10 {
            v = repeated_step(v, 0.5);
        }
        assert_relative_eq!(v, repeated_variance(1.0, 0.5, 10), max_relative = 1e-13);
        assert_relative_eq!(v, 1.0 / (1.0 + 40.0 * std::f64::consts::E), max_relative = 1e-13);
    }

    #[test]
    fn engines_reproduce_closed_forms() {
        let e = het_total_variance_engine(0.25, 0.0, Complex64::new(0.0, 0.0), Method::Quadrature).unwrap();
        assert!((e.value - 1.0 / 3.0).abs() < 1e-6 / 3.0, "{e:?}");
        let e = het_total_variance_engine(0.4, 0.7, Complex64::new(0.5, -0.2), Method::Quadrature).unwrap();
        assert!((e.value - het_avg_total_variance(0.4, 0.7)).abs() < 1e-6 * e.value);
        let e = hom_variance_engine(1.0, 0.0, 0.0, 0.0, Method::Quadrature).unwrap();
        assert!((e.value - 0.2).abs() < 2e-7, "{e:?}");
        let e = hom_variance_engine(0.5, 0.3, 1.0, 0.2, Method::Quadrature).unwrap();
        assert!((e.value - hom_avg_variance(0.5, 0.3, 1.0)).abs() < 1e-6 * e.value);
    }
}
