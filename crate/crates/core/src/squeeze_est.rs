//! Estimation of a squeezing strength `r` with `q̂` homodyne detection.

use nalgebra::Matrix2;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::bayes::{
    average_posterior_variance, gamma_update, grid_update, BayesError, Estimate, EstimationStrategy, GammaPrior,
    GaussianPrior, GridDistribution, Method, OutcomeRule, Support, DEFAULT_LINEAR_NODES,
};
use crate::measurement::{gaussian_pdf, sample_outcome, Measurement, Outcome};
use crate::phasespace::{gamma_qq, squeeze_symplectic, GaussianState, ProbeSpec};

/// Spacing of the outcome grid in `u = asinh(q/c)`.
pub const OUTCOME_STEP: f64 = 0.02;
/// Number of points on a constant-energy contour.
pub const SCAN_POINTS: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SqueezeError {
    #[error("invalid squeezing task: {0}")]
    Invalid(String),
    #[error(transparent)]
    Bayes(#[from] BayesError),
}

pub type Result<T> = std::result::Result<T, SqueezeError>;

/// `M(r) = diag(e^{−r}, e^{r})`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymplecticSqueeze {
    pub matrix: Matrix2<f64>,
}

impl SymplecticSqueeze {
    pub fn new(r: f64) -> Self {
        SymplecticSqueeze { matrix: squeeze_symplectic(r, 0.0) }
    }

    pub fn determinant(&self) -> f64 {
        self.matrix.determinant()
    }

    pub fn apply(&self, st: &GaussianState) -> GaussianState {
        let m = &self.matrix;
        let cov = m * st.cov * m.transpose();
        GaussianState { mean: m * st.mean, cov: (cov + cov.transpose()) * 0.5 }
    }
}

/// `x̄ ↦ M x̄`, `σ ↦ M σ Mᵀ`.
pub fn squeeze_channel(st: &GaussianState, r: f64) -> GaussianState {
    SymplecticSqueeze::new(r).apply(st)
}

/// Mean and variance of the `q̂` record after the channel.
pub fn sq_moments(probe: &ProbeSpec, r: f64) -> (f64, f64) {
    let e = (-r).exp();
    (std::f64::consts::SQRT_2 * probe.alpha.re * e, e * e * gamma_qq(probe.s, probe.psi) / 2.0)
}

/// `p(q|r)`: Gaussian with mean `√2 α e^{−r}` and variance
/// `e^{−2r}(cosh 2s − cos ψ sinh 2s)/2`.
pub fn sq_likelihood(probe: &ProbeSpec, r: f64, q: f64) -> f64 {
    let (m, v) = sq_moments(probe, r);
    gaussian_pdf(q, m, v)
}

/// Precision `λ = 1/δ² = 2e^{2r}` of the vacuum record.
pub fn r_to_precision(r: f64) -> f64 {
    2.0 * (2.0 * r).exp()
}

/// `r = ½ ln(λ/2)`, the inverse of [`r_to_precision`].
pub fn precision_to_r(lambda: f64) -> f64 {
    0.5 * (lambda / 2.0).ln()
}

/// Conjugate update of a Gamma prior on the precision `λ` after vacuum
/// outcomes.
pub fn vacuum_gamma_update(prior: GammaPrior, outcomes: &[f64]) -> Result<GammaPrior> {
    Ok(gamma_update(prior, outcomes)?)
}

/// Density in `r` of a Gamma distribution on `λ`, including the Jacobian
/// `dλ/dr = 4e^{2r}`.
pub fn gamma_density_in_r(g: &GammaPrior, r: f64) -> f64 {
    let e = (2.0 * r).exp();
    g.density(2.0 * e) * 4.0 * e
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SqueezePrior {
    Gaussian(GaussianPrior),
    /// Gamma distribution on the precision `λ`; vacuum probes only.
    Gamma(GammaPrior),
}

/// Probe, prior over `r` and grid size. The unknown squeezing acts along
/// `q̂` and the probe displacement must be real and non-negative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SqueezeTask {
    pub probe: ProbeSpec,
    pub prior: SqueezePrior,
    pub nodes: usize,
}

impl SqueezeTask {
    pub fn new(probe: ProbeSpec, prior: SqueezePrior) -> Result<Self> {
        if probe.alpha.im != 0.0 || !(probe.alpha.re >= 0.0) {
            return Err(SqueezeError::Invalid(format!("probe displacement must be real and ≥ 0, got {}", probe.alpha)));
        }
        if let SqueezePrior::Gamma(_) = prior {
            if probe.alpha.re != 0.0 || probe.s != 0.0 {
                return Err(SqueezeError::Invalid("the Gamma prior needs a vacuum probe".into()));
            }
        }
        Ok(SqueezeTask { probe, prior, nodes: DEFAULT_LINEAR_NODES })
    }

    /// Prior on its `r` grid: `r₀ ± 6σ₀` for a Gaussian, and the image of
    /// `λ ∈ [max(mean − 10 sd, mean/1000), mean + 10 sd]` for a Gamma prior.
    pub fn grid(&self) -> Result<GridDistribution> {
        match self.prior {
            SqueezePrior::Gaussian(g) => Ok(g.to_grid(self.nodes)),
            SqueezePrior::Gamma(g) => {
                let (m, sd) = (g.mean(), g.variance().sqrt());
                let lo = precision_to_r((m - 10.0 * sd).max(m / 1000.0));
                let hi = precision_to_r(m + 10.0 * sd);
                let support = Support::Interval { lo, hi };
                Ok(GridDistribution::from_density(support, self.nodes, |r| gamma_density_in_r(&g, r))?)
            }
        }
    }
}

/// Posterior over `r` after one outcome.
pub fn sq_posterior(task: &SqueezeTask, q: f64) -> Result<GridDistribution> {
    let probe = task.probe;
    let like = move |r: f64, m: &Outcome| sq_likelihood(&probe, r, m.real());
    Ok(grid_update(&task.grid()?, &like, &Outcome::Real(q))?)
}

#[derive(Debug, Clone, Copy)]
pub struct SqueezeStrategy {
    pub probe: ProbeSpec,
    state: GaussianState,
}

impl SqueezeStrategy {
    pub fn new(probe: ProbeSpec) -> Self {
        SqueezeStrategy { probe, state: probe.state() }
    }
}

impl EstimationStrategy for SqueezeStrategy {
    fn likelihood(&self, theta: f64, outcome: &Outcome) -> f64 {
        sq_likelihood(&self.probe, theta, outcome.real())
    }

    /// Trapezoid rule in `u` with `q = c sinh u`: linear near zero and
    /// logarithmic in the tails, which follows the `e^{−r}` scaling of the
    /// record across the whole grid.
    fn outcome_rule(&self, prior: &GridDistribution) -> OutcomeRule {
        let (lo, hi) = prior.support.bounds();
        let (_, v_min) = sq_moments(&self.probe, hi);
        let (m_max, v_max) = sq_moments(&self.probe, lo);
        let c = v_min.sqrt() / 4.0;
        let u_max = ((m_max.abs() + 12.0 * v_max.sqrt()) / c).asinh();
        let half = (u_max / OUTCOME_STEP).ceil() as usize;
        let n = 2 * half + 1;
        let h = u_max / half as f64;
        let u = |k: usize| h * (k as f64 - half as f64);
        let points = (0..n).map(|k| Outcome::Real(c * u(k).sinh())).collect();
        let jac = |k: usize| c * u(k).cosh();
        let weights =
            crate::quad::trapezoid_weights(n - 1, h).into_iter().enumerate().map(|(k, w)| w * jac(k)).collect();
        let mut coarse_weights = vec![0.0; n];
        for (k, w) in crate::quad::trapezoid_weights(n / 2, 2.0 * h).into_iter().enumerate() {
            coarse_weights[2 * k] = w * jac(2 * k);
        }
        OutcomeRule { points, weights, coarse_weights }
    }

    fn sample(&self, theta: f64, rng: &mut ChaCha8Rng) -> Outcome {
        let meas = Measurement::homodyne(0.0).expect("angle 0 is valid");
        sample_outcome(&squeeze_channel(&self.state, theta), &meas, rng)
    }
}

/// Average posterior variance of `r`.
pub fn sq_avg_variance(task: &SqueezeTask, method: Method) -> Result<Estimate> {
    Ok(average_posterior_variance(&SqueezeStrategy::new(task.probe), &task.grid()?, method)?)
}

/// `1/(1/σ₀² + 2(2n + 1)²)`, the Van Trees bound with the largest quantum
/// Fisher information of a single-mode Gaussian probe with `n` photons.
pub fn sq_van_trees(n: f64, sigma0sq: f64) -> f64 {
    1.0 / (1.0 / sigma0sq + 2.0 * (2.0 * n + 1.0).powi(2))
}

/// One point on a constant-energy contour `α² + sinh² s = n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitPoint {
    pub alpha: f64,
    pub s: f64,
    pub variance: Estimate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyScan {
    pub n: f64,
    pub points: Vec<SplitPoint>,
    pub best: usize,
}

impl EnergyScan {
    pub fn best(&self) -> &SplitPoint {
        &self.points[self.best]
    }
}

/// Probe `D(α) S(s)|0⟩`, squeezed along `q̂`, on the contour of `n`.
pub fn split_probe(n: f64, s: f64) -> Option<ProbeSpec> {
    let a2 = n - s.sinh().powi(2);
    if a2 < -1e-12 {
        return None;
    }
    Some(ProbeSpec { alpha: num_complex::Complex64::new(a2.max(0.0).sqrt(), 0.0), s, psi: 0.0 })
}

/// Scans `s ∈ [0, asinh √n]` in `points` steps with `α` fixed by the energy
/// constraint and reports the split with the smallest average variance.
pub fn energy_split_scan(n: f64, prior: GaussianPrior, points: usize, method: Method) -> Result<EnergyScan> {
    if !(n >= 0.0) {
        return Err(SqueezeError::Invalid(format!("photon number must be non-negative, got {n}")));
    }
    let s_max = n.sqrt().asinh();
    let count = if n == 0.0 { 1 } else { points.max(2) };
    let s_values: Vec<f64> =
        (0..count).map(|k| if count == 1 { 0.0 } else { s_max * k as f64 / (count - 1) as f64 }).collect();
    let rows: Vec<Result<SplitPoint>> = s_values
        .par_iter()
        .map(|&s| {
            let probe = split_probe(n, s).expect("contour point is feasible");
            let task = SqueezeTask::new(probe, SqueezePrior::Gaussian(prior))?;
            Ok(SplitPoint { alpha: probe.alpha.re, s, variance: sq_avg_variance(&task, method)? })
        })
        .collect();
    let points: Vec<SplitPoint> = rows.into_iter().collect::<Result<_>>()?;
    let best = points
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.variance.value.total_cmp(&b.1.variance.value))
        .map(|(k, _)| k)
        .expect("scan is non-empty");
    Ok(EnergyScan { n, points, best })
}
