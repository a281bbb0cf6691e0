//! Priors, posteriors and the average-posterior-variance engine.
//!
//! Posteriors live on a fixed grid of parameter values ([`GridDistribution`]).
//! Linear parameters are scored with the posterior mean and variance,
//! angles with the circular mean and `⟨sin²(θ − θ̂)⟩`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::measurement::{stream_rng, Outcome};

pub const DEFAULT_LINEAR_NODES: usize = 2001;
pub const DEFAULT_CIRCULAR_NODES: usize = 2048;
pub const DEFAULT_TOLERANCE: f64 = 1e-6;

/// Below this modulus the circular mean is reported as undefined.
pub const CIRCULAR_MEAN_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BayesError {
    #[error("invalid prior: {0}")]
    InvalidPrior(String),
    #[error("outcome has zero evidence under the prior")]
    ZeroEvidence,
    #[error("operation needs {expected} support")]
    WrongSupport { expected: &'static str },
    #[error("quadrature did not reach tolerance: estimate {estimate}, error {error}")]
    Tolerance { estimate: f64, error: f64 },
    #[error("precondition violated: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, BayesError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianPrior {
    pub mu0: f64,
    pub var0: f64,
}

impl GaussianPrior {
    pub fn new(mu0: f64, var0: f64) -> Result<Self> {
        if !(var0 > 0.0) || !mu0.is_finite() {
            return Err(BayesError::InvalidPrior(format!("N({mu0}, {var0})")));
        }
        Ok(GaussianPrior { mu0, var0 })
    }

    pub fn density(&self, x: f64) -> f64 {
        crate::measurement::gaussian_pdf(x, self.mu0, self.var0)
    }

    /// Grid over `μ₀ ± 6σ₀`.
    pub fn to_grid(&self, n: usize) -> GridDistribution {
        let sd = self.var0.sqrt();
        let support = Support::Interval { lo: self.mu0 - 6.0 * sd, hi: self.mu0 + 6.0 * sd };
        GridDistribution::from_density(support, n, |x| self.density(x)).expect("gaussian grid is valid")
    }
}

/// Gamma distribution with shape `a` and rate `b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaPrior {
    pub a: f64,
    pub b: f64,
}

impl GammaPrior {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0) {
            return Err(BayesError::InvalidPrior(format!("Gamma({a}, {b})")));
        }
        Ok(GammaPrior { a, b })
    }

    pub fn mean(&self) -> f64 {
        self.a / self.b
    }

    pub fn variance(&self) -> f64 {
        self.a / (self.b * self.b)
    }

    pub fn density(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let ln = self.a * self.b.ln() - crate::specfun::ln_gamma(self.a) + (self.a - 1.0) * x.ln() - self.b * x;
        ln.exp()
    }
}

/// `N(μ₀, σ₀²)` prior times `N(x; μ, σ²)` likelihood.
pub fn gaussian_update(prior: GaussianPrior, like_mean: f64, like_var: f64) -> Result<GaussianPrior> {
    if !(like_var > 0.0) {
        return Err(BayesError::Precondition("likelihood variance must be positive".into()));
    }
    let s0 = prior.var0;
    let total = s0 + like_var;
    Ok(GaussianPrior { mu0: (like_var * prior.mu0 + s0 * like_mean) / total, var0: like_var * s0 / total })
}

/// Conjugate update of a Gamma prior on the precision `λ` of zero-mean
/// Gaussian outcomes: `(a, b) ↦ (a + m/2, b + Σq²/2)`.
pub fn gamma_update(prior: GammaPrior, outcomes: &[f64]) -> Result<GammaPrior> {
    if outcomes.is_empty() {
        return Err(BayesError::Precondition("at least one outcome is required".into()));
    }
    let ss: f64 = outcomes.iter().map(|q| q * q).sum();
    Ok(GammaPrior { a: prior.a + 0.5 * outcomes.len() as f64, b: prior.b + 0.5 * ss })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Support {
    Interval {
        lo: f64,
        hi: f64,
    },
    /// An angular range. A full turn (`hi − lo = 2π`) is periodic and its
    /// grid omits `hi`; a shorter arc is closed and keeps both endpoints.
    Circle {
        lo: f64,
        hi: f64,
    },
}

impl Support {
    pub fn is_circular(&self) -> bool {
        matches!(self, Support::Circle { .. })
    }

    pub fn is_periodic(&self) -> bool {
        match *self {
            Support::Circle { lo, hi } => ((hi - lo) - 2.0 * PI).abs() < 1e-12,
            Support::Interval { .. } => false,
        }
    }

    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            Support::Interval { lo, hi } | Support::Circle { lo, hi } => (lo, hi),
        }
    }

    /// Nodes and quadrature weights of an `n`-point grid.
    pub fn nodes(&self, n: usize) -> (Vec<f64>, Vec<f64>) {
        let (lo, hi) = self.bounds();
        if self.is_periodic() {
            let h = (hi - lo) / n as f64;
            ((0..n).map(|k| lo + h * k as f64).collect(), vec![h; n])
        } else {
            let h = (hi - lo) / (n - 1) as f64;
            let nodes = (0..n).map(|k| lo + h * k as f64).collect();
            (nodes, crate::quad::trapezoid_weights(n - 1, h))
        }
    }
}

/// A probability density tabulated on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDistribution {
    pub support: Support,
    pub nodes: Vec<f64>,
    pub density: Vec<f64>,
    weights: Vec<f64>,
}

impl GridDistribution {
    /// Tabulates `f` on an `n`-point grid and normalises it.
    pub fn from_density<F: Fn(f64) -> f64>(support: Support, n: usize, f: F) -> Result<Self> {
        let (lo, hi) = support.bounds();
        if !(hi > lo) || n < 3 {
            return Err(BayesError::InvalidPrior(format!("grid of {n} nodes on [{lo}, {hi}]")));
        }
        let (nodes, weights) = support.nodes(n);
        let density: Vec<f64> = nodes.iter().map(|&x| f(x)).collect();
        if density.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(BayesError::InvalidPrior("density must be finite and non-negative".into()));
        }
        let mut g = GridDistribution { support, nodes, density, weights };
        g.normalise()?;
        Ok(g)
    }

    pub fn flat(support: Support, n: usize) -> Result<Self> {
        Self::from_density(support, n, |_| 1.0)
    }

    /// Builds a grid from explicit nodes, which must match `support`'s layout.
    pub fn from_values(support: Support, density: Vec<f64>) -> Result<Self> {
        let (nodes, weights) = support.nodes(density.len());
        let mut g = GridDistribution { support, nodes, density, weights };
        g.normalise()?;
        Ok(g)
    }

    fn normalise(&mut self) -> Result<()> {
        let z = self.integrate_values(&self.density);
        if !(z > 0.0) || !z.is_finite() {
            return Err(BayesError::ZeroEvidence);
        }
        for d in self.density.iter_mut() {
            *d /= z;
        }
        Ok(())
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn integrate_values(&self, v: &[f64]) -> f64 {
        self.weights.iter().zip(v).map(|(w, x)| w * x).sum()
    }

    /// `∫ f(θ) p(θ) dθ`.
    pub fn expect<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes.iter().zip(&self.density).zip(&self.weights).map(|((&x, &d), &w)| w * d * f(x)).sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.integrate_values(&self.density)
    }

    /// Draws from the tabulated density; mass is assigned per cell and the
    /// draw is uniform within a cell.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let cells = self.cells();
        let total: f64 = cells.iter().map(|c| c.2).sum();
        let mut u = rng.gen::<f64>() * total;
        for &(a, b, m) in &cells {
            if u < m {
                return a + (b - a) * rng.gen::<f64>();
            }
            u -= m;
        }
        let last = cells.last().expect("grid has cells");
        last.1
    }

    fn cells(&self) -> Vec<(f64, f64, f64)> {
        let n = self.nodes.len();
        let mut out = Vec::with_capacity(n);
        for k in 0..n - 1 {
            let h = self.nodes[k + 1] - self.nodes[k];
            out.push((self.nodes[k], self.nodes[k + 1], 0.5 * h * (self.density[k] + self.density[k + 1])));
        }
        if self.support.is_periodic() {
            let (lo, hi) = self.support.bounds();
            let h = hi - self.nodes[n - 1];
            out.push((self.nodes[n - 1], hi, 0.5 * h * (self.density[n - 1] + self.density[0])));
            let _ = lo;
        }
        out
    }
}

/// `p(m|θ)` as a function of the parameter and the outcome.
pub trait LikelihoodFn: Sync {
    fn eval(&self, theta: f64, outcome: &Outcome) -> f64;
}

impl<F> LikelihoodFn for F
where
    F: Fn(f64, &Outcome) -> f64 + Sync,
{
    fn eval(&self, theta: f64, outcome: &Outcome) -> f64 {
        self(theta, outcome)
    }
}

/// `∫ p(θ) p(m|θ) dθ`.
pub fn evidence<L: LikelihoodFn + ?Sized>(prior: &GridDistribution, like: &L, outcome: &Outcome) -> f64 {
    prior.expect(|t| like.eval(t, outcome))
}

pub fn grid_update<L: LikelihoodFn + ?Sized>(
    prior: &GridDistribution,
    like: &L,
    outcome: &Outcome,
) -> Result<GridDistribution> {
    let density: Vec<f64> = prior
        .nodes
        .iter()
        .zip(&prior.density)
        .map(|(&t, &p)| {
            let l = like.eval(t, outcome);
            if !l.is_finite() {
                f64::NAN
            } else {
                p * l
            }
        })
        .collect();
    if density.iter().any(|d| d.is_nan()) {
        return Err(BayesError::Precondition("likelihood is not finite on the grid".into()));
    }
    let mut post = GridDistribution {
        support: prior.support,
        nodes: prior.nodes.clone(),
        density,
        weights: prior.weights.clone(),
    };
    post.normalise()?;
    Ok(post)
}

pub fn mean_estimator(d: &GridDistribution) -> Result<f64> {
    if d.support.is_circular() {
        return Err(BayesError::WrongSupport { expected: "interval" });
    }
    Ok(d.expect(|t| t))
}

pub fn variance_mse(d: &GridDistribution, est: f64) -> Result<f64> {
    if d.support.is_circular() {
        return Err(BayesError::WrongSupport { expected: "interval" });
    }
    Ok(d.expect(|t| (t - est) * (t - est)))
}

/// `⟨e^{iθ}⟩`.
pub fn circular_moment(d: &GridDistribution) -> Complex64 {
    Complex64::new(d.expect(f64::cos), d.expect(f64::sin))
}

/// `arg⟨e^{iθ}⟩`, or `None` when the first moment vanishes.
pub fn circular_mean(d: &GridDistribution) -> Result<Option<f64>> {
    if !d.support.is_circular() {
        return Err(BayesError::WrongSupport { expected: "circular" });
    }
    let m = circular_moment(d);
    Ok(if m.norm() < CIRCULAR_MEAN_FLOOR { None } else { Some(m.arg()) })
}

/// `∫ sin²(θ − est) p(θ) dθ`.
pub fn variance_circular(d: &GridDistribution, est: f64) -> Result<f64> {
    if !d.support.is_circular() {
        return Err(BayesError::WrongSupport { expected: "circular" });
    }
    Ok(d.expect(|t| (t - est).sin().powi(2)))
}

/// Fisher information of a prior density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorInformation {
    pub value: f64,
    /// Nodes skipped because the density vanished there.
    pub excluded: usize,
}

pub fn fisher_information_gaussian(prior: &GaussianPrior) -> f64 {
    1.0 / prior.var0
}

/// `∫ p (∂ ln p)²` by central differences on the grid.
pub fn fisher_information_grid(d: &GridDistribution) -> PriorInformation {
    let n = d.len();
    let periodic = d.support.is_periodic();
    let mut value = 0.0;
    let mut excluded = 0;
    for k in 0..n {
        let p = d.density[k];
        let (lo, hi) = if periodic {
            ((k + n - 1) % n, (k + 1) % n)
        } else if k == 0 || k == n - 1 {
            continue;
        } else {
            (k - 1, k + 1)
        };
        if p < 1e-300 {
            excluded += 1;
            continue;
        }
        let h = if periodic { 2.0 * d.weights[k] } else { d.nodes[hi] - d.nodes[lo] };
        let dp = (d.density[hi] - d.density[lo]) / h;
        value += d.weights[k] * dp * dp / p;
    }
    PriorInformation { value, excluded }
}

pub fn van_trees_bound(prior_fi: f64, qfi: f64) -> Result<f64> {
    if prior_fi < 0.0 || qfi < 0.0 || prior_fi + qfi == 0.0 {
        return Err(BayesError::Precondition("informations must be non-negative and not both zero".into()));
    }
    Ok(1.0 / (prior_fi + qfi))
}

/// Value with a standard error (Monte Carlo) or a quadrature error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    Quadrature,
    MonteCarlo { samples: usize, seed: u64 },
}

/// Grid nodes with cached trigonometric values.
#[derive(Debug, Clone)]
pub struct NodeTable {
    pub theta: Vec<f64>,
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
}

impl NodeTable {
    pub fn new(nodes: &[f64]) -> Self {
        let (sin, cos) = nodes.iter().map(|t| t.sin_cos()).unzip();
        NodeTable { theta: nodes.to_vec(), cos, sin }
    }
}

/// Quadrature rule for `∫ dm p(m) V(m)` on fixed outcome nodes.
/// `coarse_weights` define a lower-order rule on the same nodes for the
/// error estimate.
#[derive(Debug, Clone)]
pub struct OutcomeRule {
    pub points: Vec<Outcome>,
    pub weights: Vec<f64>,
    pub coarse_weights: Vec<f64>,
}

impl OutcomeRule {
    /// Trapezoid rule for a real outcome on `centre ± half`, with the
    /// stride-2 trapezoid as the coarse rule.
    pub fn line(centre: f64, half: f64, n: usize) -> Self {
        let n = n.max(5) | 1;
        let h = 2.0 * half / (n - 1) as f64;
        let points = (0..n).map(|k| Outcome::Real(centre - half + h * k as f64)).collect();
        let weights = crate::quad::trapezoid_weights(n - 1, h);
        let mut coarse_weights = vec![0.0; n];
        for (k, w) in crate::quad::trapezoid_weights((n - 1) / 2, 2.0 * h).into_iter().enumerate() {
            coarse_weights[2 * k] = w;
        }
        OutcomeRule { points, weights, coarse_weights }
    }
}

/// Probe, measurement and encoding that together define a likelihood.
pub trait EstimationStrategy: Sync {
    fn likelihood(&self, theta: f64, outcome: &Outcome) -> f64;

    /// `p(m|θ_k)` for every node; override when node caches help.
    fn likelihood_row(&self, nodes: &NodeTable, outcome: &Outcome, out: &mut [f64]) {
        for (o, &t) in out.iter_mut().zip(&nodes.theta) {
            *o = self.likelihood(t, outcome);
        }
    }

    fn outcome_rule(&self, prior: &GridDistribution) -> OutcomeRule;

    fn sample(&self, theta: f64, rng: &mut ChaCha8Rng) -> Outcome;
}

/// Scores posteriors on a fixed prior grid without allocating a new grid
/// per outcome.
struct Scorer {
    table: NodeTable,
    pw: Vec<f64>,
    circular: bool,
    centre: f64,
    cos2: Vec<f64>,
    sin2: Vec<f64>,
}

impl Scorer {
    fn new(prior: &GridDistribution) -> Self {
        let table = NodeTable::new(&prior.nodes);
        let pw = prior.density.iter().zip(prior.weights()).map(|(d, w)| d * w).collect();
        let (sin2, cos2) = prior.nodes.iter().map(|t| (2.0 * t).sin_cos()).unzip();
        let centre = if prior.support.is_circular() { 0.0 } else { prior.expect(|t| t) };
        Scorer { table, pw, circular: prior.support.is_circular(), centre, cos2, sin2 }
    }

    /// Evidence and posterior variance for one likelihood row.
    #[allow(clippy::needless_range_loop)]
    fn score(&self, like: &[f64]) -> (f64, f64) {
        if self.circular {
            let (mut z, mut c1, mut s1, mut c2, mut s2) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for k in 0..like.len() {
                let p = self.pw[k] * like[k];
                z += p;
                c1 += p * self.table.cos[k];
                s1 += p * self.table.sin[k];
                c2 += p * self.cos2[k];
                s2 += p * self.sin2[k];
            }
            if !(z > 0.0) {
                return (0.0, 0.0);
            }
            let m1 = Complex64::new(c1, s1) / z;
            let est = if m1.norm() < CIRCULAR_MEAN_FLOOR { 0.0 } else { m1.arg() };
            let m2 = Complex64::new(c2, s2) / z;
            let v = 0.5 - 0.5 * (m2 * Complex64::from_polar(1.0, -2.0 * est)).re;
            (z, v.max(0.0))
        } else {
            let (mut z, mut m1, mut m2) = (0.0, 0.0, 0.0);
            for k in 0..like.len() {
                let p = self.pw[k] * like[k];
                let x = self.table.theta[k] - self.centre;
                z += p;
                m1 += p * x;
                m2 += p * x * x;
            }
            if !(z > 0.0) {
                return (0.0, 0.0);
            }
            let mean = m1 / z;
            (z, (m2 / z - mean * mean).max(0.0))
        }
    }

    fn posterior_variance<S: EstimationStrategy>(&self, s: &S, m: &Outcome, buf: &mut [f64]) -> (f64, f64) {
        s.likelihood_row(&self.table, m, buf);
        self.score(buf)
    }
}

/// `V̄ = ∫ dm p(m) V_post(m)`.
pub fn average_posterior_variance<S: EstimationStrategy>(
    strategy: &S,
    prior: &GridDistribution,
    method: Method,
) -> Result<Estimate> {
    average_posterior_variance_tol(strategy, prior, method, DEFAULT_TOLERANCE)
}

pub fn average_posterior_variance_tol<S: EstimationStrategy>(
    strategy: &S,
    prior: &GridDistribution,
    method: Method,
    tol: f64,
) -> Result<Estimate> {
    let scorer = Scorer::new(prior);
    let n = prior.len();
    match method {
        Method::MonteCarlo { samples, seed } => {
            if samples < 2 {
                return Err(BayesError::Precondition("Monte Carlo needs at least two samples".into()));
            }
            let values: Vec<f64> = (0..samples as u64)
                .into_par_iter()
                .map_init(
                    || vec![0.0; n],
                    |buf, i| {
                        let mut rng = stream_rng(seed, i);
                        let theta = prior.sample(&mut rng);
                        let m = strategy.sample(theta, &mut rng);
                        scorer.posterior_variance(strategy, &m, buf).1
                    },
                )
                .collect();
            let mean = values.iter().sum::<f64>() / samples as f64;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (samples - 1) as f64;
            Ok(Estimate { value: mean, std_error: (var / samples as f64).sqrt() })
        }
        Method::Quadrature => {
            let OutcomeRule { points, weights, coarse_weights } = strategy.outcome_rule(prior);
            let contrib: Vec<f64> = points
                .par_iter()
                .map_init(
                    || vec![0.0; n],
                    |buf, m| {
                        let (z, v) = scorer.posterior_variance(strategy, m, buf);
                        z * v
                    },
                )
                .collect();
            let fine: f64 = contrib.iter().zip(&weights).map(|(c, w)| c * w).sum();
            let coarse: f64 = contrib.iter().zip(&coarse_weights).map(|(c, w)| c * w).sum();
            finish(fine, (fine - coarse).abs(), tol)
        }
    }
}

fn finish(value: f64, error: f64, tol: f64) -> Result<Estimate> {
    if error > tol * value.abs().max(1e-300) {
        return Err(BayesError::Tolerance { estimate: value, error });
    }
    Ok(Estimate { value, std_error: error })
}

/// Posterior score for a single outcome: `(evidence, V_post)`.
pub fn score_outcome<S: EstimationStrategy>(strategy: &S, prior: &GridDistribution, m: &Outcome) -> (f64, f64) {
    let scorer = Scorer::new(prior);
    let mut buf = vec![0.0; prior.len()];
    scorer.posterior_variance(strategy, m, &mut buf)
}
