//! Phase estimation with flat priors. Coherent probes with heterodyne
//! detection have closed forms; squeezed probes with heterodyne detection
//! and coherent probes with homodyne detection reduce to Bessel series; all
//! other combinations go through the generic engine.

use std::cell::RefCell;
use std::f64::consts::{PI, SQRT_2};

use num_complex::Complex64;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::bayes::{
    average_posterior_variance, BayesError, Estimate, EstimationStrategy, GridDistribution, Method, NodeTable,
    OutcomeRule, Support, DEFAULT_CIRCULAR_NODES,
};
use crate::measurement::{homodyne_moments, sample_outcome, HeterodyneKernel, Measurement, MeasurementKind, Outcome};
use crate::phasespace::{gamma_qq, rotate, GaussianState, ProbeSpec};
use crate::quad::{integrate, romberg_weights, QuadError};
use crate::specfun::{bessel_i_scaled_orders, hyp0f1, SeriesControl, SpecfunError};

/// Grid size for homodyne phase posteriors on the closed arc `[0, π]`.
pub const DEFAULT_ARC_NODES: usize = 2049;
/// Magnitude below which a circular moment is treated as zero.
pub const UNDEFINED_MOMENT: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhaseError {
    #[error("series not converged at N = {terms}: last ring {ring:e} against partial sum {sum:e}")]
    Truncation { terms: usize, ring: f64, sum: f64 },
    #[error("posterior normalisation vanishes")]
    Degenerate,
    #[error("invalid phase task: {0}")]
    Invalid(String),
    #[error(transparent)]
    Special(#[from] SpecfunError),
    #[error(transparent)]
    Quad(#[from] QuadError),
    #[error(transparent)]
    Bayes(#[from] BayesError),
}

pub type Result<T> = std::result::Result<T, PhaseError>;

/// Cutoff for the Bessel series. `terms = None` picks
/// `N = ⌈12 + 2·max(2α|x|, x², α²)⌉` from the series arguments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesTruncation {
    pub terms: Option<usize>,
    pub tail_tol: f64,
}

impl Default for SeriesTruncation {
    fn default() -> Self {
        SeriesTruncation { terms: None, tail_tol: 1e-10 }
    }
}

impl SeriesTruncation {
    pub fn fixed(terms: usize) -> Self {
        SeriesTruncation { terms: Some(terms.max(1)), ..Default::default() }
    }

    pub fn resolve(&self, alpha: f64, x: f64) -> usize {
        self.terms.unwrap_or_else(|| {
            let m = (2.0 * alpha * x.abs()).max(x * x).max(alpha * alpha);
            (12.0 + 2.0 * m).ceil() as usize
        })
    }

    fn check(&self, terms: usize, ring: f64, sum: f64) -> Result<()> {
        if ring.abs() > self.tail_tol * sum.abs() {
            return Err(PhaseError::Truncation { terms, ring: ring.abs(), sum });
        }
        Ok(())
    }
}

fn scaled(nmax: usize, x: f64) -> Result<Vec<f64>> {
    Ok(bessel_i_scaled_orders(nmax, x, &SeriesControl::default())?)
}

/// Wraps an angle into `[−π, π)`.
pub fn wrap_angle(x: f64) -> f64 {
    (x + PI).rem_euclid(2.0 * PI) - PI
}

/// Probe and detector with a flat phase prior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseTask {
    pub probe: ProbeSpec,
    pub measurement: Measurement,
}

impl PhaseTask {
    pub fn new(probe: ProbeSpec, measurement: Measurement) -> Result<Self> {
        if measurement.kind == MeasurementKind::Heterodyne && probe.alpha.norm() == 0.0 {
            return Err(PhaseError::Invalid("heterodyne phase estimation needs a non-zero displacement".into()));
        }
        Ok(PhaseTask { probe, measurement })
    }

    /// `D(α) S(−r)|0⟩`, squeezed along `p̂`, with heterodyne detection.
    pub fn squeezed_heterodyne(alpha: f64, r: f64) -> Result<Self> {
        let probe =
            ProbeSpec::new(Complex64::new(alpha, 0.0), r, PI).map_err(|e| PhaseError::Invalid(e.to_string()))?;
        Self::new(probe, Measurement::heterodyne())
    }

    /// `D(α) S(r e^{iφ})|0⟩` with `q̂` homodyne detection.
    pub fn homodyne(alpha: f64, r: f64, phi: f64) -> Result<Self> {
        let probe =
            ProbeSpec::new(Complex64::new(alpha, 0.0), r, phi).map_err(|e| PhaseError::Invalid(e.to_string()))?;
        Self::new(probe, Measurement::homodyne(0.0).expect("angle 0 is valid"))
    }

    pub fn support(&self) -> Support {
        match self.measurement.kind {
            MeasurementKind::Heterodyne => Support::Circle { lo: -PI, hi: PI },
            MeasurementKind::Homodyne => Support::Circle { lo: 0.0, hi: PI },
        }
    }

    pub fn prior(&self) -> Result<GridDistribution> {
        let n = match self.measurement.kind {
            MeasurementKind::Heterodyne => DEFAULT_CIRCULAR_NODES,
            MeasurementKind::Homodyne => DEFAULT_ARC_NODES,
        };
        Ok(GridDistribution::flat(self.support(), n)?)
    }
}

// Coherent probe, heterodyne detection.

/// Phase of a heterodyne outcome written as `β = |β| e^{−iφ_β}`.
pub fn outcome_phase(beta: Complex64) -> f64 {
    wrap_angle(-beta.arg())
}

/// Posterior `e^{2α|β| cos(θ − φ_β)} / (2π I₀(2α|β|))` on `[−π, π)`.
pub fn ch_posterior(alpha: f64, beta: Complex64, nodes: usize) -> Result<GridDistribution> {
    if !(alpha > 0.0) {
        return Err(PhaseError::Invalid(format!("α must be positive, got {alpha}")));
    }
    let x = 2.0 * alpha * beta.norm();
    let phi = outcome_phase(beta);
    let i0 = scaled(0, x)?[0];
    let support = Support::Circle { lo: -PI, hi: PI };
    Ok(GridDistribution::from_density(support, nodes, |t| (x * ((t - phi).cos() - 1.0)).exp() / (2.0 * PI * i0))?)
}

/// Posterior variance `₀F₁(2; α²|β|²) / (2 I₀(2α|β|) Γ(2))`.
pub fn ch_vpost(alpha: f64, abs_beta: f64) -> Result<f64> {
    let x = 2.0 * alpha * abs_beta;
    if x == 0.0 {
        return Ok(0.5);
    }
    if x < 20.0 {
        let f = hyp0f1(2.0, 0.25 * x * x, &SeriesControl::default())?;
        let i0 = scaled(0, x)?[0] * x.exp();
        return Ok(f / (2.0 * i0));
    }
    // Same quantity as I₁(x) / (x I₀(x)), free of overflow.
    let v = scaled(1, x)?;
    Ok(v[1] / (x * v[0]))
}

/// `(1 − e^{−α²}) / (2α²)`, with the limit `1/2` at `α = 0`.
pub fn ch_avg_variance(alpha: f64) -> f64 {
    let n = alpha * alpha;
    if n < 1e-300 {
        return 0.5;
    }
    -(-n).exp_m1() / (2.0 * n)
}

// Squeezed probe, heterodyne detection. The probe is D(α)S(−r)|0⟩ with
// α > 0, so its Wigner function is squeezed along p̂.

/// `p(β|θ)` for the squeezed probe.
pub fn sh_likelihood(alpha: f64, r: f64, beta: Complex64, theta: f64) -> f64 {
    let z = Complex64::from_polar(1.0, theta) * beta - alpha;
    let c = r.cosh();
    (-((-r).exp() * z.re * z.re + r.exp() * z.im * z.im) / c).exp() / (PI * c)
}

/// Per-radius sums `S_k = Σ_m Î_{2m+k}(A) Î_m(B)` for `k = 0, 1, 2`, with
/// `A = 2αρ(1 − tanh r)`, `B = ρ² tanh r` and `Î_n(x) = e^{−x} I_n(x)`.
/// The angular integrand is `e^{A cos ψ + B cos 2ψ}`.
struct ShSums {
    s: [f64; 3],
    log_scale: f64,
}

fn sh_sums(alpha: f64, r: f64, rho: f64, trunc: &SeriesTruncation) -> Result<ShSums> {
    let t = r.tanh();
    let a = 2.0 * alpha * rho * (1.0 - t);
    let b = rho * rho * t;
    let n = trunc.resolve(alpha, rho);
    let ia = scaled(2 * n + 2, a)?;
    let ib = scaled(n, b)?;
    let term = |m: i64, k: i64| ia[(2 * m + k).unsigned_abs() as usize] * ib[m.unsigned_abs() as usize];
    let mut s = [0.0; 3];
    let mut ring = 0.0;
    let ni = n as i64;
    for m in -ni..=ni {
        for (k, acc) in s.iter_mut().enumerate() {
            *acc += term(m, k as i64);
        }
        if m.abs() == ni {
            ring += term(m, 0);
        }
    }
    trunc.check(n, ring, s[0])?;
    Ok(ShSums { s, log_scale: a + b })
}

/// `p(β)` for the squeezed probe and a flat prior on `[−π, π)`.
pub fn sh_pbeta(alpha: f64, r: f64, beta: Complex64, trunc: &SeriesTruncation) -> Result<f64> {
    let rho = beta.norm();
    let t = r.tanh();
    let sums = sh_sums(alpha, r, rho, trunc)?;
    let log_pref = -rho * rho - alpha * alpha * (1.0 - t) + sums.log_scale;
    Ok(log_pref.exp() * sums.s[0] / (PI * r.cosh()))
}

/// `p(β)` from the unreduced three-factor expansion
/// `Σ (−1)^{m₁} I_{−2m₁−m₂}(−2α|β|) I_{m₁}(−|β|² tanh r) I_{m₂}(2α|β| tanh r)`.
/// Its terms grow like `e^{2α|β|(1 + tanh r)}` while the sum only grows
/// like `e^{2α|β|(1 − tanh r)}`, so it is usable for small arguments only.
pub fn sh_pbeta_double_sum(alpha: f64, r: f64, beta: Complex64, trunc: &SeriesTruncation) -> Result<f64> {
    let rho = beta.norm();
    let t = r.tanh();
    let n = trunc.resolve(alpha, rho);
    let ni = n as i64;
    let unscaled = |nmax: usize, x: f64| -> Result<Vec<f64>> {
        let e = x.abs().exp();
        Ok(scaled(nmax, x.abs())?.into_iter().map(|v| v * e).collect())
    };
    let x1 = 2.0 * alpha * rho;
    let x2 = rho * rho * t;
    let x3 = 2.0 * alpha * rho * t;
    let i1 = unscaled(3 * n, x1)?;
    let i2 = unscaled(n, x2)?;
    let i3 = unscaled(n, x3)?;
    // I_k(−x) = (−1)^k I_k(x)
    let sign = |k: i64| if k.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
    let (mut sum, mut ring) = (0.0, 0.0);
    for m1 in -ni..=ni {
        for m2 in -ni..=ni {
            let k = -2 * m1 - m2;
            let v = sign(m1)
                * sign(k)
                * i1[k.unsigned_abs() as usize]
                * sign(m1)
                * i2[m1.unsigned_abs() as usize]
                * i3[m2.unsigned_abs() as usize];
            sum += v;
            if m1.abs() == ni || m2.abs() == ni {
                ring += v;
            }
        }
    }
    trunc.check(n, ring, sum)?;
    Ok((-rho * rho - alpha * alpha * (1.0 - t)).exp() * sum / (PI * r.cosh()))
}

/// Circular-mean estimator: `φ_β` when the moment series is positive,
/// `φ_β + π` when it is negative, `None` when it vanishes.
pub fn sh_estimator(alpha: f64, r: f64, beta: Complex64, trunc: &SeriesTruncation) -> Result<Option<f64>> {
    let sums = sh_sums(alpha, r, beta.norm(), trunc)?;
    if !(sums.s[0] > 0.0) {
        return Err(PhaseError::Degenerate);
    }
    let m = sums.s[1] / sums.s[0];
    let phi = outcome_phase(beta);
    Ok(if m.abs() < UNDEFINED_MOMENT {
        None
    } else if m > 0.0 {
        Some(phi)
    } else {
        Some(wrap_angle(phi + PI))
    })
}

/// `V_post(β) = (1 − S₂/S₀)/2`; depends on `|β|` only.
pub fn sh_vpost(alpha: f64, r: f64, abs_beta: f64, trunc: &SeriesTruncation) -> Result<f64> {
    let sums = sh_sums(alpha, r, abs_beta, trunc)?;
    if !(sums.s[0] > 0.0) {
        return Err(PhaseError::Degenerate);
    }
    Ok(0.5 * (1.0 - sums.s[2] / sums.s[0]))
}

/// Average posterior variance for the squeezed probe, by adaptive radial
/// quadrature of `∫ρ dρ e^{−(1−t)(ρ−α)²}/cosh r · (S₀ − S₂)`.
pub fn sh_avg_variance(alpha: f64, r: f64, trunc: &SeriesTruncation, rel_tol: f64) -> Result<Estimate> {
    if !(alpha > 0.0) || !(r >= 0.0) {
        return Err(PhaseError::Invalid(format!("need α > 0 and r ≥ 0, got α = {alpha}, r = {r}")));
    }
    let t = r.tanh();
    let width = ((1.0 + (2.0 * r).exp()) / 4.0).sqrt();
    let upper = alpha + (8.0 * width).max(6.0);
    let failure = RefCell::new(None);
    let f = |rho: f64| match sh_sums(alpha, r, rho, trunc) {
        Ok(s) => rho * (-(1.0 - t) * (rho - alpha).powi(2)).exp() / r.cosh() * (s.s[0] - s.s[2]),
        Err(e) => {
            failure.borrow_mut().get_or_insert(e);
            f64::NAN
        }
    };
    let res = integrate(f, 0.0, upper, 1e-14, rel_tol, 4000);
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    let res = res?;
    Ok(Estimate { value: res.value, std_error: res.error })
}

/// Photon number in `[lo, hi]` at which a probe squeezed by `r` starts to
/// match coherent heterodyne at equal energy, located by bisection to
/// within `tol`. `None` when the difference does not change sign.
pub fn sh_crossover(r: f64, lo: f64, hi: f64, trunc: &SeriesTruncation, tol: f64) -> Result<Option<f64>> {
    let floor = r.sinh().powi(2);
    if !(lo > floor) || !(hi > lo) {
        return Err(PhaseError::Invalid(format!("bracket [{lo}, {hi}] must lie above sinh²r = {floor}")));
    }
    let gap = |n: f64| -> Result<f64> {
        let sq = sh_avg_variance((n - floor).sqrt(), r, trunc, 1e-10)?.value;
        Ok(sq - ch_avg_variance(n.sqrt()))
    };
    let (mut a, mut b) = (lo, hi);
    let mut fa = gap(a)?;
    if fa.signum() == gap(b)?.signum() {
        return Ok(None);
    }
    while b - a > tol {
        let m = 0.5 * (a + b);
        let fm = gap(m)?;
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Ok(Some(0.5 * (a + b)))
}

// Homodyne detection of q̂, θ ∈ [0, π].

/// `e^{−(q − √2α cos θ)²}/√π`.
pub fn hom_likelihood(alpha: f64, q: f64, theta: f64) -> f64 {
    let d = q - SQRT_2 * alpha * theta.cos();
    (-d * d).exp() / PI.sqrt()
}

/// Squeezed probe `D(α) S(r e^{iφ})|0⟩`: variance `Γ_qq(r, φ + 2θ)/2`.
pub fn hom_likelihood_sq(alpha: f64, r: f64, phi_s: f64, q: f64, theta: f64) -> f64 {
    let g = gamma_qq(r, phi_s + 2.0 * theta);
    let d = q - SQRT_2 * alpha * theta.cos();
    (-d * d / g).exp() / (PI * g).sqrt()
}

/// Scaled Bessel tables for `a = 2√2qα` and `b = −α²`:
/// `I_n(a) = e^{|a|} sgn(a)^n Î_{|n|}(|a|)`, `I_m(b) = e^{α²} (−1)^m Î_{|m|}(α²)`.
struct HomTables {
    ia: Vec<f64>,
    ib: Vec<f64>,
    neg_a: bool,
    n: usize,
}

impl HomTables {
    fn new(alpha: f64, q: f64, trunc: &SeriesTruncation) -> Result<Self> {
        let n = trunc.resolve(alpha, q);
        let a = 2.0 * SQRT_2 * q * alpha;
        Ok(HomTables { ia: scaled(2 * n + 1, a.abs())?, ib: scaled(n, alpha * alpha)?, neg_a: a < 0.0, n })
    }

    fn a(&self, k: i64) -> f64 {
        let v = self.ia[k.unsigned_abs() as usize];
        if self.neg_a && k.rem_euclid(2) == 1 {
            -v
        } else {
            v
        }
    }

    fn b(&self, m: i64) -> f64 {
        let v = self.ib[m.unsigned_abs() as usize];
        if m.rem_euclid(2) == 1 {
            -v
        } else {
            v
        }
    }

    /// `e^{−|a|−α²} Σ_m I_{2m+k}(a) I_m(−α²)` and its outermost ring.
    fn single(&self, k: i64) -> (f64, f64) {
        let ni = self.n as i64;
        let (mut s, mut ring) = (0.0, 0.0);
        for m in -ni..=ni {
            let v = self.a(2 * m + k) * self.b(m);
            s += v;
            if m.abs() == ni {
                ring += v;
            }
        }
        (s, ring)
    }
}

/// `p(q) = e^{−q²−α²}/√π · Σ_m I_{2m}(2√2qα) I_m(−α²)`.
pub fn hom_pq(alpha: f64, q: f64, trunc: &SeriesTruncation) -> Result<f64> {
    if !(alpha >= 0.0) {
        return Err(PhaseError::Invalid(format!("α must be non-negative, got {alpha}")));
    }
    let tab = HomTables::new(alpha, q, trunc)?;
    let (m, ring) = tab.single(0);
    trunc.check(tab.n, ring, m)?;
    let a = 2.0 * SQRT_2 * q * alpha;
    Ok((-q * q + a.abs()).exp() * m / PI.sqrt())
}

/// `⟨e^{iθ}⟩` of the posterior on `[0, π]`. The real part is
/// `Σ I_{2n+1}(a) I_n(b) / M`; the imaginary part is
/// `(2/πM) Σ_{m,n} I_{2n}(a) I_m(b) (1 − 4m² − 4n²) / [(2n−2m−1)(2n−2m+1)(2n+2m+1)(2n+2m−1)]`,
/// with `M = Σ I_{2m}(a) I_m(b)`, `a = 2√2qα`, `b = −α²`.
pub fn hom_circular_moment(alpha: f64, q: f64, trunc: &SeriesTruncation) -> Result<Complex64> {
    if !(alpha >= 0.0) {
        return Err(PhaseError::Invalid(format!("α must be non-negative, got {alpha}")));
    }
    let tab = HomTables::new(alpha, q, trunc)?;
    let (m, ring) = tab.single(0);
    trunc.check(tab.n, ring, m)?;
    if !(m.abs() > f64::MIN_POSITIVE) {
        return Err(PhaseError::Degenerate);
    }
    let (re, re_ring) = tab.single(1);
    let ni = tab.n as i64;
    let (mut im, mut im_ring) = (0.0, 0.0);
    for mm in -ni..=ni {
        let bm = tab.b(mm);
        for n in -ni..=ni {
            let num = (1 - 4 * mm * mm - 4 * n * n) as f64;
            let den =
                ((2 * n - 2 * mm - 1) * (2 * n - 2 * mm + 1) * (2 * n + 2 * mm + 1) * (2 * n + 2 * mm - 1)) as f64;
            let v = tab.a(2 * n) * bm * num / den;
            im += v;
            if mm.abs() == ni || n.abs() == ni {
                im_ring += v;
            }
        }
    }
    trunc.check(tab.n, re_ring, re.abs().max(m.abs() * trunc.tail_tol.sqrt()))?;
    trunc.check(tab.n, im_ring, im)?;
    Ok(Complex64::new(re / m, 2.0 * im / (PI * m)))
}

/// `arg ⟨e^{iθ}⟩` for the coherent homodyne posterior.
pub fn hom_estimator(alpha: f64, q: f64, trunc: &SeriesTruncation) -> Result<Option<f64>> {
    let z = hom_circular_moment(alpha, q, trunc)?;
    Ok(if z.norm() < UNDEFINED_MOMENT { None } else { Some(z.arg()) })
}

/// Engine strategy for any Gaussian probe under phase rotation.
#[derive(Debug, Clone)]
pub struct PhaseStrategy {
    task: PhaseTask,
    probe: GaussianState,
    kernel: HeterodyneKernel,
    pub radial_nodes: usize,
    pub angular_nodes: usize,
    pub line_nodes: usize,
}

impl PhaseStrategy {
    pub fn new(task: PhaseTask) -> Self {
        let probe = task.probe.state();
        PhaseStrategy {
            task,
            probe,
            kernel: HeterodyneKernel::new(&probe),
            radial_nodes: 512,
            angular_nodes: 64,
            line_nodes: 1601,
        }
    }

    fn homodyne_at(&self, c: f64, s: f64, q: f64) -> f64 {
        // Homodyne at angle φ_m on R(θ)ρR(θ)† is homodyne at θ + φ_m on ρ.
        let (sm, cm) = self.task.measurement.quadrature_angle.sin_cos();
        let (u0, u1) = (c * cm - s * sm, s * cm + c * sm);
        let mean = u0 * self.probe.mean[0] + u1 * self.probe.mean[1];
        let cov = &self.probe.cov;
        let var = u0 * u0 * cov[(0, 0)] + 2.0 * u0 * u1 * cov[(0, 1)] + u1 * u1 * cov[(1, 1)];
        let d = q - mean;
        (-0.5 * d * d / var).exp() / (2.0 * PI * var).sqrt()
    }

    fn heterodyne_at(&self, c: f64, s: f64, beta: Complex64) -> f64 {
        // p(β|θ) is the probe's Husimi function at e^{iθ}β.
        self.kernel.density_xy(c * beta.re - s * beta.im, s * beta.re + c * beta.im)
    }

    fn max_spread(&self) -> f64 {
        let s = self.task.probe.s;
        (2.0 * s).exp()
    }
}

impl EstimationStrategy for PhaseStrategy {
    fn likelihood(&self, theta: f64, outcome: &Outcome) -> f64 {
        let (s, c) = theta.sin_cos();
        match self.task.measurement.kind {
            MeasurementKind::Heterodyne => self.heterodyne_at(c, s, outcome.complex()),
            MeasurementKind::Homodyne => self.homodyne_at(c, s, outcome.real()),
        }
    }

    fn likelihood_row(&self, nodes: &NodeTable, outcome: &Outcome, out: &mut [f64]) {
        match self.task.measurement.kind {
            MeasurementKind::Heterodyne => {
                let beta = outcome.complex();
                for ((o, c), s) in out.iter_mut().zip(&nodes.cos).zip(&nodes.sin) {
                    *o = self.heterodyne_at(*c, *s, beta);
                }
            }
            MeasurementKind::Homodyne => {
                let q = outcome.real();
                for ((o, c), s) in out.iter_mut().zip(&nodes.cos).zip(&nodes.sin) {
                    *o = self.homodyne_at(*c, *s, q);
                }
            }
        }
    }

    fn outcome_rule(&self, _prior: &GridDistribution) -> OutcomeRule {
        let alpha = self.task.probe.alpha.norm();
        match self.task.measurement.kind {
            MeasurementKind::Heterodyne => {
                let upper = alpha + (8.0 * ((1.0 + self.max_spread()) / 4.0).sqrt()).max(6.0);
                let nr = self.radial_nodes;
                let na = self.angular_nodes;
                let h = upper / nr as f64;
                let fine_r = romberg_weights(nr, h, 3);
                let mut coarse_r = vec![0.0; nr + 1];
                for (k, w) in romberg_weights(nr / 2, 2.0 * h, 3).into_iter().enumerate() {
                    coarse_r[2 * k] = w;
                }
                let ha = 2.0 * PI / na as f64;
                let mut points = Vec::with_capacity(nr * na);
                let mut weights = Vec::with_capacity(nr * na);
                let mut coarse_weights = Vec::with_capacity(nr * na);
                for i in 1..=nr {
                    let rho = h * i as f64;
                    for j in 0..na {
                        let (s, c) = (ha * j as f64).sin_cos();
                        points.push(Outcome::Complex(Complex64::new(rho * c, rho * s)));
                        weights.push(fine_r[i] * rho * ha);
                        let cw = if j % 2 == 0 { coarse_r[i] * rho * 2.0 * ha } else { 0.0 };
                        coarse_weights.push(cw);
                    }
                }
                OutcomeRule { points, weights, coarse_weights }
            }
            MeasurementKind::Homodyne => {
                let half = SQRT_2 * alpha + (8.0 * (self.max_spread() / 2.0).sqrt()).max(6.0);
                OutcomeRule::line(0.0, half, self.line_nodes)
            }
        }
    }

    fn sample(&self, theta: f64, rng: &mut ChaCha8Rng) -> Outcome {
        sample_outcome(&rotate(&self.probe, theta), &self.task.measurement, rng)
    }
}

/// Mean and variance of the homodyne record for the rotated probe.
pub fn rotated_homodyne_moments(task: &PhaseTask, theta: f64) -> (f64, f64) {
    homodyne_moments(&rotate(&task.probe.state(), theta), task.measurement.quadrature_angle)
}

/// Average circular posterior variance through the generic engine.
pub fn phase_avg_variance_numeric(task: &PhaseTask, method: Method) -> Result<Estimate> {
    let prior = task.prior()?;
    Ok(average_posterior_variance(&PhaseStrategy::new(*task), &prior, method)?)
}
