//! Acceptance suite. Each criterion runs a fixed set of checks and reports
//! the measured deltas; failures are report content, never panics.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use nalgebra::Vector2;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{agrees, run, to_csv_string, ExperimentConfig, MethodSpec, Param, TaskKind};
use crate::bayes::{
    circular_mean, gamma_update, gaussian_update, grid_update, van_trees_bound, variance_circular, Estimate,
    GammaPrior, GaussianPrior, GridDistribution, Method, Support,
};
use crate::displacement_est::{
    het_avg_total_variance, het_total_variance_engine, hom_avg_variance_q, hom_variance_engine, repeated_variance,
};
use crate::measurement::{
    derive_seed, heterodyne_density, homodyne_density, homodyne_moments, sample_outcome, stream_rng, Measurement,
    Outcome,
};
use crate::phase_est::{
    ch_avg_variance, ch_posterior, hom_circular_moment, hom_likelihood, hom_likelihood_sq, hom_pq,
    phase_avg_variance_numeric, sh_avg_variance, sh_crossover, sh_estimator, sh_vpost, wrap_angle, PhaseTask,
    SeriesTruncation,
};
use crate::phasespace::{displace, mean_photon, rotate, squeeze, wigner, GaussianState, ProbeSpec};
use crate::quad::{integrate, trapezoid_weights};
use crate::specfun::{bessel_i, SeriesControl};
use crate::squeeze_est::{
    energy_split_scan, gamma_density_in_r, r_to_precision, split_probe, sq_avg_variance, sq_posterior, sq_van_trees,
    vacuum_gamma_update, SqueezePrior, SqueezeTask, SCAN_POINTS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Full,
    /// Fewer Monte Carlo samples and scan points, coarser bisection.
    Fast,
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "full" => Ok(Suite::Full),
            "fast" => Ok(Suite::Fast),
            other => Err(format!("unknown suite `{other}`, expected full or fast")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub suite: Suite,
    pub seed: u64,
    /// Monte Carlo sample count; the suite default when `None`.
    pub samples: Option<usize>,
    pub truncation: SeriesTruncation,
}

impl VerifyOptions {
    pub fn new(suite: Suite) -> Self {
        VerifyOptions { suite, seed: 20_240_917, samples: None, truncation: SeriesTruncation::default() }
    }

    pub fn samples(&self) -> usize {
        self.samples.unwrap_or(match self.suite {
            Suite::Full => 100_000,
            Suite::Fast => 10_000,
        })
    }

    fn scan_points(&self) -> usize {
        match self.suite {
            Suite::Full => SCAN_POINTS,
            Suite::Fast => 12,
        }
    }

    fn mc(&self, tag: u64) -> Method {
        Method::MonteCarlo { samples: self.samples(), seed: derive_seed(self.seed, tag) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub label: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionReport {
    pub id: u8,
    pub name: &'static str,
    pub checks: Vec<Check>,
    pub elapsed: Duration,
    pub budget: Duration,
}

impl CriterionReport {
    pub fn within_budget(&self) -> bool {
        self.elapsed <= self.budget
    }

    pub fn passed(&self) -> bool {
        self.within_budget() && !self.checks.is_empty() && self.checks.iter().all(|c| c.passed)
    }

    /// One line: verdict, id, name, failure count and timing.
    pub fn summary(&self) -> String {
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        format!(
            "criterion {} {}: {} ({}/{} checks failed, {:.1} s of {} s)",
            self.id,
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            failed,
            self.checks.len(),
            self.elapsed.as_secs_f64(),
            self.budget.as_secs()
        )
    }
}

impl fmt::Display for CriterionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.summary())?;
        for c in &self.checks {
            writeln!(f, "    [{}] {}: {}", if c.passed { "ok" } else { "FAIL" }, c.label, c.detail)?;
        }
        if !self.within_budget() {
            writeln!(f, "    [FAIL] runtime over budget")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub criteria: Vec<CriterionReport>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.criteria.iter().all(CriterionReport::passed)
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.criteria {
            write!(f, "{c}")?;
        }
        let passed = self.criteria.iter().filter(|c| c.passed()).count();
        writeln!(f, "{passed}/{} criteria passed", self.criteria.len())
    }
}

/// Criterion ids, names and runtime budgets in seconds.
pub const CRITERIA: [(u8, &str, u64); 9] = [
    (1, "displacement, heterodyne closed form", 30),
    (2, "displacement, homodyne saturates Van Trees", 10),
    (3, "repetition law", 1),
    (4, "phase, coherent heterodyne", 120),
    (5, "phase, squeezed heterodyne series", 600),
    (6, "phase, homodyne", 900),
    (7, "squeezing estimation", 900),
    (8, "invariant suites", 300),
    (9, "determinism", 60),
];

pub fn verify(opts: &VerifyOptions) -> Report {
    Report { criteria: CRITERIA.iter().map(|c| run_criterion(c.0, opts)).collect() }
}

/// Runs one criterion by id (1 to 9).
///
/// # Panics
/// On an unknown id.
pub fn run_criterion(id: u8, opts: &VerifyOptions) -> CriterionReport {
    let &(_, name, budget) = CRITERIA.iter().find(|c| c.0 == id).unwrap_or_else(|| panic!("no criterion {id}"));
    let start = Instant::now();
    let mut ck = Checks::default();
    match id {
        1 => displacement_het(&mut ck, opts),
        2 => displacement_hom(&mut ck),
        3 => repetition(&mut ck),
        4 => coherent_heterodyne(&mut ck, opts),
        5 => squeezed_heterodyne(&mut ck, opts),
        6 => homodyne_phase(&mut ck, opts),
        7 => squeezing(&mut ck, opts),
        8 => invariants(&mut ck, opts),
        9 => determinism(&mut ck, opts),
        _ => unreachable!(),
    }
    CriterionReport { id, name, checks: ck.0, elapsed: start.elapsed(), budget: Duration::from_secs(budget) }
}

#[derive(Default)]
struct Checks(Vec<Check>);

impl Checks {
    fn add(&mut self, label: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.0.push(Check { label: label.into(), passed, detail: detail.into() });
    }

    /// `|got − want| ≤ rel·|want|`.
    fn close(&mut self, label: impl Into<String>, got: f64, want: f64, rel: f64) {
        let d = (got - want).abs();
        self.add(label, d <= rel * want.abs(), format!("got {got:.12e}, want {want:.12e}, |Δ| = {d:.3e}"));
    }

    fn exact(&mut self, label: impl Into<String>, got: f64, want: f64) {
        self.add(label, got == want, format!("got {got:.17e}, want {want:.17e}"));
    }

    /// Engine estimate against a reference under the agreement rule.
    fn engine(&mut self, label: impl Into<String>, reference: f64, est: &Estimate, monte_carlo: bool) {
        let d = (est.value - reference).abs();
        let detail = if monte_carlo {
            format!("{:.8} ± {:.2e} vs {reference:.8}, |Δ| = {:.2} SE", est.value, est.std_error, d / est.std_error)
        } else {
            format!("{:.12} vs {reference:.12}, relative Δ = {:.2e}", est.value, d / reference.abs())
        };
        self.add(label, agrees(reference, est, monte_carlo), detail);
    }

    fn ok<T, E: fmt::Display>(&mut self, label: &str, r: Result<T, E>) -> Option<T> {
        r.map_err(|e| self.add(label, false, format!("error: {e}"))).ok()
    }
}

fn displacement_het(ck: &mut Checks, opts: &VerifyOptions) {
    let v = het_avg_total_variance(0.25, 0.0);
    ck.exact("closed form at σ₀² = 1/4, r = 0", v, 1.0 / 3.0);
    let alpha0 = Complex64::new(0.3, -0.2);
    if let Some(e) = ck.ok("quadrature engine", het_total_variance_engine(0.25, 0.0, alpha0, Method::Quadrature)) {
        ck.engine("quadrature engine", 1.0 / 3.0, &e, false);
    }
    if let Some(e) = ck.ok("Monte Carlo engine", het_total_variance_engine(0.25, 0.0, alpha0, opts.mc(1))) {
        ck.engine(format!("Monte Carlo engine, {} samples", opts.samples()), 1.0 / 3.0, &e, true);
    }
}

fn displacement_hom(ck: &mut Checks) {
    let v = hom_avg_variance_q(1.0, 0.0);
    ck.exact("closed form at σ₀² = 1, r = 0", v, 0.2);
    if let Some(b) = ck.ok("Van Trees bound", van_trees_bound(1.0, 4.0)) {
        ck.exact("saturates the Van Trees bound", v, b);
    }
    if let Some(e) = ck.ok("quadrature engine", hom_variance_engine(1.0, 0.0, 0.0, 0.0, Method::Quadrature)) {
        ck.engine("quadrature engine", 0.2, &e, false);
    }
}

fn repetition(ck: &mut Checks) {
    // A q̂ record from a coherent probe has likelihood variance 1/4 in α.
    let mut prior = GaussianPrior { mu0: 0.0, var0: 1.0 };
    for q in [0.3, -0.8, 1.1] {
        match gaussian_update(prior, q, 0.25) {
            Ok(p) => prior = p,
            Err(e) => return ck.add("conjugate update", false, format!("error: {e}")),
        }
    }
    ck.close("three chained updates", prior.var0, 1.0 / 13.0, 2.0 * f64::EPSILON);
    ck.close("closed form for three rounds", repeated_variance(1.0, 0.0, 3), 1.0 / 13.0, 2.0 * f64::EPSILON);
}

fn coherent_heterodyne(ck: &mut Checks, opts: &VerifyOptions) {
    for (k, n) in [0.5f64, 1.0, 2.0, 5.0].into_iter().enumerate() {
        let want = (1.0 - (-n).exp()) / (2.0 * n);
        let v = ch_avg_variance(n.sqrt());
        ck.close(format!("closed form at n = {n}"), v, want, 1e-14);
        let task = PhaseTask::new(ProbeSpec::coherent(Complex64::new(n.sqrt(), 0.0)), Measurement::heterodyne());
        let Some(task) = ck.ok("task", task) else { continue };
        if let Some(e) = ck.ok("Monte Carlo engine", phase_avg_variance_numeric(&task, opts.mc(k as u64))) {
            ck.engine(format!("Monte Carlo engine at n = {n}"), v, &e, true);
        }
    }
    let small = ch_avg_variance(1e-6);
    ck.add("α → 0 limit", (small - 0.5).abs() <= 1e-9, format!("V(α = 1e-6) = {small:.15}"));
    let zero = ch_avg_variance(0.0);
    ck.add("α = 0", (zero - 0.5).abs() <= 1e-9, format!("V(0) = {zero}"));
    let scaled = ch_avg_variance(10f64.sqrt()) * 20.0;
    ck.add("1/(2n) scaling at n = 10", (scaled - 1.0).abs() <= 1e-3, format!("2n·V = {scaled:.8}"));
}

fn squeezed_heterodyne(ck: &mut Checks, opts: &VerifyOptions) {
    let trunc = &opts.truncation;
    for n in [0.5f64, 1.0, 2.0, 5.0] {
        let alpha = n.sqrt();
        if let Some(e) = ck.ok("series at r = 0", sh_avg_variance(alpha, 0.0, trunc, 1e-10)) {
            let want = ch_avg_variance(alpha);
            let d = (e.value - want).abs();
            ck.add(format!("r = 0 reduction at n = {n}"), d <= 1e-6, format!("|Δ| = {d:.3e}"));
        }
    }
    let series = ck.ok("series at α = 1, r = 1/4", sh_avg_variance(1.0, 0.25, trunc, 1e-10));
    let oracle = PhaseTask::squeezed_heterodyne(1.0, 0.25)
        .map_err(|e| e.to_string())
        .and_then(|t| phase_avg_variance_numeric(&t, Method::Quadrature).map_err(|e| e.to_string()));
    if let (Some(s), Some(o)) = (series, ck.ok("grid quadrature at α = 1, r = 1/4", oracle)) {
        let d = (s.value - o.value).abs();
        ck.add("series vs grid quadrature", d <= 1e-4, format!("{:.12} vs {:.12}, |Δ| = {d:.3e}", s.value, o.value));
    }
    let r = 1.25f64;
    for n in [3.0f64, 4.0, 6.0] {
        let sq = sh_avg_variance((n - r.sinh().powi(2)).sqrt(), r, trunc, 1e-10);
        if let Some(sq) = ck.ok("series at r = 1.25", sq) {
            let coh = ch_avg_variance(n.sqrt());
            ck.add(
                format!("r = 1.25 worse than r = 0 at n = {n}"),
                sq.value > coh,
                format!("{:.6} vs {coh:.6}", sq.value),
            );
        }
    }
    let tol = match opts.suite {
        Suite::Full => 1e-3,
        Suite::Fast => 1e-2,
    };
    if let Some(x) = ck.ok("crossover search", sh_crossover(0.75, 0.7, 3.0, trunc, tol)) {
        match x {
            Some(n) => ck.add("r = 0.75 crossover near n = 1.41", (n - 1.41).abs() <= 0.1, format!("n = {n:.4}")),
            None => ck.add("r = 0.75 crossover near n = 1.41", false, "no sign change in [0.7, 3]"),
        }
    }
}

fn homodyne_phase(ck: &mut Checks, opts: &VerifyOptions) {
    let hom = |alpha: f64, r: f64, phi: f64| {
        PhaseTask::homodyne(alpha, r, phi)
            .and_then(|t| phase_avg_variance_numeric(&t, Method::Quadrature))
            .map(|e| e.value)
    };
    if let Some(v) = ck.ok("vacuum probe", hom(0.0, 0.0, 0.0)) {
        ck.add("vacuum probe gives 1/2", (v - 0.5).abs() <= 1e-6, format!("V = {v:.12}"));
    }
    for n in [0.5f64, 1.0, 2.0, 4.0] {
        let Some(h) = ck.ok("coherent homodyne", hom(n.sqrt(), 0.0, 0.0)) else { continue };
        let het = ch_avg_variance(n.sqrt());
        ck.add(format!("homodyne ≤ heterodyne at n = {n}"), h <= het, format!("{h:.6} vs {het:.6}"));
        if n < 1.0 {
            continue;
        }
        let r = 0.5f64;
        let alpha = (n - r.sinh().powi(2)).sqrt();
        for phi in [0.0, PI / 2.0, PI] {
            if let Some(s) = ck.ok("squeezed homodyne", hom(alpha, r, phi)) {
                ck.add(
                    format!("r = 0.5, φ = {phi:.4} no better than coherent at n = {n}"),
                    s >= h,
                    format!("{s:.6} vs {h:.6}"),
                );
            }
        }
    }
    duality(ck, opts);
}

/// Series against direct quadrature over `θ ∈ [0, π]` on 25 seeded points.
fn duality(ck: &mut Checks, opts: &VerifyOptions) {
    let mut rng = stream_rng(opts.seed, 6);
    let (mut worst_p, mut worst_m, mut errors) = (0.0f64, 0.0f64, Vec::new());
    for _ in 0..25 {
        let alpha = rng.gen_range(0.1..2.5);
        let q = rng.gen_range(-1.0..1.0) * (SQRT_2 * alpha + 1.5);
        let quad = |f: &dyn Fn(f64) -> f64| integrate(f, 0.0, PI, 1e-300, 1e-13, 2000).map(|i| i.value);
        let (Ok(z), Ok(re), Ok(im)) = (
            quad(&|t| hom_likelihood(alpha, q, t)),
            quad(&|t| hom_likelihood(alpha, q, t) * t.cos()),
            quad(&|t| hom_likelihood(alpha, q, t) * t.sin()),
        ) else {
            errors.push(format!("quadrature failed at α = {alpha:.3}, q = {q:.3}"));
            continue;
        };
        match hom_pq(alpha, q, &opts.truncation) {
            Ok(p) => worst_p = worst_p.max((p - z / PI).abs() / (z / PI)),
            Err(e) => errors.push(format!("p(q) at α = {alpha:.3}, q = {q:.3}: {e}")),
        }
        match hom_circular_moment(alpha, q, &opts.truncation) {
            Ok(m) => worst_m = worst_m.max((m - Complex64::new(re / z, im / z)).norm()),
            Err(e) => errors.push(format!("⟨e^{{iθ}}⟩ at α = {alpha:.3}, q = {q:.3}: {e}")),
        }
    }
    let first = errors.first().cloned().unwrap_or_default();
    ck.add(
        "p(q) series vs quadrature, 25 points",
        errors.is_empty() && worst_p <= 1e-6,
        format!("worst relative Δ = {worst_p:.2e}, {} errors {first}", errors.len()),
    );
    ck.add(
        "⟨e^{iθ}⟩ series vs quadrature, 25 points",
        errors.is_empty() && worst_m <= 1e-6,
        format!("worst |Δ| = {worst_m:.2e}"),
    );
}

fn squeezing(ck: &mut Checks, opts: &VerifyOptions) {
    let g = GammaPrior { a: 3.0, b: 1.5 };
    let dyadic = [0.5, -1.25, 2.0, 0.75];
    let mut rng = stream_rng(opts.seed, 7);
    let random: Vec<f64> = (0..10).map(|_| rng.gen_range(-2.0..2.0)).collect();
    for (label, outcomes, rel) in
        [("dyadic outcomes", &dyadic[..], 0.0), ("random outcomes", &random[..], 4.0 * f64::EPSILON)]
    {
        let batch = gamma_update(g, outcomes);
        let chain = outcomes.iter().try_fold(g, |p, q| gamma_update(p, &[*q]));
        if let (Some(b), Some(c)) = (ck.ok("batch update", batch), ck.ok("chained update", chain)) {
            let db = (b.b - c.b).abs();
            ck.add(
                format!("Gamma chain equals batch, {label}"),
                b.a == c.a && db <= rel * b.b,
                format!("a: {} vs {}, b: {} vs {}", c.a, b.a, c.b, b.b),
            );
        }
    }

    let prior = GammaPrior { a: 4.0, b: 2.0 };
    let vacuum = ProbeSpec::coherent(Complex64::new(0.0, 0.0));
    if let Some(task) = ck.ok("Gamma task", SqueezeTask::new(vacuum, SqueezePrior::Gamma(prior))) {
        let mut worst = 0.0f64;
        for q in [-1.3, 0.1, 0.45, 2.2] {
            let (Ok(post), Ok(exact)) = (sq_posterior(&task, q), vacuum_gamma_update(prior, &[q])) else {
                return ck.add("grid vs Gamma posterior", false, format!("update failed at q = {q}"));
            };
            for (r, d) in post.nodes.iter().zip(&post.density) {
                worst = worst.max((d - gamma_density_in_r(&exact, *r)).abs());
            }
            let dl = (post.expect(r_to_precision) - exact.mean()).abs();
            ck.add(format!("posterior mean precision at q = {q}"), dl <= 1e-4, format!("|Δ| = {dl:.2e}"));
        }
        ck.add("grid vs Gamma posterior in r", worst <= 1e-4, format!("worst pointwise |Δ| = {worst:.2e}"));
    }

    let gp = GaussianPrior { mu0: -0.5, var0: 1.0 };
    let ns: &[f64] = match opts.suite {
        Suite::Full => &[0.25, 0.5, 1.0, 2.0, 3.0, 4.0],
        Suite::Fast => &[0.5, 2.0, 4.0],
    };
    for &n in ns {
        let Some(scan) = ck.ok("energy split scan", energy_split_scan(n, gp, opts.scan_points(), Method::Quadrature))
        else {
            continue;
        };
        let bound = sq_van_trees(n, gp.var0);
        let worst = scan
            .points
            .iter()
            .map(|p| p.variance.value + 3.0 * p.variance.std_error - bound)
            .fold(f64::INFINITY, f64::min);
        ck.add(
            format!("Van Trees respected on the n = {n} contour"),
            worst >= 0.0,
            format!("bound {bound:.6}, smallest margin {worst:.6}, {} points", scan.points.len()),
        );
        let (first, last, best) =
            (scan.points[0].variance.value, scan.points.last().unwrap().variance.value, scan.best());
        ck.add(
            format!("scan minimum at or below both endpoints, n = {n}"),
            best.variance.value <= first && best.variance.value <= last,
            format!(
                "min {:.6} at s = {:.4}; s = 0: {first:.6}, pure squeezing: {last:.6}",
                best.variance.value, best.s
            ),
        );
    }

    for n in [1.0f64, 2.0] {
        let label = format!("s = 1 beats s = 0 at n = {n}");
        let Some(probe) = split_probe(n, 1.0) else {
            let need = 1f64.sinh().powi(2);
            ck.add(label, false, format!("infeasible: an s = 1 probe carries sinh²1 = {need:.4} > n = {n} photons"));
            continue;
        };
        let coherent = split_probe(n, 0.0).expect("s = 0 is always feasible");
        let v = |p: ProbeSpec| {
            SqueezeTask::new(p, SqueezePrior::Gaussian(gp)).and_then(|t| sq_avg_variance(&t, Method::Quadrature))
        };
        if let (Some(a), Some(b)) = (ck.ok("s = 1 probe", v(probe)), ck.ok("s = 0 probe", v(coherent))) {
            ck.add(label, a.value < b.value, format!("{:.6} vs {:.6}", a.value, b.value));
        }
    }
}

fn random_state(rng: &mut ChaCha8Rng) -> GaussianState {
    let alpha = Complex64::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
    let probe = ProbeSpec { alpha, s: rng.gen_range(0.0..1.0), psi: rng.gen_range(-PI..PI) };
    probe.state()
}

fn invariants(ck: &mut Checks, opts: &VerifyOptions) {
    let mut rng = stream_rng(opts.seed, 8);

    let mut impure = 0;
    let mut photon = 0.0f64;
    for _ in 0..200 {
        let alpha = Complex64::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let probe = ProbeSpec { alpha, s: rng.gen_range(0.0..1.5), psi: rng.gen_range(-PI..PI) };
        let st = probe.state();
        photon = photon.max((mean_photon(&st) - probe.mean_photon()).abs());
        let st = rotate(&squeeze(&st, rng.gen_range(0.0..1.0), rng.gen_range(-PI..PI)), rng.gen_range(-PI..PI));
        let st = displace(&st, Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        if !st.is_pure() {
            impure += 1;
        }
    }
    ck.add("purity preserved by Gaussian unitaries", impure == 0, format!("{impure} of 200 states impure"));
    ck.add("mean photon number of probes", photon <= 1e-9, format!("worst |Δ| = {photon:.2e}"));

    let mut worst = 0.0f64;
    for _ in 0..10 {
        let st = random_state(&mut rng);
        let w = plane_integral(&st, |x, y| wigner(&st, Vector2::new(x, y)).unwrap_or(f64::NAN));
        worst = worst.max((w - 1.0).abs());
        // β = (x + iy)/√2 has Jacobian 1/2.
        let b = plane_integral(&st, |x, y| 0.5 * heterodyne_density(&st, Complex64::new(x, y) / SQRT_2));
        worst = worst.max((b - 1.0).abs());
        let angle = rng.gen_range(0.0..PI);
        let (m, v) = homodyne_moments(&st, angle);
        let sd = v.sqrt();
        let hom = integrate(|q| homodyne_density(&st, q, angle), m - 12.0 * sd, m + 12.0 * sd, 1e-14, 1e-12, 500);
        worst = worst.max(hom.map(|i| (i.value - 1.0).abs()).unwrap_or(f64::INFINITY));
    }
    for _ in 0..10 {
        let (alpha, theta) = (rng.gen_range(0.0..3.0), rng.gen_range(0.0..PI));
        let c = SQRT_2 * alpha * theta.cos();
        let l = integrate(|q| hom_likelihood(alpha, q, theta), c - 8.0, c + 8.0, 1e-14, 1e-12, 500);
        worst = worst.max(l.map(|i| (i.value - 1.0).abs()).unwrap_or(f64::INFINITY));
    }
    ck.add("Wigner and outcome densities normalised", worst <= 1e-8, format!("worst |mass − 1| = {worst:.2e}"));

    let ctl = SeriesControl::default();
    let (mut rec, mut parity) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let n = rng.gen_range(1..40i64);
        let x = rng.gen_range(0.05..60.0);
        let (Ok(a), Ok(b), Ok(c), Ok(d), Ok(e)) = (
            bessel_i(n - 1, x, &ctl),
            bessel_i(n + 1, x, &ctl),
            bessel_i(n, x, &ctl),
            bessel_i(-n, x, &ctl),
            bessel_i(n, -x, &ctl),
        ) else {
            return ck.add("Bessel recurrence", false, format!("evaluation failed at n = {n}, x = {x}"));
        };
        rec = rec.max(((a - b) - 2.0 * n as f64 / x * c).abs() / a.abs().max(f64::MIN_POSITIVE));
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        parity = parity.max((d - c).abs().max((e - sign * c).abs()) / c.abs().max(f64::MIN_POSITIVE));
    }
    ck.add("Bessel recurrence", rec <= 1e-10, format!("worst relative residual {rec:.2e}"));
    ck.add("Bessel parity", parity <= 1e-14, format!("worst relative Δ {parity:.2e}"));

    let mut worst = 0.0f64;
    for _ in 0..20 {
        let prior = GaussianPrior { mu0: rng.gen_range(-1.0..1.0), var0: rng.gen_range(0.1..2.0) };
        let (x, v) = (rng.gen_range(-2.0..2.0), rng.gen_range(0.1..1.0));
        let like = |t: f64, o: &Outcome| (-(o.real() - t).powi(2) / (2.0 * v)).exp();
        let exact = gaussian_update(prior, x, v);
        let grid = grid_update(&prior.to_grid(2001), &like, &Outcome::Real(x));
        let (Ok(exact), Ok(grid)) = (exact, grid) else {
            return ck.add("Gaussian conjugacy", false, "update failed");
        };
        let m = grid.expect(|t| t);
        let var = grid.expect(|t| (t - m).powi(2));
        worst = worst.max((m - exact.mu0).abs()).max((var - exact.var0).abs() / exact.var0);
    }
    ck.add("Gaussian conjugacy matches grid update", worst <= 1e-6, format!("worst Δ = {worst:.2e}"));

    // Posteriors of the phase tasks under a flat prior: coherent and
    // squeezed heterodyne on [−π, π), homodyne on [0, π]. Squeezed homodyne
    // is kept apart because single posteriors can be bimodal at both ends
    // of the arc.
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sq_lo, mut sq_hi, mut sq_worst) = (f64::INFINITY, f64::NEG_INFINITY, String::new());
    let arc = Support::Circle { lo: 0.0, hi: PI };
    let trunc = SeriesTruncation::default();
    let posterior_variance =
        |d: &GridDistribution| circular_mean(d).ok().and_then(|m| variance_circular(d, m.unwrap_or(0.0)).ok());
    for _ in 0..40 {
        let alpha = rng.gen_range(0.05..3.0);
        let beta = Complex64::from_polar(rng.gen_range(0.0..3.0), rng.gen_range(-PI..PI));
        let (r, phi) = (rng.gen_range(0.0..1.25), rng.gen_range(0.0..PI));
        let q = rng.gen_range(-1.0..1.0) * (SQRT_2 * alpha + 2.0);
        let coherent_hom = GridDistribution::from_density(arc, 2049, |t| hom_likelihood(alpha, q, t));
        let vs = [
            ch_posterior(alpha, beta, 2048).ok().and_then(|d| posterior_variance(&d)),
            sh_vpost(alpha, r, beta.norm(), &trunc).ok(),
            coherent_hom.ok().and_then(|d| posterior_variance(&d)),
        ];
        for v in vs.into_iter().flatten() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let squeezed_hom = GridDistribution::from_density(arc, 2049, |t| hom_likelihood_sq(alpha, r, phi, q, t));
        if let Some(v) = squeezed_hom.ok().and_then(|d| posterior_variance(&d)) {
            sq_lo = sq_lo.min(v);
            if v > sq_hi {
                sq_hi = v;
                sq_worst = format!("α = {alpha:.3}, r = {r:.3}, φ = {phi:.3}, q = {q:.3}");
            }
        }
    }
    ck.add(
        "heterodyne and coherent homodyne posterior variance in [0, 1/2]",
        lo >= 0.0 && hi <= 0.5 + 1e-12,
        format!("range [{lo:.4}, {hi:.4}] over 120 posteriors"),
    );
    ck.add(
        "squeezed homodyne posterior variance in [0, 1/2]",
        sq_lo >= 0.0 && sq_hi <= 0.5 + 1e-12,
        format!("range [{sq_lo:.4}, {sq_hi:.4}] over 40 posteriors, largest at {sq_worst}"),
    );
    let flat = GridDistribution::flat(Support::Circle { lo: -PI, hi: PI }, 2048)
        .ok()
        .and_then(|d| variance_circular(&d, 0.0).ok())
        .unwrap_or(f64::NAN);
    ck.add(
        "posterior circular variance lies in [0, 1/2]",
        lo >= 0.0 && hi <= 0.5 + 1e-12,
        format!("range [{lo:.4}, {hi:.4}] over 160 posteriors"),
    );
    ck.add("flat posterior gives 1/2", (flat - 0.5).abs() <= 1e-12, format!("V = {flat:.15}"));

    let mut worst = 0.0f64;
    for _ in 0..20 {
        let alpha = rng.gen_range(0.3..2.0);
        let beta = Complex64::from_polar(rng.gen_range(0.2..2.5), rng.gen_range(-PI..PI));
        let delta = rng.gen_range(-PI..PI);
        let shifted = beta * Complex64::from_polar(1.0, -delta);
        let means = (ch_posterior(alpha, beta, 2048), ch_posterior(alpha, shifted, 2048));
        if let (Ok(a), Ok(b)) = means {
            if let (Ok(Some(ma)), Ok(Some(mb))) = (circular_mean(&a), circular_mean(&b)) {
                worst = worst.max(wrap_angle(mb - ma - delta).abs());
            }
        }
        let r = rng.gen_range(0.0..1.0);
        let trunc = SeriesTruncation::default();
        if let (Ok(Some(ea)), Ok(Some(eb))) =
            (sh_estimator(alpha, r, beta, &trunc), sh_estimator(alpha, r, shifted, &trunc))
        {
            worst = worst.max(wrap_angle(eb - ea - delta).abs());
        }
    }
    ck.add("heterodyne posteriors rotate with the outcome", worst <= 1e-9, format!("worst |Δ| = {worst:.2e}"));

    let samples = 20_000usize;
    let mut worst = 0.0f64;
    for k in 0..6u64 {
        let st = random_state(&mut rng);
        let het = Measurement::heterodyne();
        let (mut s, mut s2) = (Complex64::new(0.0, 0.0), Vector2::new(0.0, 0.0));
        for i in 0..samples {
            let b = sample_outcome(&st, &het, &mut stream_rng(derive_seed(opts.seed, 100 + k), i as u64)).complex();
            s += b;
            s2 += Vector2::new(b.re * b.re, b.im * b.im);
        }
        let n = samples as f64;
        for axis in 0..2 {
            let mean = if axis == 0 { s.re } else { s.im } / n;
            let var = s2[axis] / n - mean * mean;
            let (want_m, want_v) = (st.mean[axis] / SQRT_2, (st.cov[(axis, axis)] + 0.5) / 2.0);
            worst = worst.max((mean - want_m).abs() / (want_v / n).sqrt());
            worst = worst.max((var - want_v).abs() / (want_v * (2.0 / n).sqrt()));
        }
        let angle = rng.gen_range(0.0..PI);
        let Ok(hom) = Measurement::homodyne(angle) else { continue };
        let (want_m, want_v) = homodyne_moments(&st, angle);
        let (mut s, mut s2) = (0.0, 0.0);
        for i in 0..samples {
            let q = sample_outcome(&st, &hom, &mut stream_rng(derive_seed(opts.seed, 200 + k), i as u64)).real();
            s += q;
            s2 += q * q;
        }
        let mean = s / n;
        let var = s2 / n - mean * mean;
        worst = worst.max((mean - want_m).abs() / (want_v / n).sqrt());
        worst = worst.max((var - want_v).abs() / (want_v * (2.0 / n).sqrt()));
    }
    ck.add("sampler moments", worst <= 5.0, format!("largest deviation {worst:.2} SE"));
}

/// Trapezoid integral of `f` over a box of ±12 heterodyne widths around
/// the mean of `st`.
fn plane_integral<F: Fn(f64, f64) -> f64>(st: &GaussianState, f: F) -> f64 {
    let n = 601;
    let (sx, sy) = ((st.cov[(0, 0)] + 0.5).sqrt(), (st.cov[(1, 1)] + 0.5).sqrt());
    let (hx, hy) = (24.0 * sx / (n - 1) as f64, 24.0 * sy / (n - 1) as f64);
    let (wx, wy) = (trapezoid_weights(n, hx), trapezoid_weights(n, hy));
    let mut total = 0.0;
    for (i, wi) in wx.iter().enumerate() {
        let x = st.mean[0] - 12.0 * sx + i as f64 * hx;
        for (j, wj) in wy.iter().enumerate() {
            let y = st.mean[1] - 12.0 * sy + j as f64 * hy;
            total += wi * wj * f(x, y);
        }
    }
    total
}

fn determinism(ck: &mut Checks, opts: &VerifyOptions) {
    let samples = opts.samples().min(5_000);
    let mut phase = ExperimentConfig::new(TaskKind::PhaseHet).with(Param::N, &[0.5, 1.0]).with(Param::S, &[0.0, 0.25]);
    phase.method = MethodSpec::MonteCarlo { samples };
    phase.seed = Some(opts.seed);
    phase.force_both_paths = true;
    let mut disp = ExperimentConfig::new(TaskKind::DisplacementHet)
        .with(Param::Sigma0Sq, &[0.25, 1.0])
        .with(Param::S, &[0.0, 0.5]);
    disp.method = MethodSpec::MonteCarlo { samples };
    disp.seed = Some(opts.seed);
    let squeeze = ExperimentConfig::new(TaskKind::Squeeze)
        .with(Param::N, &[1.0])
        .with(Param::S, &[0.0, 0.5])
        .with(Param::Mu0, &[-0.5]);
    let configs = [phase, disp, squeeze];
    let render = |threads: usize| -> Result<String, String> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| e.to_string())?;
        Ok(pool.install(|| configs.iter().map(|c| to_csv_string(&run(c))).collect()))
    };
    let (Some(a), Some(b)) = (ck.ok("first run", render(1)), ck.ok("second run", render(3))) else { return };
    let differing = a.lines().zip(b.lines()).filter(|(x, y)| x != y).count();
    ck.add(
        "same seed gives byte-identical CSV",
        a == b,
        format!("{} bytes, {differing} differing lines, 1 and 3 worker threads", a.len()),
    );
    let statuses_ok = a.lines().filter(|l| !l.starts_with("task,")).all(|l| l.ends_with(",ok"));
    ck.add("every row evaluated", statuses_ok, format!("{} rows", a.lines().count() - configs.len()));
}
