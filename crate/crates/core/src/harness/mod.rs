//! Experiment runner: evaluates a parameter sweep, row by row, through
//! closed forms where they exist and the generic engine otherwise, and
//! writes the results as CSV.

pub mod config;
pub mod verify;

use std::io::Write;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::bayes::{Estimate, GaussianPrior, Method};
use crate::displacement_est::{het_avg_total_variance, het_total_variance_engine, hom_variance_engine};
use crate::measurement::{derive_seed, Measurement};
use crate::phase_est::{ch_avg_variance, phase_avg_variance_numeric, sh_avg_variance, PhaseTask, SeriesTruncation};
use crate::phasespace::{gamma_qq, ProbeSpec};
use crate::squeeze_est::{sq_avg_variance, SqueezePrior, SqueezeTask};

pub use config::{ConfigError, ExperimentConfig, MethodSpec, Param, TaskKind};

/// Relative tolerance for agreement between a closed form and a
/// quadrature estimate.
pub const AGREEMENT_REL_TOL: f64 = 1e-6;
/// Standard errors allowed between a closed form and a Monte Carlo mean.
pub const AGREEMENT_SE: f64 = 4.0;

pub const CSV_HEADER: [&str; 14] = [
    "task",
    "alpha",
    "s",
    "psi",
    "sigma0sq",
    "mu0",
    "m_rounds",
    "n",
    "avg_variance",
    "std_error",
    "method",
    "check_value",
    "check_error",
    "status",
];

/// Whether `est` reproduces `reference`: within `AGREEMENT_SE` standard
/// errors for Monte Carlo, and within `AGREEMENT_REL_TOL` relative otherwise
/// or when the standard error collapses to zero.
pub fn agrees(reference: f64, est: &Estimate, monte_carlo: bool) -> bool {
    let diff = (est.value - reference).abs();
    let rel = AGREEMENT_REL_TOL * reference.abs();
    if monte_carlo {
        diff <= (AGREEMENT_SE * est.std_error).max(rel)
    } else {
        diff <= rel
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRecord {
    pub task: TaskKind,
    pub alpha: f64,
    pub s: f64,
    pub psi: f64,
    pub sigma0sq: f64,
    pub mu0: f64,
    pub m_rounds: u32,
    pub n: f64,
    pub avg_variance: Option<f64>,
    pub std_error: Option<f64>,
    pub method: &'static str,
    pub check_value: Option<f64>,
    pub check_error: Option<f64>,
    pub status: String,
    /// Not written to CSV, which must be reproducible byte for byte.
    pub wall_time: Duration,
}

/// Parameters of one row after defaults and the energy constraint.
#[derive(Debug, Clone, Copy)]
struct RowParams {
    alpha: f64,
    s: f64,
    psi: f64,
    sigma0sq: f64,
    mu0: f64,
    m_rounds: u32,
    n: f64,
}

fn resolve(task: TaskKind, row: &[(Param, f64)]) -> Result<RowParams, (RowParams, String)> {
    let get = |p: Param| row.iter().find(|(q, _)| *q == p).map(|(_, v)| *v);
    let s = get(Param::S).unwrap_or(0.0);
    let default_psi = if task == TaskKind::PhaseHet { std::f64::consts::PI } else { 0.0 };
    let mut p = RowParams {
        alpha: get(Param::Alpha).unwrap_or(0.0),
        s,
        psi: get(Param::Psi).unwrap_or(default_psi),
        sigma0sq: get(Param::Sigma0Sq).unwrap_or(1.0),
        mu0: get(Param::Mu0).unwrap_or(0.0),
        m_rounds: 1,
        n: 0.0,
    };
    let rounds = get(Param::MRounds).unwrap_or(1.0);
    if rounds.fract() != 0.0 || rounds < 0.0 {
        return Err((p, format!("m_rounds must be a non-negative integer, got {rounds}")));
    }
    p.m_rounds = rounds as u32;
    if s < 0.0 {
        return Err((p, format!("squeezing must be non-negative, got {s}")));
    }
    let squeeze_photons = s.sinh().powi(2);
    match task {
        TaskKind::DisplacementHet | TaskKind::DisplacementHom => p.n = squeeze_photons,
        _ => {
            if let Some(n) = get(Param::N) {
                if get(Param::Alpha).is_some() {
                    return Err((p, "give either alpha or n, not both".into()));
                }
                p.n = n;
                let a2 = n - squeeze_photons;
                if a2 < -1e-12 {
                    return Err((p, format!("infeasible: sinh²s = {squeeze_photons} exceeds n = {n}")));
                }
                p.alpha = a2.max(0.0).sqrt();
            } else {
                p.n = p.alpha * p.alpha + squeeze_photons;
            }
        }
    }
    Ok(p)
}

enum Path {
    Closed(f64, &'static str, f64),
    None,
}

fn closed_form(task: TaskKind, p: &RowParams, trunc: &SeriesTruncation) -> Result<Path, String> {
    Ok(match task {
        TaskKind::DisplacementHet => Path::Closed(het_avg_total_variance(p.sigma0sq, p.s), "closed_form", 0.0),
        TaskKind::DisplacementHom => {
            let v = 1.0 / (1.0 / p.sigma0sq + 4.0 * p.m_rounds as f64 / gamma_qq(p.s, p.psi));
            Path::Closed(v, "closed_form", 0.0)
        }
        TaskKind::PhaseHet if p.s == 0.0 => Path::Closed(ch_avg_variance(p.alpha), "closed_form", 0.0),
        TaskKind::PhaseHet if (p.psi - std::f64::consts::PI).abs() < 1e-12 && p.alpha > 0.0 => {
            let e = sh_avg_variance(p.alpha, p.s, trunc, 1e-10).map_err(|e| e.to_string())?;
            Path::Closed(e.value, "series", e.std_error)
        }
        _ => Path::None,
    })
}

fn engine(task: TaskKind, p: &RowParams, method: Method) -> Result<Estimate, String> {
    let probe = |alpha: f64| ProbeSpec::new(Complex64::new(alpha, 0.0), p.s, p.psi).map_err(|e| e.to_string());
    match task {
        TaskKind::DisplacementHet => {
            het_total_variance_engine(p.sigma0sq, p.s, Complex64::new(p.mu0, p.mu0), method).map_err(|e| e.to_string())
        }
        TaskKind::DisplacementHom => {
            if p.m_rounds == 0 {
                return Err("the engine needs at least one round".into());
            }
            // Rounds before the last leave a Gaussian prior of known variance.
            let before = 1.0 / (1.0 / p.sigma0sq + 4.0 * (p.m_rounds - 1) as f64 / gamma_qq(p.s, p.psi));
            hom_variance_engine(before, p.s, p.psi, p.mu0, method).map_err(|e| e.to_string())
        }
        TaskKind::PhaseHet => {
            let task = PhaseTask::new(probe(p.alpha)?, Measurement::heterodyne()).map_err(|e| e.to_string())?;
            phase_avg_variance_numeric(&task, method).map_err(|e| e.to_string())
        }
        TaskKind::PhaseHom => {
            let task = PhaseTask::homodyne(p.alpha, p.s, p.psi).map_err(|e| e.to_string())?;
            phase_avg_variance_numeric(&task, method).map_err(|e| e.to_string())
        }
        TaskKind::Squeeze => {
            let prior = GaussianPrior::new(p.mu0, p.sigma0sq).map_err(|e| e.to_string())?;
            let task = SqueezeTask::new(probe(p.alpha)?, SqueezePrior::Gaussian(prior)).map_err(|e| e.to_string())?;
            sq_avg_variance(&task, method).map_err(|e| e.to_string())
        }
    }
}

fn method_tag(m: &Method) -> &'static str {
    match m {
        Method::Quadrature => "quadrature",
        Method::MonteCarlo { .. } => "montecarlo",
    }
}

fn evaluate(cfg: &ExperimentConfig, index: usize, row: &[(Param, f64)]) -> ResultRecord {
    let start = Instant::now();
    let mut r = evaluate_row(cfg, index, row);
    r.wall_time = start.elapsed();
    r
}

fn evaluate_row(cfg: &ExperimentConfig, index: usize, row: &[(Param, f64)]) -> ResultRecord {
    let rec = |p: RowParams| ResultRecord {
        task: cfg.task,
        alpha: p.alpha,
        s: p.s,
        psi: p.psi,
        sigma0sq: p.sigma0sq,
        mu0: p.mu0,
        m_rounds: p.m_rounds,
        n: p.n,
        avg_variance: None,
        std_error: None,
        method: "",
        check_value: None,
        check_error: None,
        status: "ok".into(),
        wall_time: Duration::ZERO,
    };
    let p = match resolve(cfg.task, row) {
        Ok(p) => p,
        Err((p, msg)) => {
            let mut r = rec(p);
            r.status = msg;
            return r;
        }
    };
    let mut r = rec(p);
    let method = match cfg.method {
        MethodSpec::Quadrature => Method::Quadrature,
        MethodSpec::MonteCarlo { samples } => {
            Method::MonteCarlo { samples, seed: derive_seed(cfg.seed.unwrap_or(0), index as u64) }
        }
    };
    let closed = match closed_form(cfg.task, &p, &cfg.truncation) {
        Ok(c) => c,
        Err(e) => {
            r.status = format!("error: {e}");
            return r;
        }
    };
    match closed {
        Path::Closed(v, tag, err) => {
            r.avg_variance = Some(v);
            r.std_error = Some(err);
            r.method = tag;
            if cfg.force_both_paths {
                match engine(cfg.task, &p, method) {
                    Ok(e) => {
                        r.check_value = Some(e.value);
                        r.check_error = Some(e.std_error);
                        if !agrees(v, &e, matches!(method, Method::MonteCarlo { .. })) {
                            r.status = "mismatch".into();
                        }
                    }
                    Err(e) => r.status = format!("error: {e}"),
                }
            }
        }
        Path::None => {
            r.method = method_tag(&method);
            match engine(cfg.task, &p, method) {
                Ok(e) => {
                    r.avg_variance = Some(e.value);
                    r.std_error = Some(e.std_error);
                }
                Err(e) => r.status = format!("error: {e}"),
            }
        }
    }
    r
}

/// Evaluates every point of the sweep. Rows run in parallel; the output
/// follows sweep order and does not depend on scheduling.
pub fn run(cfg: &ExperimentConfig) -> Vec<ResultRecord> {
    let points = cfg.points();
    points.par_iter().enumerate().map(|(k, row)| evaluate(cfg, k, row)).collect()
}

/// Float with 17 significant digits.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(format_float).unwrap_or_default()
}

pub fn write_csv<W: Write>(records: &[ResultRecord], out: W) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.task.name().to_string(),
            format_float(r.alpha),
            format_float(r.s),
            format_float(r.psi),
            format_float(r.sigma0sq),
            format_float(r.mu0),
            r.m_rounds.to_string(),
            format_float(r.n),
            opt(r.avg_variance),
            opt(r.std_error),
            r.method.to_string(),
            opt(r.check_value),
            opt(r.check_error),
            r.status.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn to_csv_string(records: &[ResultRecord]) -> String {
    let mut buf = Vec::new();
    write_csv(records, &mut buf).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("CSV output is UTF-8")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phase_het_rows_follow_the_closed_form() {
        let cfg: ExperimentConfig = "task = phase_het\nn = 0.5, 1, 2\nr = 0\n".parse().unwrap();
        let rows = run(&cfg);
        assert_eq!(rows.len(), 3);
        for (r, n) in rows.iter().zip([0.5f64, 1.0, 2.0]) {
            let want = (1.0 - (-n).exp()) / (2.0 * n);
            assert!((r.avg_variance.unwrap() - want).abs() < 1e-14 * want);
            assert_eq!(r.method, "closed_form");
        }
    }

    #[test]
    fn repeated_homodyne_rows() {
        let cfg: ExperimentConfig = "task = displacement_hom\nm_rounds = 1:5:5\nsigma0sq = 1\nr = 0\n".parse().unwrap();
        let got: Vec<f64> = run(&cfg).iter().map(|r| r.avg_variance.unwrap()).collect();
        let want = [1.0 / 5.0, 1.0 / 9.0, 1.0 / 13.0, 1.0 / 17.0, 1.0 / 21.0];
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() <= 2.0 * f64::EPSILON * w, "{g} vs {w}");
        }
    }

    #[test]
    fn both_paths_are_cross_checked() {
        let cfg: ExperimentConfig =
            "task = displacement_hom\nm_rounds = 1, 3\nsigma0sq = 1\nr = 0.3\nforce_both_paths = true\n"
                .parse()
                .unwrap();
        for r in run(&cfg) {
            assert_eq!(r.status, "ok", "{r:?}");
            assert!(r.check_value.is_some());
        }
    }

    #[test]
    fn infeasible_rows_are_reported_and_the_run_continues() {
        let cfg: ExperimentConfig = "task = squeeze\nn = 1\ns = 0, 1\nmu0 = -0.5\n".parse().unwrap();
        let rows = run(&cfg);
        assert_eq!(rows[0].status, "ok");
        assert!(rows[1].status.starts_with("infeasible"));
        assert!(rows[1].avg_variance.is_none());
    }

    #[test]
    fn csv_layout() {
        let cfg: ExperimentConfig = "task = displacement_het\nsigma0sq = 0.25\nr = 0\n".parse().unwrap();
        let text = to_csv_string(&run(&cfg));
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER.join(","));
        let row = lines.next().unwrap();
        assert!(row.starts_with("displacement_het,0.0000000000000000e0,"));
        assert!(row.contains("3.3333333333333331e-1"));
        assert!(!text.contains('\r'));
    }
}
