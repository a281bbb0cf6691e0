//! Sweep configuration: flat `key = value` lines. Values are a number, a
//! comma-separated list, or a range `start:stop:count` with `count`
//! equally spaced points including both ends. `#` starts a comment.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

use crate::phase_est::SeriesTruncation;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("line {line}: {message}")]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

fn err<T>(line: usize, message: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError { line, message: message.into() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TaskKind {
    DisplacementHet,
    DisplacementHom,
    PhaseHet,
    PhaseHom,
    Squeeze,
}

impl TaskKind {
    pub const ALL: [TaskKind; 5] = [
        TaskKind::DisplacementHet,
        TaskKind::DisplacementHom,
        TaskKind::PhaseHet,
        TaskKind::PhaseHom,
        TaskKind::Squeeze,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            TaskKind::DisplacementHet => "displacement_het",
            TaskKind::DisplacementHom => "displacement_hom",
            TaskKind::PhaseHet => "phase_het",
            TaskKind::PhaseHom => "phase_hom",
            TaskKind::Squeeze => "squeeze",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        TaskKind::ALL
            .into_iter()
            .find(|t| t.name() == key || t.name().replace('_', "") == key)
            .ok_or_else(|| format!("unknown task `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodSpec {
    Quadrature,
    MonteCarlo { samples: usize },
}

/// Swept parameters. Every task reads the subset it needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Param {
    /// Probe displacement.
    Alpha,
    /// Mean photon number; fixes `alpha` from `s` when given.
    N,
    /// Probe squeezing strength.
    S,
    /// Probe squeezing angle.
    Psi,
    Sigma0Sq,
    /// Prior mean (displacement coordinate or squeezing strength).
    Mu0,
    MRounds,
}

impl Param {
    pub fn name(&self) -> &'static str {
        match self {
            Param::Alpha => "alpha",
            Param::N => "n",
            Param::S => "s",
            Param::Psi => "psi",
            Param::Sigma0Sq => "sigma0sq",
            Param::Mu0 => "mu0",
            Param::MRounds => "m_rounds",
        }
    }

    fn parse(key: &str) -> Option<Param> {
        Some(match key {
            "alpha" => Param::Alpha,
            "n" => Param::N,
            "s" | "r" => Param::S,
            "psi" | "phi" => Param::Psi,
            "sigma0sq" => Param::Sigma0Sq,
            "mu0" | "r0" => Param::Mu0,
            "m_rounds" => Param::MRounds,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub task: TaskKind,
    /// Parameter axes in declaration order; the sweep is their Cartesian
    /// product with the last axis varying fastest.
    pub sweep: Vec<(Param, Vec<f64>)>,
    pub method: MethodSpec,
    pub seed: Option<u64>,
    pub truncation: SeriesTruncation,
    pub output: Option<PathBuf>,
    pub force_both_paths: bool,
}

impl ExperimentConfig {
    pub fn new(task: TaskKind) -> Self {
        ExperimentConfig {
            task,
            sweep: Vec::new(),
            method: MethodSpec::Quadrature,
            seed: None,
            truncation: SeriesTruncation::default(),
            output: None,
            force_both_paths: false,
        }
    }

    pub fn with(mut self, p: Param, values: &[f64]) -> Self {
        self.set(p, values.to_vec());
        self
    }

    pub fn set(&mut self, p: Param, values: Vec<f64>) {
        match self.sweep.iter_mut().find(|(q, _)| *q == p) {
            Some(slot) => slot.1 = values,
            None => self.sweep.push((p, values)),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.sweep.is_empty() || self.sweep.iter().any(|(_, v)| v.is_empty()) {
            return Err("sweep is empty".into());
        }
        if let MethodSpec::MonteCarlo { samples } = self.method {
            if self.seed.is_none() {
                return Err("Monte Carlo runs need a seed".into());
            }
            if samples < 2 {
                return Err("Monte Carlo runs need at least two samples".into());
            }
        }
        Ok(())
    }

    /// Parameter points of the sweep in output order.
    pub fn points(&self) -> Vec<Vec<(Param, f64)>> {
        let mut out: Vec<Vec<(Param, f64)>> = vec![Vec::new()];
        for (p, values) in &self.sweep {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    values.iter().map(move |v| {
                        let mut row = prefix.clone();
                        row.push((*p, *v));
                        row
                    })
                })
                .collect();
        }
        out
    }
}

fn parse_number<T: FromStr>(line: usize, s: &str) -> Result<T, ConfigError> {
    s.trim().parse().or_else(|_| err(line, format!("cannot parse `{}`", s.trim())))
}

fn parse_values(line: usize, s: &str) -> Result<Vec<f64>, ConfigError> {
    let parts: Vec<&str> = s.split(':').collect();
    match parts.len() {
        1 => s.split(',').map(|v| parse_number(line, v)).collect(),
        3 => {
            let start: f64 = parse_number(line, parts[0])?;
            let stop: f64 = parse_number(line, parts[1])?;
            let count: usize = parse_number(line, parts[2])?;
            match count {
                0 => err(line, "range count must be positive"),
                1 if start != stop => err(line, "a one-point range needs start = stop"),
                1 => Ok(vec![start]),
                _ => Ok((0..count).map(|k| start + (stop - start) * k as f64 / (count - 1) as f64).collect()),
            }
        }
        _ => err(line, format!("malformed range `{s}`, expected start:stop:count")),
    }
}

fn parse_bool(line: usize, s: &str) -> Result<bool, ConfigError> {
    match s.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => err(line, format!("expected a boolean, got `{other}`")),
    }
}

impl FromStr for ExperimentConfig {
    type Err = ConfigError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut task = None;
        let mut sweep: Vec<(Param, Vec<f64>, usize)> = Vec::new();
        let mut method = None;
        let mut samples = None;
        let mut seed = None;
        let mut truncation = SeriesTruncation::default();
        let mut output = None;
        let mut force_both_paths = false;
        let mut last_line = 0;
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            last_line = line;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let Some((key, value)) = body.split_once('=') else {
                return err(line, format!("expected `key = value`, got `{body}`"));
            };
            let key = key.trim().to_ascii_lowercase();
            let value = value.trim();
            match key.as_str() {
                "task" => task = Some(value.parse::<TaskKind>().or_else(|e| err(line, e))?),
                "method" => {
                    method = Some(match value.to_ascii_lowercase().as_str() {
                        "quadrature" => None,
                        "montecarlo" | "monte_carlo" | "mc" => Some(()),
                        other => return err(line, format!("unknown method `{other}`")),
                    })
                }
                "samples" => samples = Some(parse_number::<usize>(line, value)?),
                "seed" => seed = Some(parse_number::<u64>(line, value)?),
                "truncation" => truncation.terms = Some(parse_number::<usize>(line, value)?.max(1)),
                "tail_tol" => truncation.tail_tol = parse_number(line, value)?,
                "output" => output = Some(PathBuf::from(value)),
                "force_both_paths" => force_both_paths = parse_bool(line, value)?,
                other => {
                    let Some(p) = Param::parse(other) else {
                        return err(line, format!("unknown key `{other}`"));
                    };
                    if sweep.iter().any(|(q, _, _)| *q == p) {
                        return err(line, format!("`{other}` given twice"));
                    }
                    sweep.push((p, parse_values(line, value)?, line));
                }
            }
        }
        let Some(task) = task else {
            return err(last_line.max(1), "missing `task`");
        };
        let method = match method.flatten() {
            None => MethodSpec::Quadrature,
            Some(()) => MethodSpec::MonteCarlo { samples: samples.unwrap_or(100_000) },
        };
        let cfg = ExperimentConfig {
            task,
            sweep: sweep.into_iter().map(|(p, v, _)| (p, v)).collect(),
            method,
            seed,
            truncation,
            output,
            force_both_paths,
        };
        cfg.validate().or_else(|e| err(last_line.max(1), e))?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_sweep() {
        let text = "# phase sweep\ntask = phase_het\nn = 0.5, 1, 2\nr = 0\nmethod = quadrature\n";
        let cfg: ExperimentConfig = text.parse().unwrap();
        assert_eq!(cfg.task, TaskKind::PhaseHet);
        assert_eq!(cfg.sweep, vec![(Param::N, vec![0.5, 1.0, 2.0]), (Param::S, vec![0.0])]);
        assert_eq!(cfg.points().len(), 3);
    }

    #[test]
    fn ranges_include_both_ends() {
        let cfg: ExperimentConfig = "task = displacement_hom\nm_rounds = 1:5:5\nsigma0sq = 1".parse().unwrap();
        assert_eq!(cfg.sweep[0].1, vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        let pts = cfg.points();
        assert_eq!(pts[4], vec![(Param::MRounds, 5.0), (Param::Sigma0Sq, 1.0)]);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = "task = squeeze\n\nalpha = 1:2\n".parse::<ExperimentConfig>().unwrap_err();
        assert_eq!(e.line, 3);
        let e = "task = squeeze\nbogus = 1\n".parse::<ExperimentConfig>().unwrap_err();
        assert_eq!(e.line, 2);
        let e = "alpha = 1\n".parse::<ExperimentConfig>().unwrap_err();
        assert!(e.message.contains("task"));
        let e = "task = squeeze\nalpha = 1\nmethod = mc\n".parse::<ExperimentConfig>().unwrap_err();
        assert!(e.message.contains("seed"));
        let e = "task = squeeze\nalpha = 1\nalpha = 2\n".parse::<ExperimentConfig>().unwrap_err();
        assert_eq!(e.line, 3);
        assert!("task = squeeze\n".parse::<ExperimentConfig>().is_err());
    }
}
