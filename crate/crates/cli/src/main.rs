use std::fs::File;
use std::io::{self, BufWriter};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use gaussprobe::harness::verify::{run_criterion, Report, Suite, VerifyOptions, CRITERIA};
use gaussprobe::harness::{run, write_csv, ExperimentConfig, MethodSpec};
use gaussprobe::phase_est::SeriesTruncation;

#[derive(Parser)]
#[command(
    name = "gaussprobe",
    version,
    about = "Bayesian estimation with Gaussian probes: sweeps and acceptance checks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Quadrature,
    Montecarlo,
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Full,
    Fast,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the sweep in a config file and write CSV.
    Run {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
        /// Monte Carlo samples per row.
        #[arg(long)]
        samples: Option<usize>,
        /// Output file; stdout when absent and the config names none.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Evaluate the engine as well where a closed form exists.
        #[arg(long)]
        force_both_paths: bool,
        /// Fixed number of Bessel series terms.
        #[arg(long)]
        truncation: Option<usize>,
    },
    /// Run the acceptance suite.
    Verify {
        #[arg(long, value_enum, default_value = "full")]
        suite: SuiteArg,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        truncation: Option<usize>,
        /// Run only these criteria.
        #[arg(long, value_delimiter = ',')]
        only: Vec<u8>,
    },
}

fn run_command(
    config: PathBuf,
    seed: Option<u64>,
    method: Option<MethodArg>,
    samples: Option<usize>,
    out: Option<PathBuf>,
    force_both_paths: bool,
    truncation: Option<usize>,
) -> ExitCode {
    let text = match std::fs::read_to_string(&config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", config.display());
            return ExitCode::from(1);
        }
    };
    let mut cfg: ExperimentConfig = match text.parse() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", config.display());
            return ExitCode::from(1);
        }
    };
    if seed.is_some() {
        cfg.seed = seed;
    }
    let default_samples = match cfg.method {
        MethodSpec::MonteCarlo { samples } => samples,
        MethodSpec::Quadrature => 100_000,
    };
    match method {
        Some(MethodArg::Quadrature) => cfg.method = MethodSpec::Quadrature,
        Some(MethodArg::Montecarlo) => cfg.method = MethodSpec::MonteCarlo { samples: default_samples },
        None => {}
    }
    if let (Some(n), MethodSpec::MonteCarlo { samples }) = (samples, &mut cfg.method) {
        *samples = n;
    }
    cfg.force_both_paths |= force_both_paths;
    if let Some(n) = truncation {
        cfg.truncation = SeriesTruncation { terms: Some(n.max(1)), ..cfg.truncation };
    }
    if let Err(e) = cfg.validate() {
        eprintln!("error: {}: {e}", config.display());
        return ExitCode::from(1);
    }

    let records = run(&cfg);
    let bad = records.iter().filter(|r| r.status != "ok").count();
    let written = match out.or_else(|| cfg.output.clone()) {
        Some(path) => match File::create(&path) {
            Ok(f) => write_csv(&records, BufWriter::new(f)),
            Err(e) => {
                eprintln!("error: cannot create {}: {e}", path.display());
                return ExitCode::from(1);
            }
        },
        None => write_csv(&records, io::stdout().lock()),
    };
    if let Err(e) = written {
        eprintln!("error: writing CSV: {e}");
        return ExitCode::from(1);
    }
    if bad > 0 {
        eprintln!("{bad} of {} rows did not evaluate cleanly; see the status column", records.len());
    }
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run { config, seed, method, samples, out, force_both_paths, truncation } => {
            run_command(config, seed, method, samples, out, force_both_paths, truncation)
        }
        Command::Verify { suite, seed, samples, truncation, only } => {
            let mut opts = VerifyOptions::new(match suite {
                SuiteArg::Full => Suite::Full,
                SuiteArg::Fast => Suite::Fast,
            });
            if let Some(s) = seed {
                opts.seed = s;
            }
            opts.samples = samples;
            if let Some(n) = truncation {
                opts.truncation = SeriesTruncation::fixed(n);
            }
            if let Some(id) = only.iter().find(|id| !CRITERIA.iter().any(|c| c.0 == **id)) {
                eprintln!("error: no criterion {id}");
                return ExitCode::from(1);
            }
            let mut criteria = Vec::new();
            for &(id, _, _) in CRITERIA.iter().filter(|c| only.is_empty() || only.contains(&c.0)) {
                let r = run_criterion(id, &opts);
                print!("{r}");
                criteria.push(r);
            }
            let report = Report { criteria };
            let passed = report.criteria.iter().filter(|c| c.passed()).count();
            println!("{passed}/{} criteria passed", report.criteria.len());
            if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }
    }
}
