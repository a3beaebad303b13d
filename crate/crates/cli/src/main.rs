use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hallq::HallError;

mod config;
mod experiments;
mod record;

use config::{Experiment, ExperimentConfig};

/// Failure classes mapped onto the process exit code.
#[derive(Debug)]
pub enum Failure {
    /// Unreadable or invalid configuration, or a model that fails validation.
    Config(String),
    /// Gap collapse, degeneracy or non-convergence.
    Numerical(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "validation error: {m}"),
            Failure::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<HallError> for Failure {
    fn from(e: HallError) -> Self {
        match e {
            HallError::Numerical(m) => Failure::Numerical(m),
            other => Failure::Config(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Config(format!("io error: {e}"))
    }
}

#[derive(Parser, Debug)]
#[command(name = "hallq", version, about = "Hall conductance quantization lab")]
struct Cli {
    /// Configuration file (TOML); embedded defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for intra-experiment parallelism.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// `key=value` override of a config entry, e.g. `numeric.grid_n=6`.
    #[arg(long = "override", global = true)]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check the model against the locality, range and charge assumptions.
    Validate,
    /// Ground energy and gap along a θx scan.
    Spectrum,
    /// Kubo curvature and σ̃ at zero flux.
    Conductance,
    /// Plaquette Chern number on the flux torus.
    Chern,
    /// Small-loop phases φ(r)/r² against the Kubo curvature.
    LoopPhase,
    /// Stokes decomposition of the big loop into N² small loops.
    Stokes,
    /// All applicable lemma checks, run concurrently.
    LemmaChecks,
    /// σ̃, the three bound terms and the distance to the nearest integer.
    Quantize,
    /// Summary table of the records in a results directory.
    Report {
        /// Directory holding result records; `--out` or `output.dir` when omitted.
        dir: Option<PathBuf>,
    },
    /// Print the embedded default configuration.
    Defaults,
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Failure::Config(format!("worker pool: {e}")))?;
    }
    let experiment = match &cli.command {
        Command::Defaults => {
            print!("{}", config::DEFAULTS);
            return Ok(());
        }
        Command::Report { dir } => {
            let dir = match (dir, &cli.out) {
                (Some(d), _) | (None, Some(d)) => d.clone(),
                (None, None) => ExperimentConfig::load(cli.config.as_deref(), &cli.overrides)?.output.dir,
            };
            let summary = record::report(&dir)?;
            print!("{summary}");
            return Ok(());
        }
        Command::Validate => Experiment::Validate,
        Command::Spectrum => Experiment::Spectrum,
        Command::Conductance => Experiment::Conductance,
        Command::Chern => Experiment::Chern,
        Command::LoopPhase => Experiment::LoopPhase,
        Command::Stokes => Experiment::Stokes,
        Command::LemmaChecks => Experiment::LemmaChecks,
        Command::Quantize => Experiment::Quantize,
    };
    let mut overrides = cli.overrides.clone();
    overrides.push(format!("experiment=\"{}\"", experiment.as_str()));
    if let Some(out) = &cli.out {
        overrides.push(format!("output.dir={}", toml::Value::String(out.display().to_string())));
    }
    let cfg = ExperimentConfig::load(cli.config.as_deref(), &overrides)?;
    let outcome = experiments::run_experiment(&cfg)?;
    println!("{}", outcome.summary_line());
    if outcome.failed_validation() {
        return Err(Failure::Config("model failed validation".into()));
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hallq: {e}");
            ExitCode::from(e.code())
        }
    }
}
