//! Command-line experiment runner for the `heatsing` library.

pub mod config;
pub mod error;
pub mod experiments;

use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{Experiment, ExperimentConfig, RawConfig};
pub use error::{CliError, CliResult};
pub use experiments::{run, RunOutcome};

#[derive(Debug, Parser)]
#[command(name = "heatsing", version, about = "Mass-scaling experiments for heat equations with a moving point source")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ball-mass curve and exit/occupation table of one path.
    MassCurve(CommonArgs),
    /// Fit the mass exponent over an ensemble.
    Fit(CommonArgs),
    /// Check the two-sided mass envelopes.
    VerifyBounds(CommonArgs),
    /// Ensemble moments of the occupation time.
    Moments(CommonArgs),
    /// Autocovariance check of the fGn sampler.
    FbmCheck(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Base seed, overriding the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory, overriding the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

impl Command {
    fn split(&self) -> (Experiment, &CommonArgs) {
        match self {
            Self::MassCurve(a) => (Experiment::MassCurve, a),
            Self::Fit(a) => (Experiment::Fit, a),
            Self::VerifyBounds(a) => (Experiment::VerifyBounds, a),
            Self::Moments(a) => (Experiment::Moments, a),
            Self::FbmCheck(a) => (Experiment::FbmCheck, a),
        }
    }
}

/// Resolves the configuration (file, then environment, then flags) and runs it.
pub fn execute<I>(cli: &Cli, env: I) -> CliResult<RunOutcome>
where
    I: IntoIterator<Item = (String, String)>,
{
    let (experiment, args) = cli.command.split();
    let mut raw = match &args.config {
        Some(path) => RawConfig::parse(&fs::read_to_string(path)?)?,
        None => RawConfig::default(),
    };
    raw.apply_env(env);
    if let Some(seed) = args.seed {
        raw.set("seed", &seed.to_string());
    }
    let mut cfg = ExperimentConfig::from_raw(experiment, raw)?;
    if let Some(out) = &args.out {
        cfg.out_dir = out.clone();
    }
    run(&cfg, args.threads)
}
