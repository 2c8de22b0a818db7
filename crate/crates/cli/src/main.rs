#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::CliError;
use crate::config::{ConfigError, ExperimentConfig};

/// Ambient-light NOMA visible light downlink experiments.
#[derive(Debug, Parser)]
#[command(name = "noma-vlc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Empirical, series, high-nu and convolution densities of the ambient noise.
    NoisePdf(Common),
    /// Per-user rates of static receivers across the SNR sweep.
    RateStatic(Common),
    /// Per-user mobility-averaged rates across the SNR sweep.
    RateMobility(Common),
    /// One QoS-constrained allocation at `alloc.snr_db`.
    Allocate(Common),
    /// Sum rate of the proposed allocator and the baselines across the SNR sweep.
    Sweep(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// Flat dotted-key TOML overriding the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Root seed for every Monte Carlo stream.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Starting point: fig1, fig2, fig3, fig6 ... fig11.
    #[arg(long)]
    preset: Option<String>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, ConfigError> {
        let mut cfg = match &self.preset {
            Some(name) => ExperimentConfig::preset(name)?,
            None => ExperimentConfig::default(),
        };
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
                path: path.display().to_string(),
                source,
            })?;
            cfg = cfg.merge_toml(&text, &path.display().to_string())?;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

type Action = fn(&ExperimentConfig) -> Result<(), CliError>;

fn run(cli: Cli) -> Result<(), CliError> {
    let (common, action): (&Common, Action) = match &cli.command {
        Command::NoisePdf(c) => (c, commands::noise_pdf),
        Command::RateStatic(c) => (c, commands::rate_static),
        Command::RateMobility(c) => (c, commands::rate_mobility),
        Command::Allocate(c) => (c, commands::allocate),
        Command::Sweep(c) => (c, commands::sweep),
    };
    let cfg = common.load()?;
    commands::prepare_output(&cfg)?;
    action(&cfg)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
