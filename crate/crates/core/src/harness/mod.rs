//! Command-line driver: configuration, experiment orchestration and data export.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 numerical or I/O failure.

pub mod config;
pub mod output;

mod commands;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::Error;
pub use config::ExperimentConfig;
use config::GammaMethod;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] Error),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Core(Error::Domain(_)) => 2,
            HarnessError::Io(_) | HarnessError::Core(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "wgloc", version, about = "Localization in randomly perturbed periodic waveguides")]
pub struct Cli {
    /// TOML experiment configuration.
    #[arg(long, global = true, env = "WGLOC_CONFIG")]
    pub config: Option<PathBuf>,
    /// Master seed; generated and recorded when absent.
    #[arg(long, global = true, env = "WGLOC_SEED")]
    pub seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, env = "WGLOC_THREADS")]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, env = "WGLOC_OUT")]
    pub out: Option<PathBuf>,
    /// Grid points for frequency scans.
    #[arg(long, global = true, env = "WGLOC_RESOLUTION")]
    pub resolution: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Discriminant table and band structure.
    Scan(ScanArgs),
    /// Band and gap tables only.
    Bands(ScanArgs),
    /// Lyapunov exponents over the (ν, σ) grid.
    Lyapunov(RunArgs),
    /// Transmission of single realizations.
    Transmission(TransmissionArgs),
    /// White-noise model: quadrature, SDE and density tables.
    Whitenoise(WhiteNoiseArgs),
    /// Log-log fits of a (σ, γ) table.
    Fit(FitArgs),
    /// Regenerate the data behind one figure and check it.
    Reproduce(ReproduceArgs),
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Layers as `n:l` pairs, e.g. `1:1,2.5:0.1`.
    #[arg(long, value_delimiter = ',', value_parser = parse_layer)]
    pub layers: Option<Vec<(f64, f64)>>,
}

fn parse_layer(s: &str) -> Result<(f64, f64), String> {
    let (n, l) = s.split_once(':').ok_or_else(|| format!("expected n:l, got {s}"))?;
    Ok((n.trim().parse().map_err(|e| format!("{e}"))?, l.trim().parse().map_err(|e| format!("{e}"))?))
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub nu_min: Option<f64>,
    #[arg(long)]
    pub nu_max: Option<f64>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_delimiter = ',')]
    pub nu: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub sigma: Option<Vec<f64>>,
    #[arg(long)]
    pub n_periods: Option<usize>,
    #[arg(long)]
    pub realizations: Option<usize>,
    #[arg(long, value_enum)]
    pub method: Option<GammaMethod>,
}

#[derive(Debug, Args)]
pub struct TransmissionArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Also write `−ln|t_k|` for every k.
    #[arg(long)]
    pub trajectory: bool,
}

#[derive(Debug, Args)]
pub struct WhiteNoiseArgs {
    #[arg(long, value_delimiter = ',')]
    pub lambda: Option<Vec<f64>>,
    #[arg(long)]
    pub realizations: Option<usize>,
    #[arg(long)]
    pub length: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub weighted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Figure {
    Fig1,
    Fig3,
    Fig4,
}

#[derive(Debug, Args)]
pub struct ReproduceArgs {
    #[arg(value_enum)]
    pub figure: Figure,
    #[arg(long)]
    pub realizations: Option<usize>,
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    let command: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match run(cli, command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Resolves the configuration and runs one command.
pub fn run(cli: Cli, command: Vec<String>) -> Result<(), HarnessError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    if cli.out.is_some() {
        cfg.out = cli.out.clone();
    }
    if cli.resolution.is_some() {
        cfg.resolution = cli.resolution;
    }
    let seed_generated = cfg.seed.is_none();
    let seed = cfg.seed.unwrap_or_else(generate_seed);
    cfg.seed = Some(seed);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads.unwrap_or(0))
        .build()
        .map_err(|e| HarnessError::Config(format!("threads: {e}")))?;
    pool.install(|| commands::dispatch(cli.command, cfg, seed, seed_generated, command))
}

fn generate_seed() -> u64 {
    let nanos = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_nanos() as u64)
        .unwrap_or(0);
    crate::rng::derive_seed(nanos, std::process::id() as u64)
}
