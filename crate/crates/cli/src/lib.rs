//! Command-line front end: benchmark, simulation, tuning and relevance runs
//! driven by a TOML experiment file.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::ExperimentConfig;
pub use error::{CliError, ExitCode};
pub use output::Outputs;

#[derive(Debug, Parser)]
#[command(name = "survcobra", version, about = "Proximity-ensemble survival experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Experiment file (TOML); every setting has a default when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output directory; overrides the config file.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Outer cross-validation of every base learner and the ensemble.
    Bench,
    /// Relevance study on the synthetic Weibull design.
    Simulate,
    /// Random search over the ensemble parameters.
    Tune,
    /// Relevance study on the configured data.
    Relevance,
}

pub const DEFAULT_OUT: &str = "survcobra-out";

fn effective_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::from_toml("[search]\n")?,
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = Some(o.clone());
    }
    Ok(cfg)
}

/// Runs one command and returns its files without writing them.
pub fn execute(command: Command, cfg: &ExperimentConfig) -> Result<Outputs, CliError> {
    match command {
        Command::Bench => commands::bench_outputs(cfg, &commands::run_bench(cfg)?),
        Command::Tune => {
            let (search, objective) = commands::run_tune(cfg)?;
            commands::tune_outputs(cfg, &search, objective)
        }
        Command::Simulate => commands::relevance_outputs(cfg, &commands::run_relevance(cfg, true)?, "simulate"),
        Command::Relevance => commands::relevance_outputs(cfg, &commands::run_relevance(cfg, false)?, "relevance"),
    }
}

/// Full pipeline for parsed arguments: load, compute, then write.
pub fn run(cli: &Cli) -> Result<PathBuf, CliError> {
    let cfg = effective_config(cli)?;
    cfg.validate()?;
    let dir = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(CliError::Config("--jobs must be at least 1".into()));
        }
        pool = pool.num_threads(j);
    }
    let pool = pool.build().map_err(|e| CliError::Internal(e.to_string()))?;
    let outputs = pool.install(|| execute(cli.command, &cfg))?;
    outputs.write_all(&dir)?;
    Ok(dir)
}

/// Parses `args`, runs, reports errors on stderr and returns the exit status.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { ExitCode::UserError } else { ExitCode::Success };
            let _ = e.print();
            return code as i32;
        }
    };
    match run(&cli) {
        Ok(dir) => {
            log::info!("wrote {}", dir.display());
            ExitCode::Success as i32
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code() as i32
        }
    }
}
