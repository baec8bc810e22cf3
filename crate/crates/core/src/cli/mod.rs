//! Command-line front end: `prepare`, `preprocess`, `train`, `evaluate`,
//! `cascade` and `report`.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 runtime
//! failure.

pub mod artifacts;
pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub use config::ExperimentConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Runtime(_) => 4,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "retina-pipeline", version, about = "Diabetic retinopathy grading pipeline")]
pub struct Cli {
    /// Worker threads for image loading; 1 gives fully sequential runs.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Override a config key, e.g. `--set trainer.max_epochs=5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split the manifest and write the balanced training list.
    Prepare(Common),
    /// Fill the preprocessed-image cache.
    Preprocess(Common),
    /// Train and store the best checkpoint.
    Train {
        #[command(flatten)]
        common: Common,
        /// Start from this checkpoint sidecar instead of fresh weights.
        #[arg(long)]
        resume_from: Option<PathBuf>,
    },
    /// Score the test split and write the report.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Checkpoint sidecar; defaults to `<output_dir>/checkpoint/best.json`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Evaluate a tree of binary models on the five-grade test split.
    Cascade {
        #[command(flatten)]
        common: Common,
        /// Cascade description file.
        #[arg(long)]
        cascade: PathBuf,
    },
    /// Print the metrics table of the last evaluation.
    Report {
        #[command(flatten)]
        common: Common,
        /// Show published binary ResNet50 + Adam figures next to ours.
        #[arg(long)]
        reference: bool,
    },
}

fn load_config(common: &Common) -> Result<ExperimentConfig, CliError> {
    ExperimentConfig::load(&common.config, &common.set)
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(CliError::Config("--jobs must be at least 1".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| CliError::Runtime(e.to_string()))?;
    pool.install(|| match cli.command {
        Command::Prepare(c) => commands::prepare(&load_config(&c)?).map(drop),
        Command::Preprocess(c) => commands::preprocess(&load_config(&c)?).map(drop),
        Command::Train { common, resume_from } => {
            let mut cfg = load_config(&common)?;
            if resume_from.is_some() {
                cfg.trainer.resume_from = resume_from;
            }
            commands::train(&cfg).map(drop)
        }
        Command::Evaluate { common, checkpoint } => {
            commands::evaluate(&load_config(&common)?, checkpoint.as_deref()).map(drop)
        }
        Command::Cascade { common, cascade } => commands::cascade(&load_config(&common)?, &cascade).map(drop),
        Command::Report { common, reference } => {
            print!("{}", commands::report(&load_config(&common)?, reference)?);
            Ok(())
        }
    })
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
