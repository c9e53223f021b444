use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod manifest;

/// Exit status 1: the run itself failed.
const EXIT_RUNTIME: u8 = 1;
/// Exit status 2: inputs or configuration were rejected.
const EXIT_VALIDATION: u8 = 2;

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Runtime(String),
}

impl CliError {
    pub fn validation(e: impl std::fmt::Display) -> Self {
        CliError::Validation(e.to_string())
    }

    pub fn runtime(e: impl std::fmt::Display) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(name = "innov", version, about = "Innovations autoencoders and generative probabilistic forecasting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug, Clone)]
pub struct Common {
    /// TOML config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory; created if missing.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic series from a process spec.
    Synth {
        #[command(flatten)]
        common: Common,
        /// Process spec (TOML); `--config` is accepted as an alias.
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Train an autoencoder on a CSV series.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        steps_per_epoch: Option<usize>,
        #[arg(long)]
        train_len: Option<usize>,
    },
    /// Sample a forecast ensemble from a trained checkpoint.
    Forecast {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long)]
        ensemble: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        quantiles: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        alpha: Option<Vec<f64>>,
        /// Index of the last history sample; defaults to the end of the data.
        #[arg(long)]
        at: Option<usize>,
        /// Include raw samples in the JSON output.
        #[arg(long)]
        samples: bool,
    },
    /// Score forecasts: from a checkpoint, an analytic oracle, or a forecast directory.
    Evaluate(commands::EvaluateArgs),
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth { common, spec } => commands::synth(&common, spec),
        Command::Train {
            common,
            data,
            epochs,
            steps_per_epoch,
            train_len,
        } => commands::train(&common, &data, epochs, steps_per_epoch, train_len),
        Command::Forecast {
            common,
            checkpoint,
            data,
            horizon,
            ensemble,
            quantiles,
            alpha,
            at,
            samples,
        } => commands::forecast(
            &common,
            &checkpoint,
            &data,
            commands::ForecastOverrides {
                horizon,
                ensemble,
                quantiles,
                alpha,
                at,
                samples,
            },
        ),
        Command::Evaluate(args) => commands::evaluate(&args),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_VALIDATION)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
