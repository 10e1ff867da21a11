//! Command-line driver: corpus generation, pipeline runs, and strategy
//! comparison, with a manifest written for every invocation.

mod commands;
mod config;
mod manifest;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use config::PipelineFlags;

#[derive(Parser)]
#[command(
    name = "tagdrift",
    about = "Adaptive streaming hashtag recommendation with trend-shift detection",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic post corpus from a TOML spec.
    Generate {
        /// Corpus spec (TOML).
        #[arg(long)]
        spec: PathBuf,
        /// Output corpus file (line-delimited records).
        #[arg(long)]
        out: PathBuf,
        /// Override the spec's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Bootstrap, stream with shift detection and adaptation, evaluate.
    Run {
        /// Input corpus (line-delimited records).
        #[arg(long)]
        input: PathBuf,
        /// Directory for event logs, recall CSVs, snapshots, manifest.
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        /// Serve the bootstrap model for the whole run (no adaptation).
        #[arg(long)]
        r#static: bool,
        #[command(flatten)]
        flags: PipelineFlags,
    },
    /// Run every adaptation strategy from one shared bootstrap snapshot.
    CompareStrategies {
        /// Input corpus (line-delimited records).
        #[arg(long)]
        input: PathBuf,
        /// Directory for the strategy table and manifest.
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        #[command(flatten)]
        flags: PipelineFlags,
    },
    /// Write the built-in corpus specs (stationary, single-drift,
    /// two-drift) as editable TOML files.
    Presets {
        #[arg(long, default_value = "corpora")]
        out_dir: PathBuf,
    },
}

/// Exit codes: 0 success, 1 runtime failure, 2 configuration error.
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Runtime(m) => m,
        }
    }
}

impl From<tagdrift_core::CoreError> for CliError {
    fn from(err: tagdrift_core::CoreError) -> Self {
        use tagdrift_core::CoreError;
        match err {
            CoreError::Config(_)
            | CoreError::Parse { .. }
            | CoreError::Range { .. }
            | CoreError::EmptyTargets => CliError::Config(err.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Runtime(err.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate { spec, out, seed } => commands::generate(&spec, &out, seed),
        Command::Run {
            input,
            out_dir,
            r#static,
            flags,
        } => commands::run(&input, &out_dir, r#static, &flags),
        Command::CompareStrategies {
            input,
            out_dir,
            flags,
        } => commands::compare_strategies(&input, &out_dir, &flags),
        Command::Presets { out_dir } => commands::presets(&out_dir),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message());
            ExitCode::from(err.exit_code())
        }
    }
}
