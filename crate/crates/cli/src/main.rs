mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use visir::Error;

use config::{Common, RunConfig};

#[derive(Parser)]
#[command(name = "visir", version, about = "Super-resolution of gridded fields with sine-activated transformers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tile sources into low/high-resolution pairs and write a manifest
    BuildData(Common),
    /// Train on the training split; writes checkpoint.vsck and loss.csv
    Train(Common),
    /// Score a checkpoint on a split; writes metrics.csv
    Eval(Common),
    /// Train and score one model per (hidden_layers, omega0) cell; writes sweep.csv
    Sweep(Common),
    /// Upscale one image; with --hr also writes error and comparison images
    Reconstruct(Common),
}

#[derive(Debug)]
pub enum Failure {
    Lib(Error),
    ConfigFile(PathBuf, String),
    NoCellSucceeded,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::ConfigFile(..) => 2,
            Failure::NoCellSucceeded => 4,
            Failure::Lib(e) => match e {
                Error::Config { .. }
                | Error::Shape { .. }
                | Error::Tiling(_)
                | Error::Empty(_)
                | Error::DegenerateRange(_) => 2,
                Error::Io { .. } | Error::Image(_) | Error::Json(_) | Error::Format(_) | Error::Truncated { .. } => 3,
                Error::Divergence { .. } | Error::NonFinite(_) => 4,
                Error::ConfigMismatch(_) => 5,
                Error::Contract(_) => 1,
            },
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Lib(e) => write!(f, "{e}"),
            Failure::ConfigFile(path, why) => write!(f, "invalid config file {}: {why}", path.display()),
            Failure::NoCellSucceeded => write!(f, "every sweep cell failed"),
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let (common, cmd): (Common, fn(&RunConfig) -> Result<(), Failure>) = match cli.command {
        Command::BuildData(c) => (c, commands::build_data),
        Command::Train(c) => (c, commands::train_cmd),
        Command::Eval(c) => (c, commands::eval_cmd),
        Command::Sweep(c) => (c, commands::sweep_cmd),
        Command::Reconstruct(c) => (c, commands::reconstruct_cmd),
    };
    cmd(&RunConfig::resolve(common)?)
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
