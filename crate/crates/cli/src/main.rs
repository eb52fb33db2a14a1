mod commands;
mod config;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

/// Sample conditioned linear SDE paths and check them against oracles.
#[derive(Debug, Parser)]
#[command(name = "pathspde", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Euler-Maruyama path of the model, or of the signal/observation pair.
    Simulate(Common),
    /// Run the configured sampler and write samples and statistics.
    Sample(Common),
    /// Kalman-Bucy sweep and posterior-mean BVP on an observation path.
    Smooth {
        #[command(flatten)]
        common: Common,
        /// Observation path file; overrides `conditioning.y_file`.
        #[arg(long)]
        y: Option<PathBuf>,
    },
    /// Run the verification suite and write a JSON report.
    Verify(Common),
}

pub const EXIT_VALIDATION: u8 = 1;
pub const EXIT_NUMERICAL: u8 = 2;
pub const EXIT_VERIFY: u8 = 3;

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Simulate(c) => commands::simulate(&commands::load(&c.config, c.seed)?, &c.out),
        Command::Sample(c) => commands::sample(&commands::load(&c.config, c.seed)?, &c.out),
        Command::Smooth { common: c, y } => commands::smooth(&commands::load(&c.config, c.seed)?, y.as_deref(), &c.out),
        Command::Verify(c) => {
            let cfg = match &c.config {
                Some(_) => Some(commands::load(&c.config, c.seed)?),
                None => None,
            };
            verify::verify(cfg.as_ref(), c.seed, &c.out)
        }
    }
    .map(|()| ExitCode::SUCCESS)
    .or_else(|e| match e.downcast_ref::<verify::SuiteFailed>() {
        Some(_) => Ok(ExitCode::from(EXIT_VERIFY)),
        None => Err(e),
    })
}

fn exit_code(e: &anyhow::Error) -> u8 {
    let numerical = e
        .chain()
        .filter_map(|c| c.downcast_ref::<pathspde::Error>())
        .any(pathspde::Error::is_numerical);
    if numerical {
        EXIT_NUMERICAL
    } else {
        EXIT_VALIDATION
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
