//! `billiard`: trace characteristics, check initial data for boundary
//! compatibility, run the identity suite, and sample regularity bounds.
//!
//! Exit codes: 0 pass, 1 I/O, 2 domain error, 3 verification failure,
//! 4 configuration error.

mod commands;
mod config;
mod error;
mod output;

use clap::{Parser, Subcommand};
use config::{CommonArgs, Fault, RunConfig};
use disk_billiard::geom::Vec2;
use error::CliError;

#[derive(Parser)]
#[command(name = "billiard", version, about = "Specular billiard flow in the unit disk")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Backward trajectory of one phase point from time t to 0
    Trace {
        #[arg(long, allow_hyphen_values = true)]
        x1: f64,
        #[arg(long, allow_hyphen_values = true)]
        x2: f64,
        #[arg(long, allow_hyphen_values = true)]
        v1: f64,
        #[arg(long, allow_hyphen_values = true)]
        v2: f64,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Compatibility conditions of initial data on sampled incoming states
    Check {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Exact identities and flow-Jacobian checks
    Verify {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum, hide = true)]
        inject_fault: Option<Fault>,
    },
    /// Derivative magnitudes of the solution against the regularity envelopes
    Bounds {
        #[command(flatten)]
        common: CommonArgs,
    },
}

fn run(cli: Cli) -> Result<bool, CliError> {
    match cli.command {
        Command::Trace { x1, x2, v1, v2, common } => {
            commands::trace(&RunConfig::resolve(&common)?, Vec2::new(x1, x2), Vec2::new(v1, v2))
        }
        Command::Check { common } => commands::check(&RunConfig::resolve(&common)?),
        Command::Verify { common, inject_fault } => commands::verify(&RunConfig::resolve(&common)?, inject_fault),
        Command::Bounds { common } => commands::bounds(&RunConfig::resolve(&common)?),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 4 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let code = match run(cli) {
        Ok(true) => 0,
        Ok(false) => 3,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    std::process::exit(code);
}
