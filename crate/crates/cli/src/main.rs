use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod calibrate;
mod derive;
mod error;
mod gate;
mod simulate;
mod summary;
mod sweep;

use error::CliError;

/// Actin filament RLC simulator.
#[derive(Debug, Parser)]
#[command(name = "actin", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Derive per-monomer circuit parameters from physical inputs.
    DeriveParams(derive::DeriveArgs),
    /// Run one configuration and write trace.csv, raster.pbm and summary.json.
    Simulate {
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Evaluate a library gate for given input bits or over its truth table.
    Gate(gate::GateArgs),
    /// Run a configuration over a grid of parameter values.
    Sweep(sweep::SweepArgs),
    /// Recalibrate a gate's threshold and/or output cells.
    Calibrate(CalibrateArgs),
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Library gate name.
    pub name: Option<String>,
    /// Gate spec file to calibrate instead of a library gate.
    #[arg(long, conflicts_with = "name")]
    pub spec: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Free::Both)]
    pub free: Free,
    /// Write the calibrated spec here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Free {
    Threshold,
    OutputCells,
    Both,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::DeriveParams(args) => derive::run(&args),
        Command::Simulate { config, out } => simulate::run(&config, &out),
        Command::Gate(args) => gate::run(&args),
        Command::Sweep(args) => sweep::run(&args),
        Command::Calibrate(args) => calibrate::run(&args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Usage errors are configuration errors; exit 2 is reserved for
            // numerical failures.
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
