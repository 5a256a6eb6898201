//! `aamsim` — command-line front end for the air-corridor connectivity and
//! localization studies.
//!
//! Subcommands: `coverage`, `optimize`, `handover`, `localize`,
//! `corridor-check`, `pattern-dump`. Every run resolves a [`RunConfig`]
//! (defaults ← `--config` file ← flags), writes CSV/JSON results under
//! `<out>/<subcommand>/`, and finishes with a `run_manifest.json` listing
//! the output digests.
//!
//! Exit codes: 0 success, 1 validation error, 2 runtime failure, 64 unknown
//! subcommand.

mod commands;
mod report;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

const EXIT_VALIDATION: i32 = 1;
const EXIT_RUNTIME: i32 = 2;
const EXIT_USAGE: i32 = 64;

#[derive(Parser)]
#[command(
    name = "aamsim",
    version,
    about = "Connectivity and localization studies for low-altitude air corridors"
)]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// TOML configuration file (strict keys; flags override it).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// RNG seed; overrides the config file (default 0 without a file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output root directory (default: $AAMSIM_OUT, then ./results).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Cap on worker threads for the parallel studies.
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Map SIR and cell association over one altitude slice.
    Coverage(CoverageArgs),
    /// Search per-site uptilt angles maximizing the worst-point SIR.
    Optimize(OptimizeArgs),
    /// Windowed handover statistics for a vehicle crossing the layout.
    Handover(HandoverArgs),
    /// TDOA position-error bounds (CRLB) over corridor slices.
    Localize(LocalizeArgs),
    /// Validate an occupancy schedule against the corridor rules.
    CorridorCheck(CorridorCheckArgs),
    /// Dump elevation gain cuts of the panel and dipole antennas.
    PatternDump(PatternDumpArgs),
}

#[derive(Args)]
struct CoverageArgs {
    /// Inter-site distance in meters.
    #[arg(long)]
    isd: Option<f64>,
    /// Number of rings around the center site (1 or 2).
    #[arg(long)]
    tiers: Option<u32>,
    /// Slice height in meters.
    #[arg(long)]
    height: Option<f64>,
    /// Grid pitch in meters (default scales with the ISD).
    #[arg(long)]
    spacing: Option<f64>,
    /// Give every site an uptilted panel at this angle (degrees).
    #[arg(long)]
    uptilt: Option<f64>,
}

#[derive(Args)]
struct OptimizeArgs {
    #[arg(long)]
    isd: Option<f64>,
    #[arg(long)]
    tiers: Option<u32>,
    #[arg(long)]
    height: Option<f64>,
    #[arg(long)]
    spacing: Option<f64>,
    /// GA population size.
    #[arg(long)]
    population: Option<usize>,
    /// GA generation count.
    #[arg(long)]
    generations: Option<usize>,
}

#[derive(Args)]
struct HandoverArgs {
    #[arg(long)]
    isd: Option<f64>,
    #[arg(long)]
    height: Option<f64>,
    /// Vehicle speed in km/h.
    #[arg(long)]
    speed: Option<f64>,
    /// Number of counting windows.
    #[arg(long)]
    windows: Option<usize>,
}

#[derive(Args)]
struct LocalizeArgs {
    /// Sensor rectangle extent along x, meters.
    #[arg(long)]
    dx: Option<f64>,
    /// Sensor rectangle extent along y, meters.
    #[arg(long)]
    dy: Option<f64>,
    /// Slice heights in meters, comma separated.
    #[arg(long, value_delimiter = ',')]
    heights: Option<Vec<f64>>,
    /// Antenna mode: siso, miso, or mimo.
    #[arg(long)]
    antenna: Option<String>,
    /// Slice grid pitch in meters.
    #[arg(long)]
    spacing: Option<f64>,
}

#[derive(Args)]
struct CorridorCheckArgs {
    /// Occupancy schedule CSV with columns t,vehicle,i,j,layer.
    #[arg(long, value_name = "CSV")]
    schedule: PathBuf,
}

#[derive(Args)]
struct PatternDumpArgs {
    /// Electrical tilt magnitude in degrees.
    #[arg(long)]
    tilt: Option<f64>,
    /// Elevation sampling step in degrees.
    #[arg(long)]
    step: Option<f64>,
}

fn main() {
    std::process::exit(run());
}

fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                ErrorKind::InvalidSubcommand => EXIT_USAGE,
                _ => EXIT_VALIDATION,
            };
            let _ = err.print();
            return code;
        }
    };

    match commands::dispatch(cli) {
        Ok(()) => 0,
        Err(commands::CliError::Invalid(err)) => {
            eprintln!("error: {err:#}");
            EXIT_VALIDATION
        }
        Err(commands::CliError::Runtime(err)) => {
            eprintln!("error: {err:#}");
            EXIT_RUNTIME
        }
    }
}
