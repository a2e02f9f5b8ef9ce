//! `qpburst`: batch front end for simulation and analysis.
//!
//! Exit codes: 0 success, 2 missing input, 3 validation, 4 numerical failure.

mod analysis;
mod model;
mod plotting;
mod settings;
mod shots;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};
use qpburst::{Error, ErrorClass};

#[derive(Parser, Debug)]
#[command(
    name = "qpburst",
    version,
    about = "Quasiparticle burst simulation and analysis"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// TOML config for the subcommand.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; required by stochastic commands unless set in the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Dotted-key override, e.g. `--set inversion.chi2_cut=9.21`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum ShotMode {
    Clique,
    Am,
    Ramsey,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate the quasiparticle model for every qubit of an array config.
    SimulateModel,
    /// Generate shot records or a heralded stream from rate/frequency inputs.
    SimulateShots {
        #[arg(long, value_enum, default_value = "clique")]
        mode: ShotMode,
        /// Rate CSVs, one per qubit (clique mode).
        inputs: Vec<PathBuf>,
    },
    /// Matched-filter burst detection on a heralded stream.
    Detect { input: PathBuf },
    /// Rate inversion from sequence records (A, B, D0, D1, or a single C).
    Invert { inputs: Vec<PathBuf> },
    /// Ramsey frequency-shift analysis of a Ramsey record.
    Ramsey { input: PathBuf },
    /// Energy-normalized averaging and recovery fits over run records.
    Pipeline { inputs: Vec<PathBuf> },
    /// Render CSV outputs as PNG panels.
    Plot { inputs: Vec<PathBuf> },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e.class() {
                ErrorClass::MissingInput => 2,
                ErrorClass::Validation => 3,
                ErrorClass::Numerical => 4,
            };
        }
        if let Some(e) = cause.downcast_ref::<std::io::Error>() {
            return if e.kind() == std::io::ErrorKind::NotFound {
                2
            } else {
                3
            };
        }
    }
    3
}

pub fn ensure_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(Error::Io)?;
    Ok(())
}

pub fn require_inputs(inputs: &[PathBuf]) -> Result<()> {
    if inputs.is_empty() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            "no input files given",
        ))
        .into());
    }
    for p in inputs {
        if !p.exists() {
            return Err(Error::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("{} does not exist", p.display()),
            ))
            .into());
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.common.jobs {
        if n == 0 {
            return Err(Error::range("--jobs", "must be at least 1").into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    let c = &cli.common;
    match cli.command {
        Command::SimulateModel => model::simulate_model(c),
        Command::SimulateShots { mode, inputs } => shots::simulate_shots(c, mode, &inputs),
        Command::Detect { input } => analysis::detect(c, &input),
        Command::Invert { inputs } => analysis::invert(c, &inputs),
        Command::Ramsey { input } => analysis::ramsey(c, &input),
        Command::Pipeline { inputs } => analysis::pipeline(c, &inputs),
        Command::Plot { inputs } => plotting::plot(c, &inputs),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
