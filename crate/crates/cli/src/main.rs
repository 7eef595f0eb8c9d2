mod artifacts;
mod commands;

use artifacts::{write_failure, CliError, Manifest};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use std::path::PathBuf;
use std::process::ExitCode;

/// Periodic homogenization pipeline for cooperative
/// convection–diffusion–reaction systems.
#[derive(Debug, Parser)]
#[command(name = "homog", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Principal eigenpair of the cell problem → eigen.json
    Eigen(EigenArgs),
    /// Correctors and effective coefficients → effective.json
    Cell(CellArgs),
    /// Homogenized equation on the periodic box → homog.csv
    Homogenize(HomogenizeArgs),
    /// Fine-scale time stepping at one ε → traj_<eps>.csv, energy_<eps>.csv
    Simulate(SimulateArgs),
    /// Full convergence study → report.json, report.csv
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Common {
    /// Problem definition (JSON).
    pub problem: PathBuf,
    /// Output directory.
    #[arg(long, short)]
    #[serde(skip)]
    pub out: PathBuf,
    /// Seed of the random Krylov and power-iteration starts.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Eigen-solver tolerance.
    #[arg(long)]
    pub eigen_tol: Option<f64>,
    /// Corrector-solver tolerance.
    #[arg(long)]
    pub corrector_tol: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EigenArgs {
    #[command(flatten)]
    pub common: Common,
    /// Cell points per axis (default 64 in 1D, 32 in 2D).
    #[arg(long)]
    pub n: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CellArgs {
    #[command(flatten)]
    pub common: Common,
    /// Eigen artifact to start from; computed afresh when absent.
    #[arg(long)]
    pub eigen: Option<PathBuf>,
    /// Cell points per axis when no eigen artifact is given.
    #[arg(long)]
    pub n: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BoxArgs {
    /// Box edge length.
    #[arg(long = "box", default_value_t = 1.0)]
    pub box_length: f64,
    /// Box points per axis (default 512 in 1D, 64 in 2D).
    #[arg(long)]
    pub m: Option<usize>,
    /// Final time (default from the problem).
    #[arg(long = "T")]
    pub final_time: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct HomogenizeArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub domain: BoxArgs,
    /// Effective model from `cell`.
    #[arg(long)]
    pub effective: PathBuf,
    /// Number of snapshots, evenly spaced over [0, T].
    #[arg(long, default_value_t = 4)]
    pub snapshots: usize,
    /// Also reconstruct the fine-scale approximation at this ε.
    #[arg(long)]
    pub eps: Option<f64>,
    /// Eigen artifact for the reconstruction (required with --eps).
    #[arg(long)]
    pub eigen: Option<PathBuf>,
    /// Add the first-order corrector term to the reconstruction.
    #[arg(long)]
    pub with_corrector: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub domain: BoxArgs,
    #[arg(long)]
    pub eps: f64,
    /// Time step (default ε²/20).
    #[arg(long)]
    pub dt: Option<f64>,
    /// Solve the factorized system instead of the original one.
    #[arg(long)]
    pub factorized: bool,
    /// Eigen artifact on ε/dx cell nodes for --factorized; computed when absent.
    #[arg(long)]
    pub eigen: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub domain: BoxArgs,
    /// Values of ε, comma separated (default from the problem).
    #[arg(long, value_delimiter = ',')]
    pub eps: Option<Vec<f64>>,
    /// dt = ε² / dt_divisor.
    #[arg(long, default_value_t = 20.0)]
    pub dt_divisor: f64,
    /// Worker threads for the per-ε runs.
    #[arg(long, env = "HOMOG_WORKERS", default_value_t = 1)]
    pub workers: usize,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (name, config, out) = match &cli.command {
        Command::Eigen(a) => ("eigen", serde_json::to_value(a), a.common.out.clone()),
        Command::Cell(a) => ("cell", serde_json::to_value(a), a.common.out.clone()),
        Command::Homogenize(a) => ("homogenize", serde_json::to_value(a), a.common.out.clone()),
        Command::Simulate(a) => ("simulate", serde_json::to_value(a), a.common.out.clone()),
        Command::Validate(a) => ("validate", serde_json::to_value(a), a.common.out.clone()),
    };
    let manifest = Manifest::new(name, config.expect("arguments serialize"));
    let result = match &cli.command {
        Command::Eigen(a) => commands::eigen(a, manifest.clone()),
        Command::Cell(a) => commands::cell(a, manifest.clone()),
        Command::Homogenize(a) => commands::homogenize(a, manifest.clone()),
        Command::Simulate(a) => commands::simulate(a, manifest.clone()),
        Command::Validate(a) => commands::validate(a, manifest.clone()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => report(&out, manifest, &err),
    }
}

fn report(out: &std::path::Path, manifest: Manifest, err: &CliError) -> ExitCode {
    eprintln!("error: {err}");
    write_failure(out, manifest, err);
    ExitCode::from(err.exit_code() as u8)
}
