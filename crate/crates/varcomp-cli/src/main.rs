//! Batch front end for variance components likelihood analysis: existence
//! checks, fits, covariance decompositions, divergence probes, and
//! simulation, driven by a JSON manifest naming CSV matrix files.
//!
//! Exit codes: 0 success (estimate exists, fit converged, probe contract
//! holds), 2 input error, 3 nonexistence (or a numerically degenerate fit),
//! 4 non-convergence, 5 probe contract violated.

mod commands;
mod io;
mod manifest;
mod report;

use clap::{Parser, Subcommand};
use varcomp::Method;

use commands::{CommonArgs, DecomposeArgs, FitArgs, ProbeArgs, SimulateArgs};

#[derive(Parser)]
#[command(
    name = "varcomp",
    version,
    about = "Variance components models: criteria, existence certificates, divergence probes, fits"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Certify whether the ML estimate exists
    CheckMl(CommonArgs),
    /// Certify whether the REML estimate exists
    CheckReml(CommonArgs),
    /// Minimize the chosen criterion and report the estimate
    Fit(FitArgs),
    /// Report the reduced representation of the scaled covariance
    Decompose(DecomposeArgs),
    /// Evaluate the criterion along a divergence probe family
    Probe(ProbeArgs),
    /// Draw an observation from the manifest's simulation parameters
    Simulate(SimulateArgs),
}

fn run(cli: &Cli) -> anyhow::Result<i32> {
    match &cli.command {
        Command::CheckMl(args) => commands::check(args, Method::Ml),
        Command::CheckReml(args) => commands::check(args, Method::Reml),
        Command::Fit(args) => commands::fit(args),
        Command::Decompose(args) => commands::decompose(args),
        Command::Probe(args) => commands::probe(args),
        Command::Simulate(args) => commands::run_simulate(args),
    }
}

fn classify(err: &anyhow::Error) -> i32 {
    match err.downcast_ref::<varcomp::Error>() {
        Some(varcomp::Error::Nonexistence { .. })
        | Some(varcomp::Error::DegenerateFit(_))
        | Some(varcomp::Error::Precondition(_)) => 3,
        _ => 2,
    }
}

fn main() {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            std::process::exit(classify(&err));
        }
    }
}
