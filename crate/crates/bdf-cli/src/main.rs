//! Entry point: subcommand dispatch and exit-code mapping.
//!
//! Exit codes: 0 success, 2 configuration error, 3 solver non-convergence,
//! 4 violated invariant.

mod config;
mod io;
mod tasks;

use std::path::PathBuf;

use bdf_core::error::{BdfError, Result};
use clap::{Parser, Subcommand};

use config::{Overrides, RunConfig};
use io::RunDir;

#[derive(Parser)]
#[command(name = "bdf", version, about = "Dirac-sea mean-field laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the dressed vacuum symbol on a radial momentum grid.
    FreeVacuum(Overrides),
    /// Solve the dressed vacuum on the cubic momentum lattice.
    Vacuum(Overrides),
    /// Minimize the energy at fixed charge and checkpoint the state.
    GroundState(Overrides),
    /// Scan the charge-energy curve and run the binding analysis.
    HvzScan(Overrides),
    /// Compare sector energies against the one-body model as the coupling
    /// shrinks.
    WeakCoupling(Overrides),
    /// Track excess energies and orbital structure as the light speed grows.
    NonrelLimit(Overrides),
    /// Split a checkpointed state into its projector-pair data.
    Decompose {
        /// State container written by ground-state.
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run the deterministic invariant sweep; nonzero exit on any failure.
    Selftest(Overrides),
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(exit_code(&e));
    }
}

fn exit_code(e: &BdfError) -> i32 {
    match e {
        BdfError::Config(_) | BdfError::Io(_) => 2,
        BdfError::NonConvergence { .. } => 3,
        BdfError::Invariant(_) | BdfError::Linalg(_) => 4,
    }
}

fn run(cli: Cli) -> Result<()> {
    let (name, overrides): (&'static str, &Overrides) = match &cli.command {
        Command::FreeVacuum(o) => ("free-vacuum", o),
        Command::Vacuum(o) => ("vacuum", o),
        Command::GroundState(o) => ("ground-state", o),
        Command::HvzScan(o) => ("hvz-scan", o),
        Command::WeakCoupling(o) => ("weak-coupling", o),
        Command::NonrelLimit(o) => ("nonrel-limit", o),
        Command::Decompose { overrides, .. } => ("decompose", overrides),
        Command::Selftest(o) => ("selftest", o),
    };
    let cfg = RunConfig::resolve(overrides, name)?;
    if let Some(jobs) = cfg.run.jobs {
        // ignore failure: the global pool can only be sized once
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
    let dir = RunDir::prepare(&cfg, name)?;
    let outcome = match &cli.command {
        Command::FreeVacuum(_) => tasks::free_vacuum(&cfg, &dir),
        Command::Vacuum(_) => tasks::vacuum(&cfg, &dir),
        Command::GroundState(_) => tasks::ground_state(&cfg, &dir),
        Command::HvzScan(_) => tasks::hvz_scan(&cfg, &dir),
        Command::WeakCoupling(_) => tasks::weak_coupling(&cfg, &dir),
        Command::NonrelLimit(_) => tasks::nonrel_limit(&cfg, &dir),
        Command::Decompose { input, .. } => tasks::decompose(&dir, input),
        Command::Selftest(_) => tasks::selftest(&cfg, &dir),
    };
    if let Err(e) = &outcome {
        // structured failure record next to whatever artifacts made it out
        let _ = io::write_json(
            &dir.file("error.json"),
            &serde_json::json!({ "error": e.to_string(), "exit_code": exit_code(e) }),
        );
    }
    dir.finish()?;
    outcome
}
