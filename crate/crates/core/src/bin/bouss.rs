use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use bouss_core::cli::{run, Command, Invocation};

/// Boussinesq boundary-control solver.
#[derive(Parser)]
#[command(name = "bouss", version)]
struct Args {
    #[command(subcommand)]
    command: Cmd,
    /// JSON run configuration (defaults are used when omitted).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides output.directory).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for every random input (overrides seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write the mesh and its DOF counts.
    MeshInfo,
    /// Check the trilinear-form identities and estimate the constants.
    CheckForms,
    /// Run the forward problem.
    Solve,
    /// Minimize the cost over the admissible controls.
    Optimize,
    /// Compare the adjoint gradient with finite differences.
    GradCheck,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let command = match args.command {
        Cmd::MeshInfo => Command::MeshInfo,
        Cmd::CheckForms => Command::CheckForms,
        Cmd::Solve => Command::Solve,
        Cmd::Optimize => Command::Optimize,
        Cmd::GradCheck => Command::GradCheck,
    };
    let code = run(&Invocation { command, config: args.config, out: args.out, seed: args.seed });
    ExitCode::from(code as u8)
}
