use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gkp_cli::{emit_results, Command, Overrides, RunConfig};

#[derive(Parser)]
#[command(
    name = "gkp",
    version,
    about = "Grid-state qubit experiments from a TOML run config"
)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Prepare each recipe and report yields and readouts.
    Prepare(RunArgs),
    /// Modular-readout curves along each phase-space axis.
    Scan(RunArgs),
    /// Three-axis logical readout and state reconstruction.
    TomographyState(RunArgs),
    /// Chi-matrix fit of each configured process over the six inputs.
    TomographyProcess(RunArgs),
    /// Quadrature marginals from characteristic-function scans.
    Marginals(RunArgs),
    /// Wigner function on the configured grid.
    Wigner(RunArgs),
    /// Hybrid density-matrix simulation with dephasing.
    Simulate(RunArgs),
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides output.dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Shots per readout setting; 0 gives exact values.
    #[arg(long)]
    shots: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Dephasing rate in 1/s.
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    fock_dim: Option<usize>,
}

fn run(command: Command, args: RunArgs) -> anyhow::Result<()> {
    let mut cfg = RunConfig::load(&args.config)?;
    Overrides {
        out: args.out,
        shots: args.shots,
        seed: args.seed,
        noise: args.noise,
        fock_dim: args.fock_dim,
    }
    .apply(&mut cfg)?;
    let results = command.run(&cfg)?;
    for path in emit_results(&results, cfg.output.format, &cfg.output.dir)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Sub::Prepare(a) => (Command::Prepare, a),
        Sub::Scan(a) => (Command::Scan, a),
        Sub::TomographyState(a) => (Command::TomographyState, a),
        Sub::TomographyProcess(a) => (Command::TomographyProcess, a),
        Sub::Marginals(a) => (Command::Marginals, a),
        Sub::Wigner(a) => (Command::Wigner, a),
        Sub::Simulate(a) => (Command::Simulate, a),
    };
    match run(command, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gkp {}: {e:#}", command.name());
            ExitCode::FAILURE
        }
    }
}
