use clap::{Parser, Subcommand};
use cnls_cli::{run, Command, Flags};
use std::path::PathBuf;

/// Ground states, evolution and threshold-dichotomy runs for radial
/// energy-critical Schrodinger systems.
#[derive(Parser)]
#[command(name = "cnls", version)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
    /// JSON run configuration.
    #[arg(long, global = true, default_value = "config.json")]
    config: PathBuf,
    /// Output directory (overrides `output` in the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for sampled checks (overrides `seed` in the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for dichotomy and sweep (default: logical cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// No progress output on stderr.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Sub {
    /// Check hypotheses on the potential.
    Check,
    /// Solve for the ground state.
    GroundState,
    /// Evolve initial data and classify the outcome.
    Evolve,
    /// Run a scenario set against the threshold dichotomy.
    Dichotomy,
    /// Sweep the amplitude of scaled ground-state data.
    Sweep,
}

fn main() {
    let cli = Cli::parse();
    let command = match cli.command {
        Sub::Check => Command::Check,
        Sub::GroundState => Command::GroundState,
        Sub::Evolve => Command::Evolve,
        Sub::Dichotomy => Command::Dichotomy,
        Sub::Sweep => Command::Sweep,
    };
    let flags = Flags {
        out: cli.out,
        seed: cli.seed,
        workers: cli.workers,
        quiet: cli.quiet,
    };
    std::process::exit(run(command, &cli.config, &flags));
}
