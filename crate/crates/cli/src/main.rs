use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hadamard_spectra_cli::{execute, Command, Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "hadamard-spectra", version, about = "Limiting spectra of Hadamard products of sample covariance matrices")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Theoretical density of the limit law.
    Theory(RunArgs),
    /// Simulated eigenvalues and summary statistics.
    Simulate(RunArgs),
    /// Simulation against theory, with histogram and density for plotting.
    Compare(RunArgs),
    /// Numerical checks of the tensor lemmas on small dimensions.
    TensorCheck(RunArgs),
    /// Quadratic-form concentration sweep over d_min.
    Concentration(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicas: Option<usize>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    grid_points: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
}

fn run(cmd: Command, args: RunArgs) -> anyhow::Result<()> {
    let overrides = Overrides {
        seed: args.seed,
        replicas: args.replicas,
        eta: args.eta,
        grid_points: args.grid_points,
        n: args.n,
    };
    let cfg = RunConfig::load(&args.config)?.with_overrides(&overrides)?;
    let manifest = execute(cmd, &cfg, Some(&args.config), &args.out)?;
    println!("{}", manifest.output_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, args) = match cli.command {
        Cmd::Theory(a) => (Command::Theory, a),
        Cmd::Simulate(a) => (Command::Simulate, a),
        Cmd::Compare(a) => (Command::Compare, a),
        Cmd::TensorCheck(a) => (Command::TensorCheck, a),
        Cmd::Concentration(a) => (Command::Concentration, a),
    };
    match run(cmd, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
