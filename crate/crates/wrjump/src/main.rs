use std::path::PathBuf;

use clap::{Parser, Subcommand};

use wrjump::app::{execute, Invocation, Task};

/// Two-type interacting jump process: simulator, kinetic solver,
/// stationary-state analysis, scaling experiment, and bounds calculator.
#[derive(Parser)]
#[command(name = "wrjump", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory (overrides `out_dir` in the config)
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// RNG seed (overrides `seed` in the config)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for ensembles (default: machine parallelism)
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Suppress the output-file listing
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the density equations (RK4 or fixed-point)
    Kinetic,
    /// Run particle-system trajectories
    Simulate,
    /// Find and classify constant stationary solutions
    Stationary,
    /// Dispersion relation and critical wavenumber
    Stability,
    /// Scaling experiment: particles vs kinetic solution
    Meso,
    /// Well-posedness constants calculator
    Bounds,
}

fn main() {
    let cli = Cli::parse();
    if !cli.quiet {
        env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
            .format_timestamp(None)
            .init();
    }
    let task = match cli.command {
        Command::Kinetic => Task::Kinetic,
        Command::Simulate => Task::Simulate,
        Command::Stationary => Task::Stationary,
        Command::Stability => Task::Stability,
        Command::Meso => Task::Meso,
        Command::Bounds => Task::Bounds,
    };
    let Some(config_path) = cli.config else {
        eprintln!("error: --config <PATH> is required");
        std::process::exit(1);
    };
    let code = execute(&Invocation {
        task,
        config_path,
        out_dir: cli.out,
        seed: cli.seed,
        workers: cli.workers,
        quiet: cli.quiet,
    });
    std::process::exit(code);
}
