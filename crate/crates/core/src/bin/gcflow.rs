use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gcflow::cli_io::{cmd_run, cmd_sweep, cmd_verify, VerifyOptions};
use gcflow::verification::Mutation;

#[derive(Parser)]
#[command(name = "gcflow", version, about = "Inverse Gauss curvature flow of graphs over a spherical cap")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation from a configuration file.
    Run { config: PathBuf },
    /// Run the scenario battery and print the pass/fail table.
    Verify {
        #[arg(long)]
        alpha: Option<f64>,
        /// Radial resolution of the flow scenarios.
        #[arg(long)]
        grid: Option<usize>,
        /// Seeded defect: h-sign, theta-exponent or identity-sign.
        #[arg(long)]
        mutate: Option<Mutation>,
        #[arg(long)]
        seed: Option<u64>,
        /// Take alpha, nr and seed from a configuration file.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run a configuration at several exponents.
    Sweep {
        #[arg(long, value_delimiter = ',', required = true)]
        alphas: Vec<f64>,
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let code = match cli.command {
        Command::Run { config } => cmd_run(&config),
        Command::Verify { alpha, grid, mutate, seed, config } => {
            cmd_verify(&VerifyOptions { alpha, grid, mutation: mutate, seed, config })
        }
        Command::Sweep { alphas, config } => cmd_sweep(&alphas, &config),
    };
    ExitCode::from(code as u8)
}
