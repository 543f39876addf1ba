use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nlsplit::acceptance::Fault;
use nlsplit::commands::{self, CommandOptions};

/// Nonlinear-splitting gradient methods: single runs, experiment grids and
/// the acceptance suite.
#[derive(Debug, Parser)]
#[command(name = "nlsplit", version, about)]
struct Cli {
    /// Worker threads for experiment grids. Results do not depend on it.
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    jobs: u32,
    /// Output directory (default: `output.dir`, then $NLSPLIT_OUTPUT, then `.`).
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Overrides `problem.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the `[method]` of a scenario and write its trace.
    Run { scenario: PathBuf },
    /// Final cost for every (method, γ) of the `[experiment]` grid.
    Sweep { scenario: PathBuf },
    /// Randomized restarts in the benchmark start box.
    Multistart { scenario: PathBuf },
    /// Relative objective against cumulative constraint-solver iterations.
    Efficiency { scenario: PathBuf },
    /// Run the acceptance suite; exits 0 iff every criterion passes.
    Accept {
        /// Inject a defect (`adjoint-sign`).
        #[arg(long, hide = true)]
        fault: Option<String>,
        /// Run only these criterion ids.
        #[arg(long, value_delimiter = ',', hide = true)]
        only: Vec<u8>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let opts = CommandOptions { jobs: cli.jobs as usize, output: cli.output, seed: cli.seed };
    let result = match &cli.command {
        Command::Run { scenario } => commands::cmd_run(scenario, &opts),
        Command::Sweep { scenario } => commands::cmd_sweep(scenario, &opts),
        Command::Multistart { scenario } => commands::cmd_multistart(scenario, &opts),
        Command::Efficiency { scenario } => commands::cmd_efficiency(scenario, &opts),
        Command::Accept { fault, only } => match fault.as_deref().map(str::parse::<Fault>).transpose() {
            Ok(fault) => commands::cmd_accept(&opts, fault, only),
            Err(e) => Err(e),
        },
    };
    ExitCode::from(commands::exit_code(result) as u8)
}
