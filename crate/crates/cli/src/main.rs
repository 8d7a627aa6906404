mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use error::CliError;

/// Packet-network simulation, rate allocation and utility-driven governance of
/// network controllers, driven by scenario files.
#[derive(Debug, Parser)]
#[command(name = "netgov", version, about)]
struct Cli {
    /// Worker threads for sweeps and evaluations (default: available processors).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ScenarioArgs {
    /// Scenario JSON file.
    scenario: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated seeds replacing the scenario's seed list.
    #[arg(long, value_delimiter = ',')]
    seeds_override: Option<Vec<u64>>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the network model and write per-seed traces and a summary.
    Simulate(ScenarioArgs),
    /// Run a phase or hysteresis sweep and estimate the critical rate.
    Sweep(ScenarioArgs),
    /// Solve a rate allocation problem and check its optimality conditions.
    Num {
        /// Rate problem JSON file.
        problem: PathBuf,
        /// Also write solution.json into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the governance loop, or the coupled-scaler comparison.
    Govern(ScenarioArgs),
    /// Enumerate the joint configuration space and write its Pareto front.
    Pareto(ScenarioArgs),
    /// Measure an actuating controller's configurations into an empirical model.
    Calibrate(ScenarioArgs),
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Validation("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global().map_err(|e| CliError::Io(e.to_string()))?;
    }
    match cli.command {
        Command::Simulate(a) => commands::simulate(&a.scenario, &a.out, a.seeds_override),
        Command::Sweep(a) => commands::sweep(&a.scenario, &a.out, a.seeds_override),
        Command::Num { problem, out } => commands::num(&problem, out.as_deref()),
        Command::Govern(a) => commands::govern(&a.scenario, &a.out, a.seeds_override),
        Command::Pareto(a) => commands::pareto(&a.scenario, &a.out, a.seeds_override),
        Command::Calibrate(a) => commands::calibrate(&a.scenario, &a.out, a.seeds_override),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::new().filter_level(log::LevelFilter::Warn).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("netgov: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
