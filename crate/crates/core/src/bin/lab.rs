use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cometlab::lab::{
    aggregate, desk_grid, emit_report, load_runs, full_grid, pull_schedule_oracle, run_experiment, sweep,
    ExperimentConfig, LabEnv, LabError,
};

/// Runs push/pull experiments and writes figure tables.
#[derive(Parser)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Runs one experiment from a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// Runs every cell of a grid, skipping completed ones, then reports.
    Sweep {
        /// JSON array of configs, or `desk` / `full` for the built-in grids.
        #[arg(long)]
        grid: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rebuilds the report from the run directories under `in`.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        /// Defaults to the input directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replays a pull schedule and prints the expected receipts.
    Oracle {
        #[arg(long)]
        q: u64,
        #[arg(long)]
        p: u64,
        #[arg(long, default_value_t = 10)]
        n: u64,
        #[arg(long, default_value_t = 0)]
        phase: u64,
        #[arg(long, default_value_t = 0)]
        drain: u64,
    },
}

fn read_json<T: serde::de::DeserializeOwned>(path: &PathBuf) -> Result<T, LabError> {
    let bytes = std::fs::read(path)?;
    serde_json::from_slice(&bytes).map_err(|e| LabError::InvalidConfig(format!("{}: {e}", path.display())))
}

async fn execute(command: Command) -> Result<(), LabError> {
    match command {
        Command::Run { config, out } => {
            let config: ExperimentConfig = read_json(&config)?;
            let env = LabEnv::beside_current_exe(out)?;
            let dataset = run_experiment(&config, &env).await?;
            let row = aggregate(&dataset)?;
            println!("{}", serde_json::to_string_pretty(&row).expect("row serializes"));
        }
        Command::Sweep { grid, out } => {
            let grid = match grid.as_str() {
                "desk" => desk_grid(),
                "full" => full_grid(),
                path => read_json(&PathBuf::from(path))?,
            };
            let env = LabEnv::beside_current_exe(&out)?;
            let outcome = sweep(&grid, &env).await?;
            eprintln!("{} of {} cells executed", outcome.executed, grid.len());
            for path in emit_report(&outcome.rows, &out)? {
                println!("{}", path.display());
            }
        }
        Command::Report { input, out } => {
            let rows = load_runs(&input)?;
            for path in emit_report(&rows, out.as_ref().unwrap_or(&input))? {
                println!("{}", path.display());
            }
        }
        Command::Oracle { q, p, n, phase, drain } => {
            if q == 0 || p == 0 || n == 0 {
                return Err(LabError::InvalidConfig("q, p and n must be positive".into()));
            }
            let outcome = pull_schedule_oracle(q, p, n, phase, drain);
            let report = serde_json::json!({
                "expectedNonUnique": outcome.expected_non_unique(),
                "expectedUniqueIds": outcome.expected_unique_ids(),
                "polls": outcome.polls,
            });
            println!("{}", serde_json::to_string_pretty(&report).expect("oracle serializes"));
        }
    }
    Ok(())
}

#[tokio::main]
async fn main() -> ExitCode {
    cometlab::init_logging();
    match execute(Cli::parse().command).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::FAILURE
        }
    }
}
