//! Experiment orchestration: sweep cells, run execution, aggregation and
//! the pull-schedule oracle.

mod aggregate;
mod config;
mod metrics;
mod oracle;
mod report;
mod runner;

pub use aggregate::{aggregate, pull_oracle_check, AggregateRow, OracleCheck};
pub use config::{
    desk_grid, grid, full_grid, ExperimentConfig, DEFAULT_CHANNEL, DESK_CLIENTS, DESK_TIME_SCALE, FULL_CLIENTS,
    FULL_LONG_POLL_TIMEOUT_MS, FULL_PUBLISH_INTERVALS_MS, FULL_PULL_INTERVAL_MS, FULL_TOTAL_MESSAGES,
};
pub use metrics::{
    duplicate_pairs, first_receipts, mean_trip_time, per_client_counts, received_counts, ClientCounts, MetricStat,
};
pub use oracle::{pull_schedule_oracle, OracleOutcome, OraclePoll};
pub use report::{emit_report, evaluate_checks, load_runs, CheckResult, REPORT_FILES};
pub use runner::{run_experiment, sweep, LabEnv, SweepOutcome};

use crate::sink::PersistError;

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),
    #[error("no receipts to aggregate")]
    EmptyDataset,
    #[error("component failed to start: {0}")]
    ComponentStart(String),
    #[error("run {run_id} aborted: {reason}")]
    Aborted { run_id: String, reason: String },
    #[error(transparent)]
    Persist(#[from] PersistError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("report: {0}")]
    Report(String),
}
