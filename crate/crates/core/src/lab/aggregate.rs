use serde::{Deserialize, Serialize};

use super::metrics::{duplicate_pairs, first_receipts, per_client_counts, received_counts, MetricStat};
use super::oracle::pull_schedule_oracle;
use super::{ExperimentConfig, LabError};
use crate::item::Mode;
use crate::sink::{RunDataset, ServerCounters};
use crate::swarm::pull_phase_offsets;

/// Measured vs. replayed pull schedule for one run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OracleCheck {
    pub mean_expected_non_unique: f64,
    pub mean_expected_unique: f64,
    pub max_dev_non_unique: u64,
    pub max_dev_unique: u64,
    /// Per client: `[measured non-unique, expected non-unique, measured unique, expected unique]`.
    pub per_client: Vec<[u64; 4]>,
}

/// One sweep cell's metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AggregateRow {
    pub run_id: String,
    pub config: ExperimentConfig,
    /// Mean time from creation to the first receipt of each item per client.
    pub mean_trip_time_ms: Option<f64>,
    /// Mean over every receipt, repeats included.
    pub mean_trip_time_all_ms: Option<f64>,
    pub mean_cpu_percent: Option<f64>,
    pub mean_received_non_unique: f64,
    pub mean_received_unique: f64,
    pub error_count: u64,
    pub trip_time: Option<MetricStat>,
    pub trip_time_all: Option<MetricStat>,
    pub cpu: Option<MetricStat>,
    pub received_non_unique: Option<MetricStat>,
    pub received_unique: Option<MetricStat>,
    pub max_trip_time_ms: Option<i64>,
    pub clients_with_all_items: u64,
    pub duplicate_pairs: u64,
    /// Share of receipts that repeated an item the client already had.
    pub redundancy_ratio: Option<f64>,
    pub server_delta: ServerCounters,
    pub oracle: Option<OracleCheck>,
    pub cpu_gaps: u64,
    pub sampler_overhead_us: u64,
    pub error: Option<String>,
}

impl AggregateRow {
    pub fn failed(config: ExperimentConfig, error: String) -> Self {
        Self {
            run_id: config.run_id(),
            config,
            mean_trip_time_ms: None,
            mean_trip_time_all_ms: None,
            mean_cpu_percent: None,
            mean_received_non_unique: 0.0,
            mean_received_unique: 0.0,
            error_count: 1,
            trip_time: None,
            trip_time_all: None,
            cpu: None,
            received_non_unique: None,
            received_unique: None,
            max_trip_time_ms: None,
            clients_with_all_items: 0,
            duplicate_pairs: 0,
            redundancy_ratio: None,
            server_delta: ServerCounters::new(),
            oracle: None,
            cpu_gaps: 0,
            sampler_overhead_us: 0,
            error: Some(error),
        }
    }

    pub fn is_error(&self) -> bool {
        self.error.is_some()
    }

    pub fn server(&self, key: &str) -> u64 {
        self.server_delta.get(key).copied().unwrap_or(0)
    }
}

fn counter_delta(before: &ServerCounters, after: &ServerCounters) -> ServerCounters {
    after
        .iter()
        .map(|(k, v)| (k.clone(), v.saturating_sub(before.get(k).copied().unwrap_or(0))))
        .collect()
}

/// Rebuilds every pull client's schedule from the run metadata and replays
/// it through the oracle.
pub fn pull_oracle_check(config: &ExperimentConfig, dataset: &RunDataset) -> Option<OracleCheck> {
    if config.mode != Mode::Pull {
        return None;
    }
    let c = &dataset.counters;
    let swarm_start = c.swarm_start_ts?;
    let swarm_stop = c.swarm_stop_ts?;
    let q = config.publish_interval();
    let p = config.pull_interval();
    let n = config.total_messages as u64;
    let t0 = c
        .publish_log
        .iter()
        .find(|e| e.id == 0)
        .map(|e| e.creation_ts)
        .or_else(|| dataset.receipts.iter().map(|r| r.creation_ts - (r.item_id * q) as i64).min())?;

    let end = (swarm_stop - t0).max(0) as u64;
    let drain = end.saturating_sub(n * q);
    let ramp = config.ramp_up();
    let phases = pull_phase_offsets(config.seed, config.clients, p, ramp);
    let measured = per_client_counts(&dataset.receipts, config.clients);

    let mut check = OracleCheck::default();
    for (idx, phase) in phases.iter().enumerate() {
        let ramp_offset = ramp * idx as u64 / config.clients as u64;
        let first_poll = swarm_start + (ramp_offset + phase) as i64;
        let rel = first_poll - t0;
        let oracle_phase = if rel >= 0 { rel as u64 } else { rel.rem_euclid(p as i64) as u64 };
        let outcome = pull_schedule_oracle(q, p, n, oracle_phase, drain);
        let got = &measured[idx];
        let row = [
            got.non_unique,
            outcome.expected_non_unique() as u64,
            got.unique.len() as u64,
            outcome.expected_unique_ids().len() as u64,
        ];
        check.max_dev_non_unique = check.max_dev_non_unique.max(row[0].abs_diff(row[1]));
        check.max_dev_unique = check.max_dev_unique.max(row[2].abs_diff(row[3]));
        check.per_client.push(row);
    }
    let k = check.per_client.len().max(1) as f64;
    check.mean_expected_non_unique = check.per_client.iter().map(|r| r[1] as f64).sum::<f64>() / k;
    check.mean_expected_unique = check.per_client.iter().map(|r| r[3] as f64).sum::<f64>() / k;
    Some(check)
}

pub fn aggregate(dataset: &RunDataset) -> Result<AggregateRow, LabError> {
    let config: ExperimentConfig = serde_json::from_value(dataset.config.clone())
        .map_err(|e| LabError::InvalidConfig(format!("{}: {e}", dataset.run_id)))?;
    let receipts = &dataset.receipts;
    let n = config.total_messages;

    let trip = |rs: &mut dyn Iterator<Item = i64>| MetricStat::of(rs.map(|t| t.abs() as f64));
    let firsts = first_receipts(receipts);
    let trip_time = trip(&mut firsts.iter().map(|r| r.receipt_ts - r.creation_ts));
    let trip_time_all = trip(&mut receipts.iter().map(|r| r.receipt_ts - r.creation_ts));
    let cpu = MetricStat::of(dataset.cpu.iter().map(|s| s.process_cpu_percent));

    let counts = per_client_counts(receipts, config.clients);
    let (mean_non_unique, mean_unique) = received_counts(receipts, n, config.clients);
    let non_unique_total: u64 = counts.iter().map(|c| c.non_unique).sum();
    let unique_total: u64 = counts.iter().map(|c| c.unique.len() as u64).sum();

    let c = &dataset.counters;
    let swarm = c.swarm.unwrap_or_default();
    let publish_failures = c.publish_log.iter().filter(|e| e.failed()).count() as u64;

    Ok(AggregateRow {
        run_id: dataset.run_id.clone(),
        mean_trip_time_ms: trip_time.map(|s| s.mean),
        mean_trip_time_all_ms: trip_time_all.map(|s| s.mean),
        mean_cpu_percent: cpu.map(|s| s.mean),
        mean_received_non_unique: mean_non_unique,
        mean_received_unique: mean_unique,
        error_count: swarm.errors + swarm.records_dropped + publish_failures + c.ingest_malformed,
        trip_time,
        trip_time_all,
        cpu,
        received_non_unique: MetricStat::of(counts.iter().map(|c| c.non_unique as f64)),
        received_unique: MetricStat::of(counts.iter().map(|c| c.unique.len() as f64)),
        max_trip_time_ms: receipts.iter().map(|r| (r.receipt_ts - r.creation_ts).abs()).max(),
        clients_with_all_items: counts
            .iter()
            .filter(|c| (0..n as u64).all(|id| c.unique.contains(&id)))
            .count() as u64,
        duplicate_pairs: duplicate_pairs(receipts),
        redundancy_ratio: (non_unique_total > 0)
            .then(|| (non_unique_total - unique_total) as f64 / non_unique_total as f64),
        server_delta: counter_delta(&c.server_before, &c.server_after),
        oracle: pull_oracle_check(&config, dataset),
        cpu_gaps: c.cpu_gaps,
        sampler_overhead_us: c.sampler_overhead_us,
        error: if c.complete { None } else { Some(c.error.clone().unwrap_or_else(|| "incomplete run".into())) },
        config,
    })
}
