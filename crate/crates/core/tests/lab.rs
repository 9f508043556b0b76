use std::path::{Path, PathBuf};
use std::time::Duration;

use cometlab::item::{Mode, ReceiptRecord};
use cometlab::lab::{
    aggregate, emit_report, load_runs, full_grid, pull_schedule_oracle, received_counts, run_experiment, sweep,
    AggregateRow, ExperimentConfig, LabEnv, LabError, MetricStat,
};
use cometlab::sink;
use proptest::prelude::*;

fn env(out: &Path) -> LabEnv {
    let bin = PathBuf::from(env!("CARGO_BIN_EXE_push-server"));
    LabEnv::new(bin.parent().unwrap(), out)
}

fn smoke(mode: Mode) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(mode, 2, 500).scaled(10);
    c.total_messages = 3;
    c.pull_interval_ms = 150;
    c.seed = 7;
    c
}

#[tokio::test]
async fn push_smoke_run() {
    let tmp = tempfile::tempdir().unwrap();
    let config = smoke(Mode::Push);
    let dataset = run_experiment(&config, &env(tmp.path())).await.unwrap();
    assert_eq!(dataset.receipts.len(), 6);
    assert!(dataset.receipts.iter().all(|r| r.run_id == dataset.run_id));
    assert!(sink::is_complete(&sink::run_dir(tmp.path(), &config.run_id())));

    let row = aggregate(&dataset).unwrap();
    assert_eq!((row.mean_received_non_unique, row.mean_received_unique), (3.0, 3.0));
    assert_eq!(row.duplicate_pairs, 0);
    assert_eq!(row.error_count, 0);
    assert!(row.mean_trip_time_ms.unwrap() < 250.0);
    assert!(row.mean_cpu_percent.is_some());
}

#[tokio::test]
async fn pull_smoke_run_matches_the_schedule_replay() {
    let tmp = tempfile::tempdir().unwrap();
    let dataset = run_experiment(&smoke(Mode::Pull), &env(tmp.path())).await.unwrap();
    assert!(dataset.receipts.len() >= 6);
    let row = aggregate(&dataset).unwrap();
    assert_eq!(row.mean_received_unique, 3.0);
    assert_eq!(row.clients_with_all_items, 2);
    let oracle = row.oracle.unwrap();
    assert!(oracle.max_dev_unique <= 1 && oracle.max_dev_non_unique <= 2, "{oracle:?}");

    // per client, pull receipts never go back in time
    let mut by_client: Vec<Vec<&ReceiptRecord>> = vec![Vec::new(); 2];
    for r in &dataset.receipts {
        by_client[r.client_idx as usize].push(r);
    }
    for records in &mut by_client {
        records.sort_by_key(|r| r.receipt_ts);
        assert!(records.windows(2).all(|w| w[0].item_id <= w[1].item_id));
    }
}

#[tokio::test]
async fn aborted_server_leaves_a_flagged_partial_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let mut env = env(tmp.path());
    env.kill_server_after = Some(Duration::from_millis(120));
    let config = smoke(Mode::Push);
    let err = run_experiment(&config, &env).await.unwrap_err();
    assert!(matches!(err, LabError::Aborted { .. }), "{err}");

    let dir = sink::run_dir(tmp.path(), &config.run_id());
    assert!(!sink::is_complete(&dir));
    let partial = sink::load(&dir).unwrap();
    assert!(partial.counters.error.is_some());
    assert!(aggregate(&partial).unwrap().is_error());
}

#[tokio::test]
async fn missing_server_binary_fails_to_start() {
    let tmp = tempfile::tempdir().unwrap();
    let env = LabEnv::new(tmp.path().join("nowhere"), tmp.path());
    let err = run_experiment(&smoke(Mode::Pull), &env).await.unwrap_err();
    assert!(matches!(err, LabError::ComponentStart(_)), "{err}");
}

#[tokio::test]
async fn finished_sweep_is_not_rerun() {
    let tmp = tempfile::tempdir().unwrap();
    let mut fast = smoke(Mode::Pull);
    fast.long_poll_timeout_ms = 5_000;
    let mut push = fast.clone();
    push.mode = Mode::Push;
    let grid = vec![push, fast];

    let first = sweep(&grid, &env(tmp.path())).await.unwrap();
    assert_eq!(first.executed, 2);
    assert_eq!(first.rows.len(), 2);
    assert!(first.rows.iter().all(|r| !r.is_error()));

    let second = sweep(&grid, &env(tmp.path())).await.unwrap();
    assert_eq!(second.executed, 0);
    assert_eq!(second.rows, first.rows);

    let loaded = load_runs(tmp.path()).unwrap();
    assert_eq!(loaded.len(), 2);
}

#[tokio::test]
async fn empty_grid_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(matches!(sweep(&[], &env(tmp.path())).await, Err(LabError::InvalidConfig(_))));
}

fn synthetic_row(config: ExperimentConfig, k: usize) -> AggregateRow {
    let mut row = AggregateRow::failed(config, String::new());
    row.error = None;
    row.error_count = 0;
    let stat = |v: f64| MetricStat::of([v, v + 1.0]);
    row.trip_time = stat(k as f64);
    row.mean_trip_time_ms = row.trip_time.map(|s| s.mean);
    row.cpu = stat(1.0 + k as f64 / 10.0);
    row.mean_cpu_percent = row.cpu.map(|s| s.mean);
    row.received_non_unique = stat(10.0);
    row.received_unique = stat(9.0);
    row
}

#[test]
fn full_grid_report_has_fifty_rows_per_figure() {
    let mut rows: Vec<AggregateRow> =
        full_grid().into_iter().enumerate().map(|(k, c)| synthetic_row(c, k)).collect();
    rows.reverse();
    let tmp = tempfile::tempdir().unwrap();
    let paths = emit_report(&rows, tmp.path()).unwrap();
    for path in &paths[..4] {
        let mut reader = csv::Reader::from_path(path).unwrap();
        let headers = reader.headers().unwrap().clone();
        assert_eq!(
            headers.iter().collect::<Vec<_>>(),
            ["mode", "clients", "publishIntervalMs", "value", "samples", "stddev"]
        );
        let keys: Vec<(String, u32, u64)> = reader
            .records()
            .map(|r| {
                let r = r.unwrap();
                (r[0].to_owned(), r[1].parse().unwrap(), r[2].parse().unwrap())
            })
            .collect();
        assert_eq!(keys.len(), 50);
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
    }
    let summary = std::fs::read_to_string(&paths[5]).unwrap();
    assert!(summary.contains("REGRESSION"));
    assert!(summary.contains("20000"));

    // byte-identical on a rerun with shuffled input
    rows.rotate_left(17);
    let again = tempfile::tempdir().unwrap();
    let paths2 = emit_report(&rows, again.path()).unwrap();
    for (a, b) in paths.iter().zip(&paths2).take(5) {
        assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    }
}

#[test]
fn empty_report_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(emit_report(&[], tmp.path()).is_err());
}

#[test]
fn oracle_cli_prints_the_replay() {
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_lab"))
        .args(["oracle", "--q", "5000", "--p", "15000", "--n", "10", "--phase", "0"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["expectedUniqueIds"], serde_json::json!([0, 3, 6, 9]));
    assert_eq!(v["expectedNonUnique"], 4);
}

#[test]
fn lab_run_reports_bad_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.json");
    std::fs::write(&cfg, r#"{"mode":"push","clients":0}"#).unwrap();
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_lab"))
        .args(["run", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(!out.status.success());
}

fn receipts() -> impl Strategy<Value = Vec<ReceiptRecord>> {
    prop::collection::vec((0u32..6, 0u64..10, 0i64..5_000), 0..200).prop_map(|v| {
        v.into_iter()
            .map(|(client, item, delay)| ReceiptRecord::new("p", client, Mode::Pull, item, 1_000, 1_000 + delay))
            .collect()
    })
}

proptest! {
    #[test]
    fn unique_never_exceeds_non_unique_or_total(rs in receipts(), clients in 1u32..8) {
        let (non_unique, unique) = received_counts(&rs, 10, clients);
        prop_assert!(unique <= non_unique);
        prop_assert!(unique <= 10.0);
    }

    #[test]
    fn publishing_no_faster_than_polling_sees_everything(
        p in 100u64..20_000,
        extra in 0u64..20_000,
        n in 1u64..12,
        phase_frac in 0.0f64..1.0,
    ) {
        let q = p + extra;
        let phase = (phase_frac * p as f64) as u64;
        let o = pull_schedule_oracle(q, p, n, phase, 0);
        prop_assert_eq!(o.expected_unique_ids(), (0..n).collect());
    }

    #[test]
    fn oracle_unique_ids_are_a_subset_of_published(
        q in 100u64..20_000, p in 100u64..20_000, n in 1u64..12, phase in 0u64..20_000, drain in 0u64..20_000,
    ) {
        let o = pull_schedule_oracle(q, p, n, phase, drain);
        let ids = o.expected_unique_ids();
        prop_assert!(ids.iter().all(|&k| k < n));
        prop_assert!(ids.len() <= o.expected_non_unique());
        prop_assert!(o.polls.windows(2).all(|w| w[0].item <= w[1].item));
    }
}
