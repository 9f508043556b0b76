use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{aggregate, AggregateRow, LabError, MetricStat};
use crate::item::Mode;
use crate::sink;

pub const REPORT_FILES: [&str; 6] =
    ["fig2_triptime.csv", "fig3_cpu.csv", "fig4_received.csv", "fig5_unique.csv", "rows.json", "summary.md"];

const PUSH_TRIP_LIMIT_MS: f64 = 250.0;
const NON_UNIQUE_TOLERANCE: u64 = 2;
const UNIQUE_TOLERANCE: u64 = 1;
const COMPLETENESS_SHARE: f64 = 0.99;
const COMPLETENESS_MAX_CLIENTS: u32 = 50;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub criterion: u8,
    pub name: String,
    pub passed: bool,
    /// One line per violating cell, or a short summary when none.
    pub details: Vec<String>,
}

impl CheckResult {
    fn new(criterion: u8, name: &str, failures: Vec<String>, ok: String) -> Self {
        let passed = failures.is_empty();
        Self {
            criterion,
            name: name.to_owned(),
            passed,
            details: if passed { vec![ok] } else { failures },
        }
    }
}

#[derive(Serialize)]
struct FigureRow {
    mode: Mode,
    clients: u32,
    #[serde(rename = "publishIntervalMs")]
    publish_interval_ms: u64,
    value: Option<f64>,
    samples: u64,
    stddev: Option<f64>,
}

fn sort_key(r: &AggregateRow) -> (String, u32, u64) {
    (r.config.mode.to_string(), r.config.clients, r.config.publish_interval_ms)
}

fn sorted(rows: &[AggregateRow]) -> Vec<&AggregateRow> {
    let mut rows: Vec<_> = rows.iter().collect();
    rows.sort_by_key(|r| sort_key(r));
    rows
}

fn write_figure(
    path: &Path,
    rows: &[&AggregateRow],
    metric: impl Fn(&AggregateRow) -> Option<MetricStat>,
) -> Result<(), LabError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| LabError::Report(format!("{}: {e}", path.display())))?;
    for r in rows {
        let stat = metric(r);
        w.serialize(FigureRow {
            mode: r.config.mode,
            clients: r.config.clients,
            publish_interval_ms: r.config.publish_interval_ms,
            value: stat.map(|s| s.mean),
            samples: stat.map_or(0, |s| s.samples),
            stddev: stat.map(|s| s.stddev),
        })
        .map_err(|e| LabError::Report(format!("{}: {e}", path.display())))?;
    }
    w.flush()?;
    Ok(())
}

/// Pairs each push row with the pull row of the same `(clients, interval)`.
fn paired(rows: &[AggregateRow]) -> Vec<(&AggregateRow, &AggregateRow)> {
    let pull: BTreeMap<(u32, u64), &AggregateRow> = rows
        .iter()
        .filter(|r| r.config.mode == Mode::Pull)
        .map(|r| ((r.config.clients, r.config.publish_interval_ms), r))
        .collect();
    sorted(rows)
        .into_iter()
        .filter(|r| r.config.mode == Mode::Push)
        .filter_map(|r| pull.get(&(r.config.clients, r.config.publish_interval_ms)).map(|p| (r, *p)))
        .collect()
}

fn label(r: &AggregateRow) -> String {
    format!("{} c={} q={}ms", r.config.mode, r.config.clients, r.config.publish_interval())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |v| format!("{v:.1}"))
}

fn coherence(rows: &[AggregateRow]) -> CheckResult {
    let mut failures = Vec::new();
    for r in sorted(rows) {
        let trip = r.mean_trip_time_ms;
        let p = r.config.pull_interval() as f64;
        let ok = match (r.config.mode, trip) {
            (Mode::Push, Some(t)) => t < PUSH_TRIP_LIMIT_MS,
            (Mode::Pull, Some(t)) => (0.25 * p..=1.1 * p).contains(&t),
            (_, None) => false,
        };
        if !ok {
            failures.push(format!("{}: mean trip time {} ms", label(r), fmt_opt(trip)));
        }
    }
    for (push, pull) in paired(rows) {
        match (push.mean_trip_time_ms, pull.mean_trip_time_ms) {
            (Some(a), Some(b)) if a < b => {}
            (a, b) => failures.push(format!("{}: push {} ms not below pull {} ms", label(push), fmt_opt(a), fmt_opt(b))),
        }
    }
    CheckResult::new(1, "coherence", failures, format!("{} cells within trip-time bounds", rows.len()))
}

fn pull_overhead(rows: &[AggregateRow]) -> CheckResult {
    let mut failures = Vec::new();
    let Some(q_max) = rows.iter().map(|r| r.config.publish_interval_ms).max() else {
        return CheckResult::new(2, "pull overhead", vec!["no rows".into()], String::new());
    };
    let mut checked = 0;
    for r in sorted(rows).into_iter().filter(|r| r.config.publish_interval_ms == q_max) {
        checked += 1;
        let n = r.config.total_messages as f64;
        match r.config.mode {
            Mode::Push => {
                let exact = r.received_non_unique.is_some_and(|s| s.mean == n && s.stddev == 0.0);
                if !exact {
                    failures.push(format!("{}: non-unique {:?} (want exactly {n})", label(r), r.received_non_unique));
                }
            }
            Mode::Pull => {
                match &r.oracle {
                    Some(o) if o.max_dev_non_unique <= NON_UNIQUE_TOLERANCE => {}
                    Some(o) => failures.push(format!(
                        "{}: non-unique deviates from schedule replay by {} (expected mean {:.1})",
                        label(r),
                        o.max_dev_non_unique,
                        o.mean_expected_non_unique
                    )),
                    None => failures.push(format!("{}: no schedule replay", label(r))),
                }
                if !r.redundancy_ratio.is_some_and(|x| x > 2.0 / 3.0) {
                    failures.push(format!("{}: redundancy ratio {:?} not above 2/3", label(r), r.redundancy_ratio));
                }
            }
        }
    }
    CheckResult::new(2, "pull overhead", failures, format!("{checked} cells at q={q_max}ms nominal"))
}

fn data_misses(rows: &[AggregateRow]) -> CheckResult {
    let mut failures = Vec::new();
    let mut checked = 0;
    for r in sorted(rows).into_iter().filter(|r| r.config.mode == Mode::Pull) {
        let (q, p) = (r.config.publish_interval_ms, r.config.pull_interval_ms);
        let n = r.config.total_messages as f64;
        if q < p {
            checked += 1;
            match &r.oracle {
                Some(o) if o.max_dev_unique <= UNIQUE_TOLERANCE && r.mean_received_unique < n => {}
                Some(o) => failures.push(format!(
                    "{}: unique {:.2} vs replay {:.2} (max deviation {})",
                    label(r),
                    r.mean_received_unique,
                    o.mean_expected_unique,
                    o.max_dev_unique
                )),
                None => failures.push(format!("{}: no schedule replay", label(r))),
            }
        } else if q > p {
            checked += 1;
            if r.clients_with_all_items != r.config.clients as u64 {
                failures.push(format!(
                    "{}: {} of {} clients saw every item",
                    label(r),
                    r.clients_with_all_items,
                    r.config.clients
                ));
            }
        }
    }
    CheckResult::new(3, "data misses", failures, format!("{checked} pull cells match the schedule replay"))
}

fn push_completeness(rows: &[AggregateRow]) -> CheckResult {
    let mut failures = Vec::new();
    for r in sorted(rows).into_iter().filter(|r| r.config.mode == Mode::Push) {
        if r.duplicate_pairs > 0 {
            failures.push(format!("{}: {} duplicate (client, item) pairs", label(r), r.duplicate_pairs));
        }
        if r.config.clients <= COMPLETENESS_MAX_CLIENTS {
            let share = r.clients_with_all_items as f64 / r.config.clients as f64;
            if share < COMPLETENESS_SHARE {
                failures.push(format!("{}: only {:.1}% of clients saw every item", label(r), 100.0 * share));
            }
        }
    }
    CheckResult::new(4, "push completeness", failures, "no duplicates, complete delivery at moderate load".into())
}

fn cpu_direction(rows: &[AggregateRow]) -> CheckResult {
    let mut failures = Vec::new();
    for (push, pull) in paired(rows) {
        match (push.mean_cpu_percent, pull.mean_cpu_percent) {
            (Some(a), Some(b)) if a > b => {}
            (a, b) => failures.push(format!("{}: push cpu {} % not above pull {} %", label(push), fmt_opt(a), fmt_opt(b))),
        }
    }
    let mut by_interval: BTreeMap<u64, Vec<&AggregateRow>> = BTreeMap::new();
    for r in sorted(rows).into_iter().filter(|r| r.config.mode == Mode::Push) {
        by_interval.entry(r.config.publish_interval_ms).or_default().push(r);
    }
    for series in by_interval.values() {
        for w in series.windows(2) {
            if let (Some(a), Some(b)) = (w[0].mean_cpu_percent, w[1].mean_cpu_percent) {
                if b < a {
                    failures.push(format!("{} -> c={}: push cpu fell {a:.2} % -> {b:.2} %", label(w[0]), w[1].config.clients));
                }
            }
        }
    }
    CheckResult::new(5, "cpu direction", failures, "push above pull and non-decreasing in clients".into())
}

fn timeout_cycles(rows: &[AggregateRow]) -> CheckResult {
    let mut failures = Vec::new();
    let mut checked = 0;
    for r in sorted(rows).into_iter().filter(|r| r.config.mode == Mode::Push) {
        if r.config.publish_interval_ms <= r.config.long_poll_timeout_ms {
            continue;
        }
        checked += 1;
        let clients = r.config.clients as u64;
        let connects = r.server("connects");
        let delivers = r.server("deliversSent");
        let timeouts = r.server("heldTimeouts");
        let gaps = (r.config.total_messages as u64).saturating_sub(1);
        if connects * clients <= delivers || timeouts < gaps * clients {
            failures.push(format!(
                "{}: connects {connects}, deliversSent {delivers}, heldTimeouts {timeouts}",
                label(r)
            ));
        }
    }
    if checked == 0 {
        failures.push("no push cell with publish interval above the long-poll timeout".into());
    }
    CheckResult::new(6, "long-poll timeout cycles", failures, format!("{checked} cells show empty reconnect cycles"))
}

/// Evaluates the sweep-level checks over a set of rows. Error rows fail
/// every check they take part in.
pub fn evaluate_checks(rows: &[AggregateRow]) -> Vec<CheckResult> {
    let mut checks = vec![
        coherence(rows),
        pull_overhead(rows),
        data_misses(rows),
        push_completeness(rows),
        cpu_direction(rows),
        timeout_cycles(rows),
    ];
    let errors: Vec<String> = rows
        .iter()
        .filter_map(|r| r.error.as_ref().map(|e| format!("{}: {e}", r.run_id)))
        .collect();
    if !errors.is_empty() {
        for c in &mut checks {
            c.passed = false;
            c.details.extend(errors.iter().cloned());
        }
    }
    checks
}

fn summary(rows: &[AggregateRow], checks: &[CheckResult]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# Sweep summary\n");
    let _ = writeln!(s, "{} cells, {} error rows.\n", rows.len(), rows.iter().filter(|r| r.is_error()).count());

    let _ = writeln!(s, "## Checks\n");
    for c in checks {
        let _ = writeln!(s, "- [{}] {}. {}", if c.passed { "PASS" } else { "FAIL" }, c.criterion, c.name);
        for d in &c.details {
            let _ = writeln!(s, "  - {d}");
        }
    }

    let _ = writeln!(s, "\n## Push/pull CPU ratio\n");
    let _ = writeln!(s, "| clients | q (ms) | push % | pull % | ratio |");
    let _ = writeln!(s, "|---|---|---|---|---|");
    for (push, pull) in paired(rows) {
        let ratio = match (push.mean_cpu_percent, pull.mean_cpu_percent) {
            (Some(a), Some(b)) if b > 0.0 => format!("{:.2}", a / b),
            _ => "n/a".into(),
        };
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {ratio} |",
            push.config.clients,
            push.config.publish_interval(),
            fmt_opt(push.mean_cpu_percent),
            fmt_opt(pull.mean_cpu_percent)
        );
    }
    let peak = rows
        .iter()
        .filter(|r| r.config.mode == Mode::Push)
        .filter_map(|r| r.mean_cpu_percent.map(|c| (c, r.config.clients)))
        .fold(None, |acc: Option<(f64, u32)>, x| Some(acc.map_or(x, |a| if x.0 > a.0 { x } else { a })));
    if let Some((cpu, clients)) = peak {
        let _ = writeln!(
            s,
            "\nPeak push CPU {cpu:.1} % at {clients} clients on {} core(s); ratio and saturation are reported, not asserted.",
            sink::core_count()
        );
    }

    let _ = writeln!(s, "\n## Push regressions at low client counts\n");
    let mut any = false;
    for r in sorted(rows).into_iter().filter(|r| r.config.mode == Mode::Push && r.config.clients <= 100) {
        if r.mean_received_unique < r.config.total_messages as f64 {
            any = true;
            let _ = writeln!(
                s,
                "- REGRESSION {}: mean unique {:.2} < {}",
                label(r),
                r.mean_received_unique,
                r.config.total_messages
            );
        }
    }
    if !any {
        let _ = writeln!(s, "none");
    }

    let _ = writeln!(s, "\n## Measurement notes\n");
    let intervals: Vec<String> = {
        let mut q: Vec<u64> = rows.iter().map(|r| r.config.publish_interval_ms).collect();
        q.sort_unstable();
        q.dedup();
        q.iter().map(u64::to_string).collect()
    };
    let _ = writeln!(
        s,
        "- Publish intervals (nominal ms): {}. The experiment variable list names four intervals (5, 10, 15, 50 s) while the results use five (5, 10, 15, 20, 50 s); the five-value grid is used.",
        intervals.join(", ")
    );
    let _ = writeln!(s, "- Pull clients start at a uniform random phase in [0, pull interval), seeded per run.");
    let _ = writeln!(s, "- CPU is sampled for the server process only, from /proc, excluding the sampler itself.");
    let overhead: u64 = rows.iter().map(|r| r.sampler_overhead_us).sum();
    let gaps: u64 = rows.iter().map(|r| r.cpu_gaps).sum();
    let _ = writeln!(s, "- Sampler overhead across all runs: {overhead} us; sampling gaps over 2x period: {gaps}.");
    let _ = writeln!(
        s,
        "- Trip time is measured to the first receipt of each item per client; the all-receipts mean is in rows.json."
    );
    s
}

/// Writes the four figure tables, `rows.json` and `summary.md`.
pub fn emit_report(rows: &[AggregateRow], out_dir: &Path) -> Result<Vec<PathBuf>, LabError> {
    if rows.is_empty() {
        return Err(LabError::Report("no rows to report".into()));
    }
    fs::create_dir_all(out_dir)?;
    let ordered = sorted(rows);
    let paths: Vec<PathBuf> = REPORT_FILES.iter().map(|f| out_dir.join(f)).collect();
    write_figure(&paths[0], &ordered, |r| r.trip_time)?;
    write_figure(&paths[1], &ordered, |r| r.cpu)?;
    write_figure(&paths[2], &ordered, |r| r.received_non_unique)?;
    write_figure(&paths[3], &ordered, |r| r.received_unique)?;
    let json = serde_json::to_vec_pretty(&ordered).map_err(|e| LabError::Report(e.to_string()))?;
    fs::write(&paths[4], json)?;
    fs::write(&paths[5], summary(rows, &evaluate_checks(rows)))?;
    Ok(paths)
}

/// Aggregates every run directory under `dir`, complete or not.
pub fn load_runs(dir: &Path) -> Result<Vec<AggregateRow>, LabError> {
    let mut rows = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if !path.join(sink::COUNTERS_FILE).is_file() {
            continue;
        }
        let dataset = sink::load(&path)?;
        rows.push(aggregate(&dataset)?);
    }
    rows.sort_by_key(sort_key);
    Ok(rows)
}
