//! Per-process CPU sampling from `/proc/<pid>/stat`, in the spirit of `top`.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use tokio::time::Instant;
use tokio_util::sync::CancellationToken;

use crate::clock::now_ms;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CpuSample {
    pub ts: i64,
    /// Percent of one core; may exceed 100 on multi-core hosts.
    pub process_cpu_percent: f64,
    pub process_rss_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CpuError {
    #[error("process {0} is gone")]
    ProcessGone(u32),
    #[error("cannot parse /proc/{0}/stat")]
    Unparsable(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProcTimes {
    /// utime + stime in clock ticks.
    pub cpu_ticks: u64,
    pub rss_bytes: u64,
}

/// Samples collected for one process plus the sampler's own cost.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CpuRun {
    pub samples: Vec<CpuSample>,
    pub sampler_overhead_us: u64,
}

fn clock_ticks_per_sec() -> f64 {
    // SAFETY: sysconf has no preconditions.
    let v = unsafe { libc::sysconf(libc::_SC_CLK_TCK) };
    if v > 0 { v as f64 } else { 100.0 }
}

fn page_size() -> u64 {
    // SAFETY: sysconf has no preconditions.
    let v = unsafe { libc::sysconf(libc::_SC_PAGESIZE) };
    if v > 0 { v as u64 } else { 4096 }
}

pub fn core_count() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Parses the contents of `/proc/<pid>/stat`.
pub fn parse_stat(pid: u32, stat: &str) -> Result<ProcTimes, CpuError> {
    // comm may contain spaces and parentheses; fields resume after the last ')'
    let rest = stat.rfind(')').map(|i| &stat[i + 1..]).ok_or(CpuError::Unparsable(pid))?;
    let fields: Vec<&str> = rest.split_whitespace().collect();
    // fields[0] is the state (field 3 of proc(5))
    let state = fields.first().ok_or(CpuError::Unparsable(pid))?;
    if *state == "Z" || *state == "X" {
        return Err(CpuError::ProcessGone(pid));
    }
    let field = |n: usize| -> Result<u64, CpuError> {
        fields
            .get(n - 3)
            .and_then(|s| s.parse().ok())
            .ok_or(CpuError::Unparsable(pid))
    };
    Ok(ProcTimes {
        cpu_ticks: field(14)? + field(15)?,
        rss_bytes: field(24)? * page_size(),
    })
}

pub fn read_proc_times(pid: u32) -> Result<ProcTimes, CpuError> {
    let stat = std::fs::read_to_string(format!("/proc/{pid}/stat")).map_err(|_| CpuError::ProcessGone(pid))?;
    parse_stat(pid, &stat)
}

/// Samples `pid` every `period_ms` until `stop` fires or the process exits.
///
/// Fails with [`CpuError::ProcessGone`] only if the process is already gone
/// at the first reading; a later exit just ends the series.
pub async fn sample_cpu(pid: u32, period_ms: u64, stop: CancellationToken) -> Result<CpuRun, CpuError> {
    let ticks_per_sec = clock_ticks_per_sec();
    let period = Duration::from_millis(period_ms.max(1));
    let mut overhead = Duration::ZERO;

    let t = Instant::now();
    let mut prev = read_proc_times(pid)?;
    overhead += t.elapsed();
    let mut prev_at = Instant::now();
    let mut last_ts = i64::MIN;
    let mut run = CpuRun::default();

    let mut tick = tokio::time::interval_at(prev_at + period, period);
    tick.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    loop {
        tokio::select! {
            _ = stop.cancelled() => break,
            _ = tick.tick() => {}
        }
        let t = Instant::now();
        let Ok(cur) = read_proc_times(pid) else { break };
        let at = Instant::now();
        overhead += at - t;

        let wall = (at - prev_at).as_secs_f64();
        let cpu_secs = cur.cpu_ticks.saturating_sub(prev.cpu_ticks) as f64 / ticks_per_sec;
        let percent = if wall > 0.0 { 100.0 * cpu_secs / wall } else { 0.0 };
        let ts = now_ms().max(last_ts + 1);
        last_ts = ts;
        run.samples.push(CpuSample {
            ts,
            process_cpu_percent: percent.min(100.0 * core_count() as f64),
            process_rss_bytes: cur.rss_bytes,
        });
        prev = cur;
        prev_at = at;
    }
    run.sampler_overhead_us = overhead.as_micros() as u64;
    Ok(run)
}

/// Number of sampling gaps longer than twice the period.
pub fn count_gaps(samples: &[CpuSample], period_ms: u64) -> usize {
    samples
        .windows(2)
        .filter(|w| w[1].ts - w[0].ts > 2 * period_ms as i64)
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_stat_line_with_odd_comm() {
        let line = "1234 (my (odd) proc) S 1 1234 1234 0 -1 4194560 100 0 0 0 250 50 0 0 20 0 4 0 100 1000000 300 18446744073709551615";
        let t = parse_stat(1234, line).unwrap();
        assert_eq!(t.cpu_ticks, 300);
        assert_eq!(t.rss_bytes, 300 * page_size());
    }

    #[test]
    fn zombie_counts_as_gone() {
        let line = "9 (x) Z 1 1 1 0 -1 0 0 0 0 0 1 1 0 0 20 0 1 0 1 0 0 0";
        assert_eq!(parse_stat(9, line), Err(CpuError::ProcessGone(9)));
    }

    #[test]
    fn own_process_is_readable() {
        let t = read_proc_times(std::process::id()).unwrap();
        assert!(t.rss_bytes > 0);
    }

    #[test]
    fn gaps() {
        let s = |ts| CpuSample { ts, process_cpu_percent: 0.0, process_rss_bytes: 0 };
        assert_eq!(count_gaps(&[s(0), s(1000), s(2000), s(4500)], 1000), 1);
    }
}
