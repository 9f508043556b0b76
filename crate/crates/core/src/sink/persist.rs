//! On-disk layout of one run: `<out>/<runId>/{receipts.ndjson, cpu.ndjson,
//! config.json, counters.json}`. `counters.json` is written last and marks
//! the run directory as complete.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::CpuSample;
use crate::item::ReceiptRecord;
use crate::publisher::PublishLogEntry;
use crate::swarm::SwarmSummary;

pub const RECEIPTS_FILE: &str = "receipts.ndjson";
pub const CPU_FILE: &str = "cpu.ndjson";
pub const CONFIG_FILE: &str = "config.json";
pub const COUNTERS_FILE: &str = "counters.json";

pub type ServerCounters = BTreeMap<String, u64>;

#[derive(Debug, thiserror::Error)]
pub enum PersistError {
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("bad json in {path} line {line}: {source}")]
    Json { path: PathBuf, line: usize, source: serde_json::Error },
}

/// Everything recorded about a run besides receipts and CPU samples.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunCounters {
    pub server_before: ServerCounters,
    pub server_after: ServerCounters,
    pub ingest_accepted: u64,
    pub ingest_malformed: u64,
    #[serde(default)]
    pub swarm: Option<SwarmSummary>,
    #[serde(default)]
    pub publish_log: Vec<PublishLogEntry>,
    /// Wall-clock start of the swarm, used to rebuild pull schedules.
    #[serde(default)]
    pub swarm_start_ts: Option<i64>,
    #[serde(default)]
    pub swarm_stop_ts: Option<i64>,
    pub cpu_period_ms: u64,
    pub cpu_gaps: u64,
    pub sampler_overhead_us: u64,
    /// False when the run aborted and the dataset is partial.
    pub complete: bool,
    #[serde(default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunDataset {
    pub run_id: String,
    pub config: Value,
    pub receipts: Vec<ReceiptRecord>,
    pub cpu: Vec<CpuSample>,
    pub counters: RunCounters,
}

impl RunDataset {
    pub fn new(run_id: impl Into<String>, config: Value) -> Self {
        Self {
            run_id: run_id.into(),
            config,
            receipts: Vec::new(),
            cpu: Vec::new(),
            counters: RunCounters::default(),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PersistError + '_ {
    move |source| PersistError::Io { path: path.to_owned(), source }
}

fn write_ndjson<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), PersistError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for row in rows {
        serde_json::to_writer(&mut w, row)
            .map_err(|e| PersistError::Json { path: path.to_owned(), line: 0, source: e })?;
        w.write_all(b"\n").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

fn read_ndjson<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, PersistError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let row = serde_json::from_str(&line)
            .map_err(|e| PersistError::Json { path: path.to_owned(), line: i + 1, source: e })?;
        rows.push(row);
    }
    Ok(rows)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PersistError> {
    let bytes = serde_json::to_vec_pretty(value)
        .map_err(|e| PersistError::Json { path: path.to_owned(), line: 0, source: e })?;
    fs::write(path, bytes).map_err(io_err(path))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, PersistError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    serde_json::from_slice(&bytes).map_err(|e| PersistError::Json { path: path.to_owned(), line: 0, source: e })
}

pub fn run_dir(out_dir: &Path, run_id: &str) -> PathBuf {
    out_dir.join(run_id)
}

/// Writes the dataset under `out_dir/<runId>/` and returns the file paths.
pub fn persist(dataset: &RunDataset, out_dir: &Path) -> Result<Vec<PathBuf>, PersistError> {
    let dir = run_dir(out_dir, &dataset.run_id);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let counters = dir.join(COUNTERS_FILE);
    // an existing marker would make a half-written rerun look complete
    if counters.exists() {
        fs::remove_file(&counters).map_err(io_err(&counters))?;
    }

    let receipts = dir.join(RECEIPTS_FILE);
    let cpu = dir.join(CPU_FILE);
    let config = dir.join(CONFIG_FILE);
    write_ndjson(&receipts, &dataset.receipts)?;
    write_ndjson(&cpu, &dataset.cpu)?;
    write_json(&config, &dataset.config)?;
    write_json(&counters, &dataset.counters)?;
    Ok(vec![receipts, cpu, config, counters])
}

pub fn load(run_dir: &Path) -> Result<RunDataset, PersistError> {
    let run_id = run_dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(RunDataset {
        run_id,
        receipts: read_ndjson(&run_dir.join(RECEIPTS_FILE))?,
        cpu: read_ndjson(&run_dir.join(CPU_FILE))?,
        config: read_json(&run_dir.join(CONFIG_FILE))?,
        counters: read_json(&run_dir.join(COUNTERS_FILE))?,
    })
}

/// True when `run_dir` holds a finished, non-aborted run.
pub fn is_complete(run_dir: &Path) -> bool {
    read_json::<RunCounters>(&run_dir.join(COUNTERS_FILE)).is_ok_and(|c| c.complete)
}
