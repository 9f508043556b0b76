use std::path::{Path, PathBuf};
use std::process::Stdio;
use std::time::Duration;

use tokio::io::{AsyncBufReadExt, BufReader};
use tokio::process::{Child, Command};
use tokio::time::Instant;
use tokio_util::sync::CancellationToken;

use super::{aggregate, AggregateRow, ExperimentConfig, LabError};
use crate::clock::now_ms;
use crate::item::Mode;
use crate::publisher::{run_publisher, PublisherConfig};
use crate::sink::{self, count_gaps, sample_cpu, RunDataset, ServerCounters, StatsSink};
use crate::swarm::{run_swarm, SinkTarget, SwarmConfig};

const STARTUP_TIMEOUT: Duration = Duration::from_secs(10);
const SUBSCRIBE_GRACE: Duration = Duration::from_secs(10);
const INGEST_GRACE: Duration = Duration::from_secs(5);

/// Where server binaries live and where run directories go.
#[derive(Debug, Clone)]
pub struct LabEnv {
    pub bin_dir: PathBuf,
    pub out_dir: PathBuf,
    /// Kills the server this long after it starts (fault injection).
    pub kill_server_after: Option<Duration>,
}

impl LabEnv {
    pub fn new(bin_dir: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        Self { bin_dir: bin_dir.into(), out_dir: out_dir.into(), kill_server_after: None }
    }

    /// Looks for server binaries next to the running executable.
    pub fn beside_current_exe(out_dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let exe = std::env::current_exe()?;
        let mut dir = exe.parent().map(Path::to_path_buf).unwrap_or_default();
        if dir.ends_with("deps") {
            dir.pop();
        }
        Ok(Self::new(dir, out_dir))
    }

    fn binary(&self, name: &str) -> PathBuf {
        self.bin_dir.join(name)
    }
}

struct ServerProcess {
    child: Child,
    pid: u32,
    base_url: String,
}

async fn spawn_server(config: &ExperimentConfig, env: &LabEnv) -> Result<ServerProcess, LabError> {
    let mut cmd = match config.mode {
        Mode::Push => {
            let timeout = config.long_poll_timeout();
            let mut cmd = Command::new(env.binary("push-server"));
            cmd.args(["--port", "0"])
                .args(["--timeout-ms", &timeout.to_string()])
                .args(["--outbox-capacity", &config.outbox_capacity.to_string()])
                .args(["--session-grace-ms", &(2 * timeout).to_string()]);
            cmd
        }
        Mode::Pull => {
            let mut cmd = Command::new(env.binary("pull-server"));
            cmd.args(["--port", "0"]);
            cmd
        }
    };
    cmd.stdin(Stdio::null()).stdout(Stdio::piped()).stderr(Stdio::inherit()).kill_on_drop(true);
    let mut child = cmd
        .spawn()
        .map_err(|e| LabError::ComponentStart(format!("{} server: {e}", config.mode)))?;
    let pid = child.id().ok_or_else(|| LabError::ComponentStart("server exited at spawn".into()))?;
    let stdout = child.stdout.take().expect("piped stdout");
    let mut lines = BufReader::new(stdout).lines();

    let addr = tokio::time::timeout(STARTUP_TIMEOUT, async {
        while let Some(line) = lines.next_line().await? {
            if let Some(addr) = line.strip_prefix("listening on ") {
                return Ok(Some(addr.trim().to_owned()));
            }
        }
        Ok::<_, std::io::Error>(None)
    })
    .await
    .map_err(|_| LabError::ComponentStart(format!("{} server did not report its address", config.mode)))??
    .ok_or_else(|| LabError::ComponentStart(format!("{} server exited before listening", config.mode)))?;

    // keep the pipe drained so a chatty child never blocks
    tokio::spawn(async move { while let Ok(Some(_)) = lines.next_line().await {} });
    Ok(ServerProcess { child, pid, base_url: format!("http://{addr}") })
}

async fn fetch_counters(http: &reqwest::Client, base_url: &str) -> Option<ServerCounters> {
    let resp = http.get(format!("{base_url}/counters")).send().await.ok()?;
    let value: serde_json::Value = resp.json().await.ok()?;
    let map = value.as_object()?;
    Some(map.iter().filter_map(|(k, v)| Some((k.clone(), v.as_u64()?))).collect())
}

async fn wait_for_subscribers(http: &reqwest::Client, base_url: &str, clients: u32, before: u64, limit: Instant) {
    loop {
        let subscribes = fetch_counters(http, base_url)
            .await
            .and_then(|c| c.get("subscribes").copied())
            .unwrap_or(0);
        if subscribes.saturating_sub(before) >= clients as u64 {
            return;
        }
        if Instant::now() >= limit {
            tracing::warn!("only {} of {clients} clients subscribed before publishing", subscribes - before);
            return;
        }
        tokio::time::sleep(Duration::from_millis(25)).await;
    }
}

/// Runs one cell: sink, server, swarm, publisher, drain, teardown, persist.
/// An aborted run is persisted as a partial dataset before the error returns.
pub async fn run_experiment(config: &ExperimentConfig, env: &LabEnv) -> Result<RunDataset, LabError> {
    config.validate()?;
    let run_id = config.run_id();
    let channel = config.channel()?;
    let q = config.publish_interval();
    let n = config.total_messages as u64;
    let drain = config.drain();
    let ramp = config.ramp_up();
    tracing::info!("run {run_id}");

    let stop_sink = CancellationToken::new();
    let stats = StatsSink::new();
    let (sink_addr, sink_task) = stats.listen(([127, 0, 0, 1], 0).into(), stop_sink.clone()).await?;

    let mut server = spawn_server(config, env).await?;
    let http = reqwest::Client::builder()
        .pool_max_idle_per_host(4)
        .build()
        .map_err(|e| LabError::ComponentStart(format!("http client: {e}")))?;

    let stop_cpu = CancellationToken::new();
    let cpu_task = tokio::spawn(sample_cpu(server.pid, config.cpu_period_ms, stop_cpu.clone()));
    let server_before = fetch_counters(&http, &server.base_url)
        .await
        .ok_or_else(|| LabError::ComponentStart("server counters unreachable".into()))?;

    let stop_swarm = CancellationToken::new();
    let swarm_config = SwarmConfig {
        run_id: run_id.clone(),
        mode: config.mode,
        clients: config.clients,
        server_url: server.base_url.clone(),
        channel: channel.clone(),
        pull_interval_ms: config.pull_interval(),
        // the runner stops the swarm; this is only a backstop
        run_duration_ms: ramp + SUBSCRIBE_GRACE.as_millis() as u64 + n * q + drain + 60_000,
        sink: SinkTarget::Tcp(sink_addr),
        ramp_up_ms: Some(ramp),
        seed: config.seed,
    };
    let swarm_task = tokio::spawn(run_swarm(swarm_config, stop_swarm.clone()));

    let ramp_done = Instant::now() + Duration::from_millis(ramp);
    tokio::time::sleep_until(ramp_done).await;
    if config.mode == Mode::Push {
        let before = server_before.get("subscribes").copied().unwrap_or(0);
        wait_for_subscribers(&http, &server.base_url, config.clients, before, ramp_done + SUBSCRIBE_GRACE).await;
    }

    let publisher = PublisherConfig {
        target: server.base_url.clone(),
        channel,
        total_messages: config.total_messages,
        publish_interval_ms: q,
    };
    let publish_start = Instant::now();
    let publish_task = {
        let http = http.clone();
        tokio::spawn(async move { run_publisher(&publisher, &http).await })
    };
    let end = publish_start + Duration::from_millis(n * q + drain);
    let kill_at = env.kill_server_after.map(|d| publish_start + d);

    let mut abort = None;
    tokio::select! {
        _ = tokio::time::sleep_until(end) => {}
        status = server.child.wait() => {
            abort = Some(format!("server exited mid-run: {status:?}"));
        }
        _ = async {
            match kill_at {
                Some(at) => tokio::time::sleep_until(at).await,
                None => std::future::pending().await,
            }
        } => {
            let _ = server.child.start_kill();
            let status = server.child.wait().await;
            abort = Some(format!("server killed mid-run: {status:?}"));
        }
    }

    stop_swarm.cancel();
    let swarm_stop_ts = now_ms();
    let server_after = if abort.is_none() { fetch_counters(&http, &server.base_url).await } else { None };
    stop_cpu.cancel();
    if abort.is_none() {
        if let Ok(Some(status)) = server.child.try_wait() {
            abort = Some(format!("server exited mid-run: {status}"));
        }
    }
    let _ = server.child.kill().await;

    let swarm = match swarm_task.await {
        Ok(Ok(summary)) => Some(summary),
        Ok(Err(e)) => {
            abort.get_or_insert(format!("swarm: {e}"));
            None
        }
        Err(e) => {
            abort.get_or_insert(format!("swarm task: {e}"));
            None
        }
    };
    let publish_log = match publish_task.await {
        Ok(Ok(log)) => log,
        Ok(Err(e)) => {
            abort.get_or_insert(format!("publisher: {e}"));
            Vec::new()
        }
        Err(e) => {
            abort.get_or_insert(format!("publisher task: {e}"));
            Vec::new()
        }
    };
    let cpu = match cpu_task.await {
        Ok(Ok(run)) => run,
        Ok(Err(e)) => {
            abort.get_or_insert(format!("cpu sampler: {e}"));
            Default::default()
        }
        Err(e) => {
            abort.get_or_insert(format!("cpu sampler task: {e}"));
            Default::default()
        }
    };

    let expected = swarm.map_or(0, |s| s.records_emitted);
    let ingest_limit = Instant::now() + INGEST_GRACE;
    while stats.accepted() + stats.malformed() < expected && Instant::now() < ingest_limit {
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
    stop_sink.cancel();
    let _ = sink_task.await;

    let mut dataset = RunDataset::new(
        run_id.clone(),
        serde_json::to_value(config).expect("config serializes"),
    );
    dataset.receipts = stats.take_receipts();
    let c = &mut dataset.counters;
    c.server_before = server_before;
    c.server_after = server_after.unwrap_or_default();
    c.ingest_accepted = stats.accepted();
    c.ingest_malformed = stats.malformed();
    c.swarm = swarm;
    c.publish_log = publish_log;
    c.swarm_start_ts = swarm.map(|s| s.start_ts);
    c.swarm_stop_ts = Some(swarm_stop_ts);
    c.cpu_period_ms = config.cpu_period_ms;
    c.cpu_gaps = count_gaps(&cpu.samples, config.cpu_period_ms) as u64;
    c.sampler_overhead_us = cpu.sampler_overhead_us;
    c.complete = abort.is_none();
    c.error = abort.clone();
    dataset.cpu = cpu.samples;

    sink::persist(&dataset, &env.out_dir)?;
    match abort {
        Some(reason) => Err(LabError::Aborted { run_id, reason }),
        None => Ok(dataset),
    }
}

#[derive(Debug, Clone, Default)]
pub struct SweepOutcome {
    /// One row per grid cell, in grid order.
    pub rows: Vec<AggregateRow>,
    /// Cells that were actually run (completed cells on disk are reused).
    pub executed: usize,
}

/// Runs cells one after another so CPU measurements never overlap.
pub async fn sweep(grid: &[ExperimentConfig], env: &LabEnv) -> Result<SweepOutcome, LabError> {
    if grid.is_empty() {
        return Err(LabError::InvalidConfig("empty grid".into()));
    }
    let mut outcome = SweepOutcome::default();
    for config in grid {
        let dir = sink::run_dir(&env.out_dir, &config.run_id());
        if sink::is_complete(&dir) {
            let row = sink::load(&dir)
                .map_err(LabError::from)
                .and_then(|d| aggregate(&d))
                .unwrap_or_else(|e| AggregateRow::failed(config.clone(), e.to_string()));
            outcome.rows.push(row);
            continue;
        }
        outcome.executed += 1;
        let row = match run_experiment(config, env).await {
            Ok(dataset) => aggregate(&dataset).unwrap_or_else(|e| AggregateRow::failed(config.clone(), e.to_string())),
            Err(e) => {
                tracing::error!("{}: {e}", config.run_id());
                AggregateRow::failed(config.clone(), e.to_string())
            }
        };
        outcome.rows.push(row);
    }
    Ok(outcome)
}
