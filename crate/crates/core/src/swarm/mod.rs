//! Simulated browser clients, in push (long-poll) or pull (fixed-rate poll)
//! mode, streaming one [`ReceiptRecord`] per received item to a sink.

mod emitter;
mod pull_client;
mod push_client;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use tokio::time::Instant;
use tokio_util::sync::CancellationToken;

pub use emitter::{Emitter, EmitterTask, SinkTarget};
pub use pull_client::pull_client_loop;
pub use push_client::push_client_loop;

use crate::bayeux::ChannelName;
use crate::item::Mode;

const EMIT_BUFFER: usize = 1 << 16;
pub const IO_BACKOFF: Duration = Duration::from_millis(1_000);

#[derive(Debug, Clone)]
pub struct SwarmConfig {
    pub run_id: String,
    pub mode: Mode,
    pub clients: u32,
    pub server_url: String,
    pub channel: ChannelName,
    pub pull_interval_ms: u64,
    pub run_duration_ms: u64,
    pub sink: SinkTarget,
    /// Defaults to `min(2000, clients * 5)` ms.
    pub ramp_up_ms: Option<u64>,
    /// Seeds the per-client pull phase offsets.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SwarmError {
    #[error("invalid swarm config: {0}")]
    InvalidConfig(String),
    #[error("sink unavailable: {0}")]
    Sink(String),
}

impl SwarmConfig {
    pub fn validate(&self) -> Result<(), SwarmError> {
        if self.clients == 0 {
            return Err(SwarmError::InvalidConfig("clients must be >= 1".into()));
        }
        if self.mode == Mode::Pull && self.pull_interval_ms == 0 {
            return Err(SwarmError::InvalidConfig("pull mode requires pullIntervalMs > 0".into()));
        }
        if self.channel.is_meta() {
            return Err(SwarmError::InvalidConfig("clients cannot use meta channels".into()));
        }
        Ok(())
    }

    pub fn ramp_up(&self) -> u64 {
        self.ramp_up_ms.unwrap_or_else(|| (self.clients as u64 * 5).min(2_000))
    }

    /// Start offset of client `idx` within the ramp-up window.
    pub fn ramp_offset(&self, idx: u32) -> Duration {
        Duration::from_millis(self.ramp_up() * idx as u64 / self.clients.max(1) as u64)
    }

    pub fn base_url(&self) -> &str {
        self.server_url.trim_end_matches('/')
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SwarmSummary {
    /// Wall-clock time the client schedules are anchored to.
    pub start_ts: i64,
    pub records_emitted: u64,
    pub records_dropped: u64,
    pub clients_completed: u64,
    pub errors: u64,
    pub requests: u64,
}

/// Shared per-run state handed to every client loop.
#[derive(Clone)]
pub struct ClientContext {
    pub config: Arc<SwarmConfig>,
    pub http: reqwest::Client,
    pub emitter: Emitter,
    pub stop: CancellationToken,
    pub deadline: Instant,
    pub errors: Arc<AtomicU64>,
    pub requests: Arc<AtomicU64>,
}

impl ClientContext {
    pub fn count_error(&self) {
        self.errors.fetch_add(1, Ordering::Relaxed);
    }

    pub fn count_request(&self) {
        self.requests.fetch_add(1, Ordering::Relaxed);
    }

    /// Sleeps until `at`, returning false when the run ends first.
    pub async fn sleep_until(&self, at: Instant) -> bool {
        if at >= self.deadline {
            tokio::select! {
                _ = self.stop.cancelled() => {}
                _ = tokio::time::sleep_until(self.deadline) => {}
            }
            return false;
        }
        tokio::select! {
            _ = self.stop.cancelled() => false,
            _ = tokio::time::sleep_until(at) => true,
        }
    }

    pub fn running(&self) -> bool {
        !self.stop.is_cancelled() && Instant::now() < self.deadline
    }
}

pub fn http_client(clients: u32) -> reqwest::Client {
    reqwest::Client::builder()
        .pool_max_idle_per_host(clients as usize * 2 + 8)
        .tcp_nodelay(true)
        .build()
        .expect("http client")
}

/// Phase offset of each pull client, added on top of its ramp-up offset.
///
/// Each client's poll grid position relative to swarm start is uniform in
/// `[0, pull_interval_ms)`; positions are stratified so the `clients` grids
/// cover the interval evenly, one per `1/clients` slice in shuffled order.
pub fn pull_phase_offsets(seed: u64, clients: u32, pull_interval_ms: u64, ramp_up_ms: u64) -> Vec<u64> {
    if pull_interval_ms == 0 {
        return vec![0; clients as usize];
    }
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    let n = clients.max(1) as u64;
    let mut slots: Vec<u64> =
        (0..n).map(|k| (k * pull_interval_ms + rng.random_range(0..pull_interval_ms)) / n).collect();
    slots.shuffle(&mut rng);
    slots
        .into_iter()
        .enumerate()
        .map(|(idx, slot)| {
            let ramp_offset = ramp_up_ms * idx as u64 / n;
            (slot + pull_interval_ms - ramp_offset % pull_interval_ms) % pull_interval_ms
        })
        .collect()
}

/// Runs the swarm until `run_duration_ms` elapses or `stop` is cancelled.
pub async fn run_swarm(config: SwarmConfig, stop: CancellationToken) -> Result<SwarmSummary, SwarmError> {
    config.validate()?;
    let (emitter, task) = Emitter::open(&config.sink, EMIT_BUFFER)
        .await
        .map_err(|e| SwarmError::Sink(format!("{}: {e}", config.sink)))?;

    let start = Instant::now();
    let start_ts = crate::clock::now_ms();
    let deadline = start + Duration::from_millis(config.run_duration_ms);
    let ctx = ClientContext {
        http: http_client(config.clients),
        config: Arc::new(config),
        emitter,
        stop,
        deadline,
        errors: Arc::new(AtomicU64::new(0)),
        requests: Arc::new(AtomicU64::new(0)),
    };

    let phases = pull_phase_offsets(ctx.config.seed, ctx.config.clients, ctx.config.pull_interval_ms, ctx.config.ramp_up());
    let mut handles = Vec::with_capacity(ctx.config.clients as usize);
    for idx in 0..ctx.config.clients {
        let begin = start + ctx.config.ramp_offset(idx);
        let ctx = ctx.clone();
        let handle = match ctx.config.mode {
            Mode::Push => tokio::spawn(async move {
                if ctx.sleep_until(begin).await {
                    push_client_loop(idx, &ctx).await
                } else {
                    0
                }
            }),
            Mode::Pull => {
                let begin = begin + Duration::from_millis(phases[idx as usize]);
                tokio::spawn(async move { pull_client_loop(idx, begin, &ctx).await })
            }
        };
        handles.push(handle);
    }

    let mut completed = 0;
    for h in handles {
        match h.await {
            Ok(_) => completed += 1,
            Err(e) => {
                tracing::error!("client task failed: {e}");
                ctx.count_error();
            }
        }
    }

    let errors = ctx.errors.load(Ordering::Relaxed);
    let requests = ctx.requests.load(Ordering::Relaxed);
    drop(ctx);
    let (written, dropped) = task.finish().await.map_err(|e| SwarmError::Sink(e.to_string()))?;
    Ok(SwarmSummary {
        start_ts,
        records_emitted: written,
        records_dropped: dropped,
        clients_completed: completed,
        errors,
        requests,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(clients: u32) -> SwarmConfig {
        SwarmConfig {
            run_id: "r".into(),
            mode: Mode::Pull,
            clients,
            server_url: "http://127.0.0.1:1/".into(),
            channel: "/stock/AAPL".parse().unwrap(),
            pull_interval_ms: 100,
            run_duration_ms: 1_000,
            sink: SinkTarget::File("/dev/null".into()),
            ramp_up_ms: None,
            seed: 1,
        }
    }

    #[test]
    fn default_ramp_up() {
        assert_eq!(config(100).ramp_up(), 500);
        assert_eq!(config(1000).ramp_up(), 2_000);
        assert_eq!(config(100).ramp_offset(50), Duration::from_millis(250));
        assert_eq!(config(1).base_url(), "http://127.0.0.1:1");
    }

    #[test]
    fn validation() {
        assert!(config(0).validate().is_err());
        let mut c = config(1);
        c.pull_interval_ms = 0;
        assert!(c.validate().is_err());
        c.mode = Mode::Push;
        assert!(c.validate().is_ok());
    }

    #[test]
    fn pull_grids_are_stratified() {
        let (clients, p, ramp) = (50u32, 1_500u64, 250u64);
        let phases = pull_phase_offsets(9, clients, p, ramp);
        let mut slices: Vec<u64> = phases
            .iter()
            .enumerate()
            .map(|(idx, phase)| {
                assert!(*phase < p);
                (ramp * idx as u64 / clients as u64 + phase) % p * clients as u64 / p
            })
            .collect();
        slices.sort();
        assert_eq!(slices, (0..clients as u64).collect::<Vec<_>>());
        assert_eq!(phases, pull_phase_offsets(9, clients, p, ramp));
    }
}
