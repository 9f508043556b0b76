use serde::{Deserialize, Serialize};

use super::LabError;
use crate::bayeux::ChannelName;
use crate::item::Mode;

pub const DEFAULT_CHANNEL: &str = "/stock/AAPL";
pub const FULL_CLIENTS: [u32; 5] = [100, 200, 350, 500, 1000];
pub const FULL_PUBLISH_INTERVALS_MS: [u64; 5] = [5_000, 10_000, 15_000, 20_000, 50_000];
pub const FULL_PULL_INTERVAL_MS: u64 = 15_000;
pub const FULL_LONG_POLL_TIMEOUT_MS: u64 = 45_000;
pub const FULL_TOTAL_MESSAGES: u32 = 10;
pub const DESK_TIME_SCALE: u64 = 10;
pub const DESK_CLIENTS: [u32; 3] = [25, 50, 100];

fn default_channel() -> String {
    DEFAULT_CHANNEL.to_owned()
}

fn default_outbox() -> usize {
    16
}

fn default_cpu_period() -> u64 {
    1_000
}

/// One sweep cell. Interval fields hold nominal (full-scale) values that are
/// divided by `timeScale` when the run executes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub clients: u32,
    pub publish_interval_ms: u64,
    pub pull_interval_ms: u64,
    pub total_messages: u32,
    pub long_poll_timeout_ms: u64,
    pub time_scale: u64,
    pub seed: u64,
    #[serde(default = "default_channel")]
    pub channel: String,
    #[serde(default = "default_outbox")]
    pub outbox_capacity: usize,
    /// CPU sampling period in real (unscaled) milliseconds.
    #[serde(default = "default_cpu_period")]
    pub cpu_period_ms: u64,
}

impl ExperimentConfig {
    pub fn new(mode: Mode, clients: u32, publish_interval_ms: u64) -> Self {
        Self {
            mode,
            clients,
            publish_interval_ms,
            pull_interval_ms: FULL_PULL_INTERVAL_MS,
            total_messages: FULL_TOTAL_MESSAGES,
            long_poll_timeout_ms: FULL_LONG_POLL_TIMEOUT_MS,
            time_scale: 1,
            seed: 1,
            channel: default_channel(),
            outbox_capacity: default_outbox(),
            cpu_period_ms: default_cpu_period(),
        }
    }

    pub fn scaled(mut self, time_scale: u64) -> Self {
        self.time_scale = time_scale;
        self
    }

    pub fn validate(&self) -> Result<(), LabError> {
        let bad = |msg: String| Err(LabError::InvalidConfig(msg));
        if self.clients == 0 {
            return bad("clients must be >= 1".into());
        }
        if self.total_messages == 0 {
            return bad("totalMessages must be >= 1".into());
        }
        if self.time_scale == 0 {
            return bad("timeScale must be >= 1".into());
        }
        for (name, v) in [
            ("publishIntervalMs", self.publish_interval_ms),
            ("pullIntervalMs", self.pull_interval_ms),
            ("longPollTimeoutMs", self.long_poll_timeout_ms),
        ] {
            if v == 0 {
                return bad(format!("{name} must be > 0"));
            }
            if v % self.time_scale != 0 {
                return bad(format!("{name}={v} is not divisible by timeScale={}", self.time_scale));
            }
        }
        let channel = self.channel()?;
        if channel.is_wildcard() || channel.is_meta() {
            return bad(format!("channel {channel} must be a concrete event channel"));
        }
        Ok(())
    }

    pub fn channel(&self) -> Result<ChannelName, LabError> {
        ChannelName::parse(&self.channel).map_err(|e| LabError::InvalidConfig(e.to_string()))
    }

    pub fn publish_interval(&self) -> u64 {
        self.publish_interval_ms / self.time_scale.max(1)
    }

    pub fn pull_interval(&self) -> u64 {
        self.pull_interval_ms / self.time_scale.max(1)
    }

    pub fn long_poll_timeout(&self) -> u64 {
        self.long_poll_timeout_ms / self.time_scale.max(1)
    }

    /// Time kept after the publishing window so trailing deliveries arrive.
    pub fn drain(&self) -> u64 {
        2 * self.pull_interval().max(self.long_poll_timeout())
    }

    pub fn ramp_up(&self) -> u64 {
        (self.clients as u64 * 5).min(2_000)
    }

    pub fn run_id(&self) -> String {
        format!(
            "{}-c{}-q{}-p{}-n{}-t{}-x{}-s{}",
            self.mode,
            self.clients,
            self.publish_interval_ms,
            self.pull_interval_ms,
            self.total_messages,
            self.long_poll_timeout_ms,
            self.time_scale,
            self.seed
        )
    }
}

/// Both modes crossed with the given clients and publish intervals.
pub fn grid(clients: &[u32], publish_intervals_ms: &[u64], time_scale: u64) -> Vec<ExperimentConfig> {
    let mut cells = Vec::new();
    for mode in [Mode::Push, Mode::Pull] {
        for &c in clients {
            for &q in publish_intervals_ms {
                cells.push(ExperimentConfig::new(mode, c, q).scaled(time_scale));
            }
        }
    }
    cells
}

pub fn full_grid() -> Vec<ExperimentConfig> {
    grid(&FULL_CLIENTS, &FULL_PUBLISH_INTERVALS_MS, 1)
}

pub fn desk_grid() -> Vec<ExperimentConfig> {
    grid(&DESK_CLIENTS, &FULL_PUBLISH_INTERVALS_MS, DESK_TIME_SCALE)
}
