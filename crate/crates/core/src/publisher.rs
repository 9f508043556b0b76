//! Service provider that posts a fixed number of items at a fixed interval.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::time::Instant;

use crate::bayeux::ChannelName;
use crate::clock::now_ms;
use crate::item::PublishItem;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublisherConfig {
    /// Server base URL (`http://host:port`) or a full `/publish` URL.
    pub target: String,
    pub channel: ChannelName,
    pub total_messages: u32,
    pub publish_interval_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PublisherError {
    #[error("invalid publisher config: {0}")]
    InvalidConfig(String),
}

impl PublisherConfig {
    pub fn validate(&self) -> Result<(), PublisherError> {
        if self.total_messages == 0 {
            return Err(PublisherError::InvalidConfig("totalMessages must be >= 1".into()));
        }
        if self.publish_interval_ms == 0 {
            return Err(PublisherError::InvalidConfig("publishIntervalMs must be > 0".into()));
        }
        if self.channel.is_wildcard() || self.channel.is_meta() {
            return Err(PublisherError::InvalidConfig(format!("cannot publish to {}", self.channel)));
        }
        Ok(())
    }

    pub fn publish_url(&self) -> String {
        let base = self.target.trim_end_matches('/');
        if base.ends_with("/publish") {
            base.to_owned()
        } else {
            format!("{base}/publish")
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PublishLogEntry {
    pub id: u64,
    pub creation_ts: i64,
    pub http_status: Option<u16>,
    /// Set when the publish failed (non-2xx or transport error).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl PublishLogEntry {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

/// Synthetic stock quote for sequence number `seq`.
pub fn make_item(seq: u64, now: i64, channel: &ChannelName) -> PublishItem {
    PublishItem {
        channel: channel.clone(),
        id: seq,
        creation_ts: now,
        data: json!({
            "symbol": channel.last_segment(),
            "price": 100.0 + seq as f64 * 0.25,
        }),
    }
}

/// Sends `total_messages` items on a fixed-rate schedule. Failures are
/// recorded in the log and never stop the run.
pub async fn run_publisher(
    config: &PublisherConfig,
    client: &reqwest::Client,
) -> Result<Vec<PublishLogEntry>, PublisherError> {
    config.validate()?;
    let url = config.publish_url();
    let interval = Duration::from_millis(config.publish_interval_ms);
    let start = Instant::now();
    let mut log = Vec::with_capacity(config.total_messages as usize);

    for seq in 0..config.total_messages {
        tokio::time::sleep_until(start + interval * seq).await;
        let item = make_item(seq as u64, now_ms(), &config.channel);
        let mut entry = PublishLogEntry {
            id: item.id,
            creation_ts: item.creation_ts,
            http_status: None,
            error: None,
        };
        match client.post(&url).json(&item).send().await {
            Ok(resp) => {
                let status = resp.status();
                entry.http_status = Some(status.as_u16());
                if !status.is_success() {
                    entry.error = Some(format!("PublishFailed({}): HTTP {status}", item.id));
                }
            }
            Err(e) => entry.error = Some(format!("PublishFailed({}): {e}", item.id)),
        }
        if let Some(err) = &entry.error {
            tracing::warn!("{err}");
        }
        log.push(entry);
    }
    Ok(log)
}
