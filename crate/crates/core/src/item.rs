//! Records shared by the publisher, the servers, the swarm and the lab.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::bayeux::ChannelName;

/// One published datum, as posted to `/publish` and served by `/pull`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PublishItem {
    pub channel: ChannelName,
    pub id: u64,
    pub creation_ts: i64,
    pub data: Value,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Push,
    Pull,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Push => "push",
            Mode::Pull => "pull",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "push" => Ok(Mode::Push),
            "pull" => Ok(Mode::Pull),
            other => Err(format!("unknown mode {other:?}, expected push or pull")),
        }
    }
}

/// One item observed by one simulated client.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ReceiptRecord {
    pub run_id: String,
    pub client_idx: u32,
    pub mode: Mode,
    pub item_id: u64,
    pub creation_ts: i64,
    pub receipt_ts: i64,
    pub trip_time_ms: i64,
}

impl ReceiptRecord {
    pub fn new(run_id: &str, client_idx: u32, mode: Mode, item_id: u64, creation_ts: i64, receipt_ts: i64) -> Self {
        Self {
            run_id: run_id.to_owned(),
            client_idx,
            mode,
            item_id,
            creation_ts,
            receipt_ts,
            trip_time_ms: receipt_ts - creation_ts,
        }
    }
}
