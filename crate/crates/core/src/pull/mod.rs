//! Polling server that keeps only the latest item per channel.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tokio_util::sync::CancellationToken;

use crate::bayeux::{ChannelName, ProtocolError};
use crate::item::PublishItem;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PullError {
    #[error("stale item {id} on {channel}: stored id is {stored}")]
    StaleItem { channel: ChannelName, id: u64, stored: u64 },
    #[error(transparent)]
    Channel(#[from] ProtocolError),
    #[error("wildcard channel {0} cannot be polled")]
    Wildcard(ChannelName),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PullCounters {
    pub pulls: u64,
    pub hits: u64,
    pub empty: u64,
    pub publishes: u64,
    pub stale_rejected: u64,
}

#[derive(Debug, Default)]
struct AtomicCounters {
    pulls: AtomicU64,
    hits: AtomicU64,
    empty: AtomicU64,
    publishes: AtomicU64,
    stale_rejected: AtomicU64,
}

/// Latest accepted item per concrete channel.
#[derive(Debug, Default)]
pub struct LatestSnapshot {
    per_channel: RwLock<HashMap<ChannelName, PublishItem>>,
    counters: AtomicCounters,
}

impl LatestSnapshot {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn handle_publish(&self, item: PublishItem) -> Result<(), PullError> {
        if item.channel.is_wildcard() {
            return Err(PullError::Wildcard(item.channel));
        }
        let mut map = self.per_channel.write();
        if let Some(stored) = map.get(&item.channel) {
            if item.id <= stored.id {
                self.counters.stale_rejected.fetch_add(1, Ordering::Relaxed);
                return Err(PullError::StaleItem { channel: item.channel, id: item.id, stored: stored.id });
            }
        }
        map.insert(item.channel.clone(), item);
        self.counters.publishes.fetch_add(1, Ordering::Relaxed);
        Ok(())
    }

    pub fn handle_pull(&self, channel: &ChannelName) -> Result<Option<PublishItem>, PullError> {
        if channel.is_wildcard() {
            return Err(PullError::Wildcard(channel.clone()));
        }
        self.counters.pulls.fetch_add(1, Ordering::Relaxed);
        let found = self.per_channel.read().get(channel).cloned();
        let counter = if found.is_some() { &self.counters.hits } else { &self.counters.empty };
        counter.fetch_add(1, Ordering::Relaxed);
        Ok(found)
    }

    /// Parses `text` and polls it.
    pub fn handle_pull_str(&self, text: &str) -> Result<Option<PublishItem>, PullError> {
        let channel = ChannelName::parse(text)?;
        self.handle_pull(&channel)
    }

    pub fn counters(&self) -> PullCounters {
        let c = &self.counters;
        PullCounters {
            pulls: c.pulls.load(Ordering::Relaxed),
            hits: c.hits.load(Ordering::Relaxed),
            empty: c.empty.load(Ordering::Relaxed),
            publishes: c.publishes.load(Ordering::Relaxed),
            stale_rejected: c.stale_rejected.load(Ordering::Relaxed),
        }
    }
}

#[derive(Clone, Default)]
pub struct PullServer {
    snapshot: Arc<LatestSnapshot>,
}

#[derive(Deserialize)]
struct PullQuery {
    channel: String,
}

impl PullServer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn snapshot(&self) -> &LatestSnapshot {
        &self.snapshot
    }

    pub fn router(&self) -> Router {
        Router::new()
            .route("/pull", get(pull))
            .route("/publish", post(publish))
            .route("/counters", get(counters))
            .with_state(self.clone())
    }

    pub async fn serve(self, listener: TcpListener, shutdown: CancellationToken) -> std::io::Result<()> {
        axum::serve(listener, self.router())
            .with_graceful_shutdown(shutdown.cancelled_owned())
            .await
    }
}

async fn pull(State(server): State<PullServer>, Query(q): Query<PullQuery>) -> Response {
    match server.snapshot.handle_pull_str(&q.channel) {
        Ok(Some(item)) => Json(item).into_response(),
        Ok(None) => StatusCode::NO_CONTENT.into_response(),
        Err(e) => (StatusCode::BAD_REQUEST, e.to_string()).into_response(),
    }
}

async fn publish(State(server): State<PullServer>, Json(item): Json<PublishItem>) -> Response {
    match server.snapshot.handle_publish(item) {
        Ok(()) => StatusCode::OK.into_response(),
        Err(e @ PullError::StaleItem { .. }) => (StatusCode::CONFLICT, e.to_string()).into_response(),
        Err(e) => (StatusCode::BAD_REQUEST, e.to_string()).into_response(),
    }
}

async fn counters(State(server): State<PullServer>) -> Json<PullCounters> {
    Json(server.snapshot.counters())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn item(channel: &str, id: u64) -> PublishItem {
        PublishItem { channel: channel.parse().unwrap(), id, creation_ts: 10 * id as i64, data: json!(id) }
    }

    #[test]
    fn last_writer_wins() {
        let s = LatestSnapshot::new();
        s.handle_publish(item("/stock/AAPL", 1)).unwrap();
        s.handle_publish(item("/stock/AAPL", 2)).unwrap();
        assert_eq!(s.handle_pull_str("/stock/AAPL").unwrap().unwrap().id, 2);
    }

    #[test]
    fn stale_item_rejected() {
        let s = LatestSnapshot::new();
        s.handle_publish(item("/stock/AAPL", 2)).unwrap();
        let err = s.handle_publish(item("/stock/AAPL", 1)).unwrap_err();
        assert!(matches!(err, PullError::StaleItem { id: 1, stored: 2, .. }));
        assert!(s.handle_publish(item("/stock/AAPL", 2)).is_err());
        assert_eq!(s.handle_pull_str("/stock/AAPL").unwrap().unwrap().id, 2);
        assert_eq!(s.counters().stale_rejected, 2);
    }

    #[test]
    fn channels_are_independent() {
        let s = LatestSnapshot::new();
        s.handle_publish(item("/stock/AAPL", 5)).unwrap();
        s.handle_publish(item("/stock/GOOG", 1)).unwrap();
        assert_eq!(s.handle_pull_str("/stock/AAPL").unwrap().unwrap().id, 5);
        assert_eq!(s.handle_pull_str("/stock/GOOG").unwrap().unwrap().id, 1);
    }

    #[test]
    fn pull_before_publish_is_none() {
        let s = LatestSnapshot::new();
        assert_eq!(s.handle_pull_str("/stock/AAPL").unwrap(), None);
        assert_eq!(s.counters().empty, 1);
    }

    #[test]
    fn repeated_pulls_return_same_item() {
        let s = LatestSnapshot::new();
        s.handle_publish(item("/stock/AAPL", 7)).unwrap();
        let a = s.handle_pull_str("/stock/AAPL").unwrap().unwrap();
        let b = s.handle_pull_str("/stock/AAPL").unwrap().unwrap();
        assert_eq!(a, b);
        assert_eq!(a.creation_ts, 70);
    }

    #[test]
    fn wildcards_and_garbage_rejected() {
        let s = LatestSnapshot::new();
        assert!(matches!(s.handle_pull_str("/stock/*"), Err(PullError::Wildcard(_))));
        assert!(matches!(s.handle_pull_str("stock"), Err(PullError::Channel(ProtocolError::MalformedChannel { .. }))));
    }
}
