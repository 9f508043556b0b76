//! Long-polling push server.
//!
//! `POST /cometd` takes BAYEUX batches, `POST /publish` takes a
//! [`PublishItem`] from the publisher and fans it out, `GET /counters`
//! reports request counters.

mod registry;

use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use parking_lot::Mutex;
use serde_json::{json, Value};
use tokio::net::TcpListener;
use tokio_util::sync::CancellationToken;

pub use registry::{
    BatchOutcome, ConnectOutcome, PushConfig, PushCounters, PushError, Registry, Subscription,
};

use crate::bayeux::{decode_batch, encode_batch, Advice, BayeuxMessage, ChannelName};
use crate::clock::now_ms;
use crate::item::PublishItem;

#[derive(Clone)]
pub struct PushServer {
    registry: Arc<Mutex<Registry>>,
}

impl PushServer {
    pub fn new(config: PushConfig) -> Self {
        Self { registry: Arc::new(Mutex::new(Registry::new(config))) }
    }

    pub fn counters(&self) -> PushCounters {
        self.registry.lock().counters()
    }

    pub fn router(&self) -> Router {
        Router::new()
            .route("/cometd", post(cometd))
            .route("/publish", post(publish))
            .route("/counters", get(counters))
            .with_state(self.clone())
    }

    /// Serves until `shutdown` fires, running the timeout sweep alongside.
    pub async fn serve(self, listener: TcpListener, shutdown: CancellationToken) -> std::io::Result<()> {
        let period = Duration::from_millis(self.registry.lock().config().sweep_period_ms.max(1));
        let registry = self.registry.clone();
        let sweep_stop = shutdown.clone();
        let sweeper = tokio::spawn(async move {
            let mut tick = tokio::time::interval(period);
            tick.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
            loop {
                tokio::select! {
                    _ = sweep_stop.cancelled() => break,
                    _ = tick.tick() => {
                        let (timed_out, expired) = registry.lock().sweep(now_ms());
                        if timed_out + expired > 0 {
                            tracing::trace!(timed_out, expired, "sweep");
                        }
                    }
                }
            }
        });
        let result = axum::serve(listener, self.router())
            .with_graceful_shutdown(shutdown.cancelled_owned())
            .await;
        sweeper.abort();
        result
    }
}

fn batch_response(status: StatusCode, messages: &[BayeuxMessage]) -> Response {
    match encode_batch(messages) {
        Ok(body) => (status, [(header::CONTENT_TYPE, "application/json")], body).into_response(),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
    }
}

/// Builds an unsuccessful reply for each message of an undecodable batch
/// whose channel can still be read.
fn rejection(body: &[u8], error: &str) -> Vec<BayeuxMessage> {
    let mut replies = Vec::new();
    if let Ok(Value::Array(items)) = serde_json::from_slice::<Value>(body) {
        for item in items {
            let channel = item
                .get("channel")
                .and_then(Value::as_str)
                .and_then(|c| ChannelName::parse(c).ok());
            if let Some(channel) = channel {
                let mut reply = BayeuxMessage::new(channel);
                reply.client_id = item.get("clientId").and_then(Value::as_str).map(str::to_owned);
                reply.successful = Some(false);
                reply.error = Some(error.to_owned());
                if reply.channel.to_string() == crate::bayeux::META_HANDSHAKE {
                    reply.advice = Some(Advice::handshake());
                }
                replies.push(reply);
            }
        }
    }
    replies
}

async fn cometd(State(server): State<PushServer>, body: Bytes) -> Response {
    let batch = match decode_batch(&body) {
        Ok(batch) => batch,
        Err(e) => {
            let replies = rejection(&body, &e.to_string());
            if replies.is_empty() {
                return (StatusCode::BAD_REQUEST, e.to_string()).into_response();
            }
            return batch_response(StatusCode::BAD_REQUEST, &replies);
        }
    };

    let BatchOutcome { mut immediate, held } = server.registry.lock().handle_batch(batch, now_ms());
    if let Some(rx) = held {
        match rx.await {
            Ok(mut later) => immediate.append(&mut later),
            Err(_) => {
                let timeout = server.registry.lock().config().timeout_ms;
                immediate.push(BayeuxMessage::connect_reply(true, Advice::retry(timeout)));
            }
        }
    }
    batch_response(StatusCode::OK, &immediate)
}

async fn publish(State(server): State<PushServer>, Json(item): Json<PublishItem>) -> Response {
    let result = server.registry.lock().publish(&item, now_ms());
    match result {
        Ok(delivered) => Json(json!({ "delivered": delivered })).into_response(),
        Err(e) => (StatusCode::BAD_REQUEST, e.to_string()).into_response(),
    }
}

async fn counters(State(server): State<PushServer>) -> Json<PushCounters> {
    Json(server.counters())
}
