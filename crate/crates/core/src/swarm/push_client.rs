use std::time::Duration;

use tokio::time::Instant;

use super::{ClientContext, IO_BACKOFF};
use crate::bayeux::{
    client_fsm_step, decode_batch, encode_batch, BayeuxMessage, ClientAction, ClientEvent,
    ClientSessionState, Phase, Reconnect, META_CONNECT, META_HANDSHAKE, META_SUBSCRIBE,
};
use crate::clock::now_ms;
use crate::item::{Mode, ReceiptRecord};

// A held connect may stay open for the advised timeout plus the sweep delay.
const REQUEST_SLACK: Duration = Duration::from_secs(5);

enum Flow<T> {
    Continue(T),
    /// Start over with a fresh handshake.
    Rehandshake,
    /// IO failure; retry the same step after a backoff.
    Retry,
    Stop,
}

impl<T> Flow<T> {
    fn map<U>(self, f: impl FnOnce(T) -> U) -> Flow<U> {
        match self {
            Flow::Continue(v) => Flow::Continue(f(v)),
            Flow::Rehandshake => Flow::Rehandshake,
            Flow::Retry => Flow::Retry,
            Flow::Stop => Flow::Stop,
        }
    }
}

struct PushClient<'a> {
    idx: u32,
    ctx: &'a ClientContext,
    url: String,
    state: ClientSessionState,
    server_timeout: Duration,
    receipts: u64,
}

/// Handshake, connect, subscribe, then long-poll until the run ends.
///
/// Every deliver message becomes one receipt; duplicates are not filtered
/// here. Returns the number of receipts emitted.
pub async fn push_client_loop(idx: u32, ctx: &ClientContext) -> u64 {
    let mut client = PushClient {
        idx,
        ctx,
        url: format!("{}/cometd", ctx.config.base_url()),
        state: ClientSessionState::new(),
        server_timeout: Duration::from_secs(45),
        receipts: 0,
    };
    client.run().await;
    client.receipts
}

impl PushClient<'_> {
    async fn run(&mut self) {
        'session: while self.ctx.running() {
            self.state = ClientSessionState::new();

            // handshake (retried until it succeeds)
            loop {
                match self.handshake().await {
                    Flow::Continue(()) => break,
                    Flow::Stop => return,
                    Flow::Retry | Flow::Rehandshake => {
                        if !self.backoff().await {
                            return;
                        }
                    }
                }
            }

            // first connect returns at once; then subscribe
            let mut subscribed = false;
            while !subscribed {
                let step = if self.state.phase() == Phase::Handshaken {
                    self.connect().await.map(|_| ())
                } else {
                    self.subscribe().await.map(|()| subscribed = true)
                };
                match step {
                    Flow::Continue(()) => {}
                    Flow::Rehandshake => continue 'session,
                    Flow::Stop => return,
                    Flow::Retry => {
                        if !self.backoff().await {
                            return;
                        }
                    }
                }
            }

            // long-poll cycle
            loop {
                match self.connect().await {
                    Flow::Continue(delay_ms) => {
                        if delay_ms > 0
                            && !self.ctx.sleep_until(Instant::now() + Duration::from_millis(delay_ms)).await
                        {
                            return;
                        }
                    }
                    Flow::Rehandshake => continue 'session,
                    Flow::Stop => return,
                    Flow::Retry => {
                        if !self.backoff().await {
                            return;
                        }
                    }
                }
            }
        }
    }

    fn step(&mut self, event: ClientEvent) -> Option<Vec<ClientAction>> {
        match client_fsm_step(&self.state, event) {
            Ok((next, actions)) => {
                self.state = next;
                Some(actions)
            }
            Err(e) => {
                tracing::debug!(idx = self.idx, "{e}");
                self.ctx.count_error();
                None
            }
        }
    }

    fn outgoing(&mut self, event: ClientEvent) -> Option<BayeuxMessage> {
        self.step(event)?.into_iter().find_map(|a| match a {
            ClientAction::Send(m) => Some(m),
            _ => None,
        })
    }

    async fn handshake(&mut self) -> Flow<()> {
        let Some(request) = self.outgoing(ClientEvent::SendHandshake) else {
            return Flow::Rehandshake;
        };
        let replies = match self.exchange(&request).await {
            Flow::Continue(r) => r,
            Flow::Stop => return Flow::Stop,
            _ => return Flow::Retry,
        };
        let reply = replies.into_iter().find(|m| m.is_channel(META_HANDSHAKE));
        match reply {
            Some(BayeuxMessage { successful: Some(true), client_id: Some(id), advice, .. }) => {
                if let Some(a) = advice.filter(|a| a.timeout_ms > 0) {
                    self.server_timeout = Duration::from_millis(a.timeout_ms);
                }
                match self.step(ClientEvent::RecvHandshakeOk(id)) {
                    Some(_) => Flow::Continue(()),
                    None => Flow::Rehandshake,
                }
            }
            _ => {
                self.ctx.count_error();
                Flow::Retry
            }
        }
    }

    async fn subscribe(&mut self) -> Flow<()> {
        let channel = self.ctx.config.channel.clone();
        let Some(request) = self.outgoing(ClientEvent::SendSubscribe(channel)) else {
            return Flow::Rehandshake;
        };
        let replies = match self.exchange(&request).await {
            Flow::Continue(r) => r,
            Flow::Stop => return Flow::Stop,
            _ => return Flow::Retry,
        };
        match replies.into_iter().find(|m| m.is_channel(META_SUBSCRIBE)) {
            Some(BayeuxMessage { successful: Some(true), subscription: Some(ch), .. }) => {
                match self.step(ClientEvent::RecvSubscribeOk(ch)) {
                    Some(_) => Flow::Continue(()),
                    None => Flow::Rehandshake,
                }
            }
            _ => {
                self.ctx.count_error();
                self.step(ClientEvent::RecvAdviceHandshake);
                Flow::Rehandshake
            }
        }
    }

    /// Sends one connect and processes the reply batch. Yields the advised
    /// reconnect delay.
    async fn connect(&mut self) -> Flow<u64> {
        let Some(request) = self.outgoing(ClientEvent::SendConnect) else {
            return Flow::Rehandshake;
        };
        let replies = match self.exchange(&request).await {
            Flow::Continue(r) => r,
            Flow::Stop => return Flow::Stop,
            _ => return Flow::Retry,
        };
        let receipt_ts = now_ms();
        let (connects, delivers): (Vec<_>, Vec<_>) =
            replies.into_iter().partition(|m| m.is_channel(META_CONNECT));

        let mut delay = 0;
        let mut rehandshake = connects.is_empty();
        for reply in connects {
            if reply.successful != Some(true) && reply.advice.map(|a| a.reconnect) != Some(Reconnect::Handshake) {
                self.ctx.count_error();
            }
            for action in self.step(ClientEvent::RecvConnectReply(reply.advice)).unwrap_or_default() {
                match action {
                    ClientAction::Reconnect { delay_ms } => delay = delay_ms,
                    ClientAction::Rehandshake => rehandshake = true,
                    _ => {}
                }
            }
        }
        for msg in delivers {
            for action in self.step(ClientEvent::RecvDeliver(msg)).unwrap_or_default() {
                if let ClientAction::Record(m) = action {
                    self.record(&m, receipt_ts);
                }
            }
        }
        if rehandshake {
            Flow::Rehandshake
        } else {
            Flow::Continue(delay)
        }
    }

    fn record(&mut self, msg: &BayeuxMessage, receipt_ts: i64) {
        match (msg.item_id(), msg.creation_ts()) {
            (Some(item_id), Some(creation_ts)) => {
                let cfg = &self.ctx.config;
                self.ctx
                    .emitter
                    .emit(ReceiptRecord::new(&cfg.run_id, self.idx, Mode::Push, item_id, creation_ts, receipt_ts));
                self.receipts += 1;
            }
            _ => self.ctx.count_error(),
        }
    }

    async fn exchange(&self, request: &BayeuxMessage) -> Flow<Vec<BayeuxMessage>> {
        let body = match encode_batch(std::slice::from_ref(request)) {
            Ok(b) => b,
            Err(_) => return Flow::Retry,
        };
        self.ctx.count_request();
        let send = self
            .ctx
            .http
            .post(&self.url)
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body)
            .timeout(self.server_timeout + REQUEST_SLACK)
            .send();
        let response = tokio::select! {
            _ = self.ctx.stop.cancelled() => return Flow::Stop,
            _ = tokio::time::sleep_until(self.ctx.deadline) => return Flow::Stop,
            r = send => r,
        };
        let bytes = match response {
            Ok(resp) => match resp.bytes().await {
                Ok(b) => b,
                Err(e) => {
                    tracing::debug!(idx = self.idx, "read failed: {e}");
                    self.ctx.count_error();
                    return Flow::Retry;
                }
            },
            Err(e) => {
                tracing::debug!(idx = self.idx, "request failed: {e}");
                self.ctx.count_error();
                return Flow::Retry;
            }
        };
        match decode_batch(&bytes) {
            Ok(replies) => Flow::Continue(replies),
            Err(e) => {
                tracing::debug!(idx = self.idx, "bad reply: {e}");
                self.ctx.count_error();
                Flow::Retry
            }
        }
    }

    async fn backoff(&self) -> bool {
        self.ctx.sleep_until(Instant::now() + IO_BACKOFF).await
    }
}
