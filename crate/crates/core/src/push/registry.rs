use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};
use tokio::sync::oneshot;

use crate::bayeux::{
    Advice, BayeuxMessage, ChannelName, LONG_POLLING, META_CONNECT, META_HANDSHAKE,
    META_SUBSCRIBE,
};
use crate::item::PublishItem;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PushConfig {
    pub timeout_ms: u64,
    pub outbox_capacity: usize,
    pub session_grace_ms: u64,
    pub sweep_period_ms: u64,
}

impl PushConfig {
    pub fn with_timeout(timeout_ms: u64) -> Self {
        Self { timeout_ms, session_grace_ms: 2 * timeout_ms, ..Self::default() }
    }
}

impl Default for PushConfig {
    fn default() -> Self {
        Self {
            timeout_ms: 45_000,
            outbox_capacity: 16,
            session_grace_ms: 90_000,
            sweep_period_ms: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PushCounters {
    pub handshakes: u64,
    pub connects: u64,
    pub subscribes: u64,
    pub publishes: u64,
    pub delivers_sent: u64,
    /// Held connects completed empty by the timeout sweep.
    pub held_timeouts: u64,
    /// Queued deliveries discarded because an outbox was full.
    pub outbox_drops: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PushError {
    #[error("publishing to meta channel {0} is forbidden")]
    PublishToMeta(ChannelName),
    #[error("cannot publish to wildcard channel {0}")]
    PublishToWildcard(ChannelName),
}

#[derive(Debug, Clone)]
pub struct Subscription {
    pub client_id: String,
    pub pattern: ChannelName,
    pub subscribed_at: i64,
}

/// A long-poll connect whose response is pending.
#[derive(Debug)]
struct HeldConnection {
    held_since: i64,
    deadline: i64,
    reply: oneshot::Sender<Vec<BayeuxMessage>>,
}

#[derive(Debug)]
struct SessionEntry {
    outbox: VecDeque<BayeuxMessage>,
    last_seen: i64,
    connected_once: bool,
    held: Option<HeldConnection>,
}

impl SessionEntry {
    fn touch(&mut self, now: i64) {
        self.last_seen = self.last_seen.max(now);
    }
}

/// Result of handling one POSTed batch.
#[derive(Debug)]
pub struct BatchOutcome {
    pub immediate: Vec<BayeuxMessage>,
    /// Set when a connect in the batch is being held; its messages follow
    /// `immediate` in the final response.
    pub held: Option<oneshot::Receiver<Vec<BayeuxMessage>>>,
}

/// Session and subscription registry of the push server.
///
/// All mutation goes through `&mut self`, so callers serialise access behind a
/// single lock; completing a held response only sends on a oneshot channel.
#[derive(Debug)]
pub struct Registry {
    config: PushConfig,
    sessions: HashMap<String, SessionEntry>,
    // in subscription order, used for fan-out ordering
    subscriptions: Vec<Subscription>,
    counters: PushCounters,
    id_salt: u64,
    next_id: u64,
}

impl Registry {
    pub fn new(config: PushConfig) -> Self {
        Self {
            config,
            sessions: HashMap::new(),
            subscriptions: Vec::new(),
            counters: PushCounters::default(),
            id_salt: rand::random::<u32>() as u64,
            next_id: 1,
        }
    }

    pub fn config(&self) -> &PushConfig {
        &self.config
    }

    pub fn counters(&self) -> PushCounters {
        self.counters
    }

    pub fn session_count(&self) -> usize {
        self.sessions.len()
    }

    pub fn held_count(&self) -> usize {
        self.sessions.values().filter(|s| s.held.is_some()).count()
    }

    pub fn subscriptions_of(&self, client_id: &str) -> Vec<&Subscription> {
        self.subscriptions.iter().filter(|s| s.client_id == client_id).collect()
    }

    pub fn outbox_len(&self, client_id: &str) -> Option<usize> {
        self.sessions.get(client_id).map(|s| s.outbox.len())
    }

    pub fn handle_batch(&mut self, batch: Vec<BayeuxMessage>, now: i64) -> BatchOutcome {
        let mut immediate = Vec::new();
        let mut held = None;
        for msg in batch {
            let name = msg.channel.to_string();
            match name.as_str() {
                META_HANDSHAKE => immediate.push(self.handle_handshake(&msg, now)),
                META_SUBSCRIBE => immediate.push(self.handle_subscribe(&msg, now)),
                META_CONNECT => match self.handle_connect(&msg, now) {
                    ConnectOutcome::Immediate(mut replies) => immediate.append(&mut replies),
                    ConnectOutcome::Held(rx) => held = Some(rx),
                },
                _ => {
                    let mut reply = BayeuxMessage::new(msg.channel.clone());
                    reply.successful = Some(false);
                    reply.error = Some("unsupported channel".into());
                    immediate.push(reply);
                }
            }
        }
        BatchOutcome { immediate, held }
    }

    pub fn handle_handshake(&mut self, msg: &BayeuxMessage, now: i64) -> BayeuxMessage {
        self.counters.handshakes += 1;
        let supports_long_polling = msg
            .supported_connection_types
            .as_ref()
            .is_some_and(|types| types.iter().any(|t| t == LONG_POLLING));
        if !supports_long_polling {
            let mut reply = BayeuxMessage::handshake_reply(None, false);
            reply.advice = Some(Advice::handshake());
            reply.error = Some("long-polling connection type required".into());
            return reply;
        }

        let client_id = format!("{:08x}{:x}", self.id_salt, self.next_id);
        self.next_id += 1;
        self.sessions.insert(
            client_id.clone(),
            SessionEntry {
                outbox: VecDeque::new(),
                last_seen: now,
                connected_once: false,
                held: None,
            },
        );
        let mut reply = BayeuxMessage::handshake_reply(Some(client_id), true);
        reply.advice = Some(Advice::retry(self.config.timeout_ms));
        reply
    }

    pub fn handle_subscribe(&mut self, msg: &BayeuxMessage, now: i64) -> BayeuxMessage {
        self.counters.subscribes += 1;
        let mut reply = BayeuxMessage::new(msg.channel.clone());
        reply.client_id = msg.client_id.clone();
        reply.subscription = msg.subscription.clone();

        let Some(session) = msg.client_id.as_ref().and_then(|id| self.sessions.get_mut(id)) else {
            reply.successful = Some(false);
            reply.advice = Some(Advice::handshake());
            reply.error = Some("unknown client".into());
            return reply;
        };
        session.touch(now);

        let Some(pattern) = msg.subscription.clone() else {
            reply.successful = Some(false);
            reply.error = Some("missing subscription".into());
            return reply;
        };
        if pattern.is_meta() {
            reply.successful = Some(false);
            reply.error = Some("meta channels are not subscribable".into());
            return reply;
        }

        let client_id = msg.client_id.clone().unwrap_or_default();
        let exists = self
            .subscriptions
            .iter()
            .any(|s| s.client_id == client_id && s.pattern == pattern);
        if !exists {
            self.subscriptions.push(Subscription { client_id, pattern, subscribed_at: now });
        }
        reply.successful = Some(true);
        reply
    }

    pub fn handle_connect(&mut self, msg: &BayeuxMessage, now: i64) -> ConnectOutcome {
        self.counters.connects += 1;
        let timeout_ms = self.config.timeout_ms;
        let Some(session) = msg.client_id.as_ref().and_then(|id| self.sessions.get_mut(id)) else {
            let mut reply = BayeuxMessage::connect_reply(false, Advice::handshake());
            reply.error = Some("unknown client".into());
            return ConnectOutcome::Immediate(vec![reply]);
        };
        session.touch(now);

        // at most one held connection per client: release the previous one
        if let Some(prev) = session.held.take() {
            let _ = prev.reply.send(vec![BayeuxMessage::connect_reply(true, Advice::retry(timeout_ms))]);
        }

        let first = !session.connected_once;
        session.connected_once = true;
        if first || !session.outbox.is_empty() {
            let mut replies: Vec<BayeuxMessage> = session.outbox.drain(..).collect();
            self.counters.delivers_sent += replies.len() as u64;
            replies.push(BayeuxMessage::connect_reply(true, Advice::retry(timeout_ms)));
            return ConnectOutcome::Immediate(replies);
        }

        let (tx, rx) = oneshot::channel();
        session.held = Some(HeldConnection {
            held_since: now,
            deadline: now + timeout_ms.max(1) as i64,
            reply: tx,
        });
        ConnectOutcome::Held(rx)
    }

    /// Fans `item` out to every matching session and returns how many were
    /// reached, either through a held connection or their outbox.
    pub fn publish(&mut self, item: &PublishItem, _now: i64) -> Result<usize, PushError> {
        if item.channel.is_meta() {
            return Err(PushError::PublishToMeta(item.channel.clone()));
        }
        if item.channel.is_wildcard() {
            return Err(PushError::PublishToWildcard(item.channel.clone()));
        }
        self.counters.publishes += 1;

        let mut targets: Vec<&str> = Vec::new();
        for sub in &self.subscriptions {
            if sub.pattern.matches(&item.channel).unwrap_or(false)
                && !targets.contains(&sub.client_id.as_str())
            {
                targets.push(&sub.client_id);
            }
        }

        let deliver =
            BayeuxMessage::deliver(item.channel.clone(), item.id, item.creation_ts, item.data.clone());
        let timeout_ms = self.config.timeout_ms;
        let capacity = self.config.outbox_capacity;
        let mut reached = 0;
        for id in targets {
            let Some(session) = self.sessions.get_mut(id) else { continue };
            reached += 1;
            if let Some(held) = session.held.take() {
                let reply = vec![deliver.clone(), BayeuxMessage::connect_reply(true, Advice::retry(timeout_ms))];
                if held.reply.send(reply).is_ok() {
                    self.counters.delivers_sent += 1;
                    continue;
                }
                // the client went away while held; keep the item for its next connect
            }
            if capacity == 0 {
                self.counters.outbox_drops += 1;
                continue;
            }
            if session.outbox.len() >= capacity {
                session.outbox.pop_front();
                self.counters.outbox_drops += 1;
            }
            session.outbox.push_back(deliver.clone());
        }
        Ok(reached)
    }

    /// Completes held connections past their deadline and drops sessions that
    /// have been silent longer than the grace period.
    pub fn sweep(&mut self, now: i64) -> (usize, usize) {
        let timeout_ms = self.config.timeout_ms;
        let mut timed_out = 0;
        for session in self.sessions.values_mut() {
            let expired = session.held.as_ref().is_some_and(|h| h.deadline <= now);
            if expired {
                let held = session.held.take().expect("checked above");
                debug_assert!(held.deadline > held.held_since);
                let _ = held.reply.send(vec![BayeuxMessage::connect_reply(true, Advice::retry(timeout_ms))]);
                timed_out += 1;
            }
        }
        self.counters.held_timeouts += timed_out as u64;

        let grace = self.config.session_grace_ms as i64;
        let before = self.sessions.len();
        self.sessions
            .retain(|_, s| s.held.is_some() || now - s.last_seen <= grace);
        let expired = before - self.sessions.len();
        if expired > 0 {
            let sessions = &self.sessions;
            self.subscriptions.retain(|s| sessions.contains_key(&s.client_id));
        }
        (timed_out, expired)
    }
}

#[derive(Debug)]
pub enum ConnectOutcome {
    Immediate(Vec<BayeuxMessage>),
    Held(oneshot::Receiver<Vec<BayeuxMessage>>),
}
