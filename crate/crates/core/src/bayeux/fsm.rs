//! Client-side session state machine.
//!
//! The machine is pure: each step consumes the current state and an event and
//! yields the next state plus a list of actions for the transport driver to
//! carry out. Illegal events leave the state untouched.

use std::collections::BTreeSet;

use super::{Advice, BayeuxMessage, ChannelName, ProtocolError, Reconnect};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Unconnected,
    Handshaken,
    Connected,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClientSessionState {
    phase: Phase,
    client_id: Option<String>,
    subscriptions: BTreeSet<ChannelName>,
}

impl Default for ClientSessionState {
    fn default() -> Self {
        Self::new()
    }
}

impl ClientSessionState {
    pub fn new() -> Self {
        Self { phase: Phase::Unconnected, client_id: None, subscriptions: BTreeSet::new() }
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn client_id(&self) -> Option<&str> {
        self.client_id.as_deref()
    }

    pub fn subscriptions(&self) -> &BTreeSet<ChannelName> {
        &self.subscriptions
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClientEvent {
    SendHandshake,
    RecvHandshakeOk(String),
    SendConnect,
    RecvConnectReply(Option<Advice>),
    SendSubscribe(ChannelName),
    RecvSubscribeOk(ChannelName),
    RecvDeliver(BayeuxMessage),
    RecvAdviceHandshake,
}

impl ClientEvent {
    fn name(&self) -> &'static str {
        match self {
            ClientEvent::SendHandshake => "send_handshake",
            ClientEvent::RecvHandshakeOk(_) => "recv_handshake_ok",
            ClientEvent::SendConnect => "send_connect",
            ClientEvent::RecvConnectReply(_) => "recv_connect_reply",
            ClientEvent::SendSubscribe(_) => "send_subscribe",
            ClientEvent::RecvSubscribeOk(_) => "recv_subscribe_ok",
            ClientEvent::RecvDeliver(_) => "recv_deliver",
            ClientEvent::RecvAdviceHandshake => "recv_advice_handshake",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClientAction {
    Send(BayeuxMessage),
    /// Issue the next long-poll connect after `delay_ms`.
    Reconnect { delay_ms: u64 },
    Rehandshake,
    Record(BayeuxMessage),
}

pub fn client_fsm_step(
    state: &ClientSessionState,
    event: ClientEvent,
) -> Result<(ClientSessionState, Vec<ClientAction>), ProtocolError> {
    use ClientEvent as E;
    use Phase as P;

    let violation = |event: &ClientEvent| ProtocolError::ProtocolViolation {
        event: event.name(),
        phase: state.phase,
    };
    let mut next = state.clone();

    let actions = match (state.phase, event) {
        (P::Unconnected, E::SendHandshake) => {
            vec![ClientAction::Send(BayeuxMessage::handshake_request())]
        }
        (P::Unconnected, E::RecvHandshakeOk(id)) => {
            next.phase = P::Handshaken;
            next.client_id = Some(id);
            vec![]
        }
        (P::Handshaken | P::Connected, E::SendConnect) => {
            let id = state.client_id.as_deref().unwrap_or_default();
            vec![ClientAction::Send(BayeuxMessage::connect_request(id))]
        }
        (P::Handshaken | P::Connected, E::RecvConnectReply(advice)) => match advice {
            Some(Advice { reconnect: Reconnect::Handshake, .. }) => {
                next = ClientSessionState::new();
                vec![ClientAction::Rehandshake]
            }
            other => {
                next.phase = P::Connected;
                let delay_ms = other.map_or(0, |a| a.interval_ms);
                vec![ClientAction::Reconnect { delay_ms }]
            }
        },
        (P::Handshaken | P::Connected, E::SendSubscribe(ch)) => {
            let id = state.client_id.as_deref().unwrap_or_default();
            vec![ClientAction::Send(BayeuxMessage::subscribe_request(id, ch))]
        }
        (P::Handshaken | P::Connected, E::RecvSubscribeOk(ch)) => {
            next.subscriptions.insert(ch);
            vec![]
        }
        (P::Connected, E::RecvDeliver(msg)) => vec![ClientAction::Record(msg)],
        (_, E::RecvAdviceHandshake) => {
            next = ClientSessionState::new();
            vec![ClientAction::Rehandshake]
        }
        (_, ev) => return Err(violation(&ev)),
    };
    Ok((next, actions))
}
