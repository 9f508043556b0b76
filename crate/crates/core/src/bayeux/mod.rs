//! BAYEUX-style long-polling protocol: channel grammar, JSON wire codec and
//! the client session state machine.

mod channel;
mod fsm;
mod message;

pub use channel::{channel_matches, ChannelName};
pub use fsm::{client_fsm_step, ClientAction, ClientEvent, ClientSessionState, Phase};
pub use message::{
    decode_batch, encode_batch, Advice, BayeuxMessage, ConnectionType, Ext, Reconnect,
    BAYEUX_VERSION, LONG_POLLING, MAX_BATCH, META_CONNECT, META_HANDSHAKE, META_SUBSCRIBE,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProtocolError {
    #[error("malformed channel {channel:?}: {reason}")]
    MalformedChannel { channel: String, reason: String },
    #[error("concrete channel {0} contains a wildcard")]
    WildcardInConcrete(String),
    #[error("decode error: {0}")]
    Decode(String),
    #[error("decode error: empty batch")]
    EmptyBatch,
    #[error("decode error: batch of {0} messages exceeds limit of {MAX_BATCH}")]
    BatchTooLarge(usize),
    #[error("protocol violation: {event} not allowed in phase {phase:?}")]
    ProtocolViolation { event: &'static str, phase: Phase },
}
