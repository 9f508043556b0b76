//! Strategies and fixtures shared by the protocol and acceptance tests.
#![allow(dead_code)]

use cometlab::bayeux::{
    client_fsm_step, Advice, BayeuxMessage, ChannelName, ClientEvent, ClientSessionState, ConnectionType, Ext, Phase,
    Reconnect,
};
use proptest::prelude::*;
use serde_json::Value;

pub fn segment() -> impl Strategy<Value = String> {
    "[A-Za-z0-9_.-]{1,8}"
}

pub fn concrete_channel() -> impl Strategy<Value = ChannelName> {
    prop::collection::vec(segment(), 1..5).prop_map(|s| ChannelName::parse(&format!("/{}", s.join("/"))).unwrap())
}

pub fn pattern_channel() -> impl Strategy<Value = ChannelName> {
    (prop::collection::vec(prop_oneof![3 => segment(), 1 => Just("*".to_owned())], 1..5), any::<bool>()).prop_map(
        |(mut segs, deep)| {
            if deep {
                *segs.last_mut().unwrap() = "**".into();
            }
            ChannelName::parse(&format!("/{}", segs.join("/"))).unwrap()
        },
    )
}

pub fn json_value() -> impl Strategy<Value = Value> {
    let leaf = prop_oneof![
        Just(Value::Null),
        any::<bool>().prop_map(Value::from),
        any::<i64>().prop_map(Value::from),
        (-1e12f64..1e12).prop_map(Value::from),
        "[ -~]{0,12}".prop_map(Value::from),
    ];
    leaf.prop_recursive(3, 24, 4, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..4).prop_map(Value::from),
            prop::collection::btree_map("[a-z]{1,6}", inner, 0..4)
                .prop_map(|m| Value::Object(m.into_iter().collect())),
        ]
    })
}

pub fn advice() -> impl Strategy<Value = Advice> {
    (prop_oneof![Just(Reconnect::Retry), Just(Reconnect::Handshake)], 0u64..100_000, 0u64..10_000)
        .prop_map(|(reconnect, timeout_ms, interval_ms)| Advice { reconnect, timeout_ms, interval_ms })
}

pub fn message() -> impl Strategy<Value = BayeuxMessage> {
    (
        pattern_channel(),
        prop::option::of("[0-9a-f]{4,16}"),
        prop::option::of("[0-9]{1,6}"),
        prop::option::of(json_value()),
        prop::option::of(any::<bool>()),
        prop::option::of(pattern_channel()),
        any::<bool>(),
        prop::option::of(advice()),
        prop::option::of(prop::option::of(any::<i64>())),
        prop::option::of(prop::collection::vec("[a-z-]{1,12}", 0..3)),
    )
        .prop_map(|(channel, client_id, id, data, successful, subscription, long_poll, advice, ext, types)| {
            let mut m = BayeuxMessage::new(channel);
            m.client_id = client_id;
            m.id = id;
            m.data = data;
            m.successful = successful;
            m.subscription = subscription;
            m.connection_type = long_poll.then_some(ConnectionType::LongPolling);
            m.advice = advice;
            m.ext = ext.map(|creation_ts| Ext { creation_ts });
            m.supported_connection_types = types;
            m
        })
}

pub fn batch() -> impl Strategy<Value = Vec<BayeuxMessage>> {
    prop::collection::vec(message(), 1..8)
}

pub fn every_event() -> Vec<ClientEvent> {
    let ch: ChannelName = "/stock/AAPL".parse().unwrap();
    vec![
        ClientEvent::SendHandshake,
        ClientEvent::RecvHandshakeOk("c9".into()),
        ClientEvent::SendConnect,
        ClientEvent::RecvConnectReply(Some(Advice::retry(1_000))),
        ClientEvent::RecvConnectReply(Some(Advice::handshake())),
        ClientEvent::RecvConnectReply(None),
        ClientEvent::SendSubscribe(ch.clone()),
        ClientEvent::RecvSubscribeOk(ch.clone()),
        ClientEvent::RecvDeliver(BayeuxMessage::deliver(ch, 1, 0, Value::Null)),
        ClientEvent::RecvAdviceHandshake,
    ]
}

/// `(pattern, concrete, matches)`.
pub const TRUTH_TABLE: [(&str, &str, bool); 12] = [
        ("/stock/AAPL", "/stock/AAPL", true),
        ("/stock/AAPL", "/stock/GOOG", false),
        ("/stock/*", "/stock/GOOG", true),
        ("/stock/*", "/stock/GOOG/bid", false),
        ("/stock/*", "/stock", false),
        ("/stock/**", "/stock/GOOG/bid", true),
        ("/stock/**", "/stock/GOOG", true),
        ("/stock/**", "/stock", false),
        ("/*/AAPL", "/stock/AAPL", true),
        ("/*/*", "/stock", false),
        ("/**", "/a/b/c", true),
        ("/meta/*", "/meta/connect", true),
];

pub fn state_in(phase: Phase) -> ClientSessionState {
    let s = ClientSessionState::new();
    if phase == Phase::Unconnected {
        return s;
    }
    let (s, _) = client_fsm_step(&s, ClientEvent::RecvHandshakeOk("c1".into())).unwrap();
    if phase == Phase::Handshaken {
        return s;
    }
    client_fsm_step(&s, ClientEvent::RecvConnectReply(None)).unwrap().0
}

pub fn legal(phase: Phase, event: &ClientEvent) -> bool {
    use ClientEvent as E;
    match event {
        E::RecvAdviceHandshake => true,
        E::SendHandshake | E::RecvHandshakeOk(_) => phase == Phase::Unconnected,
        E::RecvDeliver(_) => phase == Phase::Connected,
        E::SendConnect | E::RecvConnectReply(_) | E::SendSubscribe(_) | E::RecvSubscribeOk(_) => {
            phase != Phase::Unconnected
        }
    }
}
