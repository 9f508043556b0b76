mod common;

use cometlab::bayeux::{
    channel_matches, client_fsm_step, decode_batch, encode_batch, BayeuxMessage, ChannelName, ClientAction,
    ClientEvent, ClientSessionState, Phase, ProtocolError, MAX_BATCH,
};
use common::{batch, concrete_channel, every_event, legal, pattern_channel, segment, state_in, TRUTH_TABLE};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn codec_round_trip(batch in batch()) {
        let bytes = encode_batch(&batch).unwrap();
        prop_assert_eq!(decode_batch(&bytes).unwrap(), batch);
    }
}

proptest! {
    #[test]
    fn concrete_channel_matches_itself(c in concrete_channel()) {
        prop_assert!(channel_matches(&c, &c).unwrap());
    }

    #[test]
    fn matching_respects_segment_counts(p in pattern_channel(), c in concrete_channel()) {
        let (ps, cs) = (p.segments().len(), c.segments().len());
        let matched = channel_matches(&p, &c).unwrap();
        if p.last_segment() == "**" {
            if cs < ps {
                prop_assert!(!matched);
            }
        } else if cs != ps {
            prop_assert!(!matched);
        }
    }

    #[test]
    fn pattern_matches_its_instantiation(p in pattern_channel(), fill in prop::collection::vec(segment(), 1..4)) {
        let mut segs = Vec::new();
        for s in p.segments() {
            match s.as_str() {
                "*" => segs.push(fill[0].clone()),
                "**" => segs.extend(fill.iter().cloned()),
                other => segs.push(other.to_owned()),
            }
        }
        let concrete = ChannelName::parse(&format!("/{}", segs.join("/"))).unwrap();
        prop_assert!(channel_matches(&p, &concrete).unwrap());
    }

    #[test]
    fn wildcard_concrete_is_rejected(p in pattern_channel(), w in pattern_channel()) {
        prop_assume!(w.is_wildcard());
        prop_assert!(matches!(channel_matches(&p, &w), Err(ProtocolError::WildcardInConcrete(_))));
    }
}

#[test]
fn channel_truth_table() {
    let cases = TRUTH_TABLE;
    for (pattern, concrete, want) in cases {
        let got = channel_matches(&pattern.parse().unwrap(), &concrete.parse().unwrap()).unwrap();
        assert_eq!(got, want, "{pattern} vs {concrete}");
    }
}

#[test]
fn malformed_channels() {
    for bad in ["", "stock", "/", "/stock//x", "/a*/b", "/**/x", "/a/b*", "/stock/"] {
        assert!(
            matches!(ChannelName::parse(bad), Err(ProtocolError::MalformedChannel { .. })),
            "{bad:?} should be malformed"
        );
    }
}

#[test]
fn oversized_and_empty_batches() {
    assert!(decode_batch(b"[]").is_err());
    let many = vec![BayeuxMessage::handshake_request(); MAX_BATCH + 1];
    let bytes = serde_json::to_vec(&many).unwrap();
    assert!(decode_batch(&bytes).is_err());
    assert!(encode_batch(&many).is_err());
    assert!(encode_batch(&[]).is_err());
}

#[test]
fn fsm_rejects_every_out_of_phase_event() {
    let mut rejected = 0;
    for phase in [Phase::Unconnected, Phase::Handshaken, Phase::Connected] {
        let state = state_in(phase);
        for event in every_event() {
            let result = client_fsm_step(&state, event.clone());
            if legal(phase, &event) {
                assert!(result.is_ok(), "{event:?} should be legal in {phase:?}");
            } else {
                rejected += 1;
                assert!(
                    matches!(result, Err(ProtocolError::ProtocolViolation { phase: p, .. }) if p == phase),
                    "{event:?} should be rejected in {phase:?}"
                );
            }
        }
    }
    assert_eq!(rejected, 12);
}

proptest! {
    #[test]
    fn fsm_invariants_hold_on_random_walks(walk in prop::collection::vec(0usize..10, 0..60)) {
        let events = every_event();
        let mut state = ClientSessionState::new();
        for i in walk {
            let before = state.clone();
            match client_fsm_step(&state, events[i].clone()) {
                Ok((next, actions)) => {
                    if next.phase() == Phase::Connected {
                        prop_assert_ne!(before.phase(), Phase::Unconnected);
                    }
                    if next.client_id() != before.client_id() {
                        let via_handshake = matches!(events[i], ClientEvent::RecvHandshakeOk(_))
                            || actions.contains(&ClientAction::Rehandshake);
                        prop_assert!(via_handshake);
                    }
                    state = next;
                }
                Err(_) => prop_assert_eq!(&state, &before),
            }
            prop_assert_eq!(state.client_id().is_none(), state.phase() == Phase::Unconnected);
            if state.phase() == Phase::Unconnected {
                prop_assert!(state.subscriptions().is_empty());
            }
        }
    }
}
