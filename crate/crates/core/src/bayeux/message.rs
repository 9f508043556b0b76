use serde::{Deserialize, Deserializer, Serialize};
use serde_json::Value;

use super::{ChannelName, ProtocolError};

pub const BAYEUX_VERSION: &str = "1.0";
pub const LONG_POLLING: &str = "long-polling";
pub const MAX_BATCH: usize = 64;

pub const META_HANDSHAKE: &str = "/meta/handshake";
pub const META_CONNECT: &str = "/meta/connect";
pub const META_SUBSCRIBE: &str = "/meta/subscribe";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConnectionType {
    #[serde(rename = "long-polling")]
    LongPolling,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reconnect {
    Retry,
    Handshake,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Advice {
    pub reconnect: Reconnect,
    #[serde(rename = "timeout")]
    pub timeout_ms: u64,
    #[serde(rename = "interval")]
    pub interval_ms: u64,
}

impl Advice {
    pub fn retry(timeout_ms: u64) -> Self {
        Self { reconnect: Reconnect::Retry, timeout_ms, interval_ms: 0 }
    }

    pub fn handshake() -> Self {
        Self { reconnect: Reconnect::Handshake, timeout_ms: 0, interval_ms: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Ext {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub creation_ts: Option<i64>,
}

/// One BAYEUX message, either on a `/meta/*` channel or an event channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BayeuxMessage {
    pub channel: ChannelName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supported_connection_types: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub client_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default, deserialize_with = "present", skip_serializing_if = "Option::is_none")]
    pub data: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub successful: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subscription: Option<ChannelName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub connection_type: Option<ConnectionType>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub advice: Option<Advice>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ext: Option<Ext>,
}

// A present `"data": null` decodes to `Some(Null)` rather than `None`.
fn present<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Value>, D::Error> {
    Value::deserialize(d).map(Some)
}

fn meta(name: &str) -> ChannelName {
    ChannelName::parse(name).expect("static meta channel")
}

impl BayeuxMessage {
    pub fn new(channel: ChannelName) -> Self {
        Self {
            channel,
            version: None,
            supported_connection_types: None,
            client_id: None,
            id: None,
            data: None,
            successful: None,
            subscription: None,
            connection_type: None,
            advice: None,
            error: None,
            ext: None,
        }
    }

    pub fn handshake_request() -> Self {
        Self {
            version: Some(BAYEUX_VERSION.to_owned()),
            supported_connection_types: Some(vec![LONG_POLLING.to_owned()]),
            ..Self::new(meta(META_HANDSHAKE))
        }
    }

    pub fn handshake_reply(client_id: Option<String>, successful: bool) -> Self {
        Self {
            version: Some(BAYEUX_VERSION.to_owned()),
            supported_connection_types: Some(vec![LONG_POLLING.to_owned()]),
            client_id,
            successful: Some(successful),
            ..Self::new(meta(META_HANDSHAKE))
        }
    }

    pub fn connect_request(client_id: &str) -> Self {
        Self {
            client_id: Some(client_id.to_owned()),
            connection_type: Some(ConnectionType::LongPolling),
            ..Self::new(meta(META_CONNECT))
        }
    }

    pub fn connect_reply(successful: bool, advice: Advice) -> Self {
        Self {
            successful: Some(successful),
            advice: Some(advice),
            ..Self::new(meta(META_CONNECT))
        }
    }

    pub fn subscribe_request(client_id: &str, subscription: ChannelName) -> Self {
        Self {
            client_id: Some(client_id.to_owned()),
            subscription: Some(subscription),
            ..Self::new(meta(META_SUBSCRIBE))
        }
    }

    pub fn deliver(channel: ChannelName, id: u64, creation_ts: i64, data: Value) -> Self {
        Self {
            id: Some(id.to_string()),
            data: Some(data),
            ext: Some(Ext { creation_ts: Some(creation_ts) }),
            ..Self::new(channel)
        }
    }

    pub fn is_channel(&self, name: &str) -> bool {
        self.channel.to_string() == name
    }

    pub fn creation_ts(&self) -> Option<i64> {
        self.ext.and_then(|e| e.creation_ts)
    }

    /// Item sequence number carried in `id`, when it is a decimal string.
    pub fn item_id(&self) -> Option<u64> {
        self.id.as_deref().and_then(|s| s.parse().ok())
    }
}

pub fn encode_batch(messages: &[BayeuxMessage]) -> Result<Vec<u8>, ProtocolError> {
    if messages.is_empty() {
        return Err(ProtocolError::EmptyBatch);
    }
    if messages.len() > MAX_BATCH {
        return Err(ProtocolError::BatchTooLarge(messages.len()));
    }
    serde_json::to_vec(messages).map_err(|e| ProtocolError::Decode(e.to_string()))
}

pub fn decode_batch(bytes: &[u8]) -> Result<Vec<BayeuxMessage>, ProtocolError> {
    let value: Value =
        serde_json::from_slice(bytes).map_err(|e| ProtocolError::Decode(e.to_string()))?;
    let Value::Array(items) = value else {
        return Err(ProtocolError::Decode("batch is not a JSON array".into()));
    };
    if items.is_empty() {
        return Err(ProtocolError::EmptyBatch);
    }
    if items.len() > MAX_BATCH {
        return Err(ProtocolError::BatchTooLarge(items.len()));
    }
    items
        .into_iter()
        .map(|v| serde_json::from_value(v).map_err(|e| ProtocolError::Decode(e.to_string())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn handshake_wire_shape() {
        let bytes = encode_batch(&[BayeuxMessage::handshake_request()]).unwrap();
        let v: Value = serde_json::from_slice(&bytes).unwrap();
        assert_eq!(
            v,
            json!([{
                "channel": "/meta/handshake",
                "version": "1.0",
                "supportedConnectionTypes": ["long-polling"]
            }])
        );
    }

    #[test]
    fn connect_and_deliver_wire_shape() {
        let reply = BayeuxMessage::connect_reply(true, Advice::retry(45_000));
        let v = serde_json::to_value(&reply).unwrap();
        assert_eq!(
            v,
            json!({"channel": "/meta/connect", "successful": true,
                   "advice": {"reconnect": "retry", "timeout": 45000, "interval": 0}})
        );
        let req = serde_json::to_value(BayeuxMessage::connect_request("c1")).unwrap();
        assert_eq!(req, json!({"channel": "/meta/connect", "clientId": "c1", "connectionType": "long-polling"}));

        let d = BayeuxMessage::deliver("/stock/AAPL".parse().unwrap(), 3, 1_000, json!({"p": 1}));
        let v = serde_json::to_value(&d).unwrap();
        assert_eq!(v, json!({"channel": "/stock/AAPL", "id": "3", "data": {"p": 1}, "ext": {"creationTs": 1000}}));
        assert_eq!(d.item_id(), Some(3));
    }

    #[test]
    fn deliver_round_trip_preserves_data() {
        let d = BayeuxMessage::deliver(
            "/stock/AAPL".parse().unwrap(),
            0,
            5,
            json!({"symbol": "AAPL", "price": 12.3}),
        );
        let back = decode_batch(&encode_batch(&[d.clone()]).unwrap()).unwrap();
        assert_eq!(back, vec![d]);
        assert_eq!(back[0].data, Some(json!({"symbol": "AAPL", "price": 12.3})));
    }

    #[test]
    fn decode_errors() {
        assert!(matches!(decode_batch(b"[]"), Err(ProtocolError::EmptyBatch)));
        assert!(matches!(decode_batch(b"{}"), Err(ProtocolError::Decode(_))));
        assert!(matches!(decode_batch(b"[{\"id\":\"1\"}]"), Err(ProtocolError::Decode(_))));
        assert!(matches!(decode_batch(b"[{\"channel\":\"/a//b\"}]"), Err(ProtocolError::Decode(_))));
        assert!(matches!(decode_batch(b"not json"), Err(ProtocolError::Decode(_))));

        let big = vec![serde_json::json!({"channel": "/a"}); MAX_BATCH + 1];
        let bytes = serde_json::to_vec(&big).unwrap();
        assert!(matches!(decode_batch(&bytes), Err(ProtocolError::BatchTooLarge(65))));
    }

    #[test]
    fn unknown_fields_are_ignored() {
        let m = decode_batch(br#"[{"channel":"/meta/connect","clientId":"x","bogus":[1,2]}]"#).unwrap();
        assert_eq!(m[0].client_id.as_deref(), Some("x"));
    }

    #[test]
    fn explicit_null_data_survives() {
        let mut m = BayeuxMessage::new("/a".parse().unwrap());
        m.data = Some(Value::Null);
        let back = decode_batch(&encode_batch(&[m.clone()]).unwrap()).unwrap();
        assert_eq!(back, vec![m]);
    }
}
