//! Wire messages shared by the DHT and block-exchange layers.
//!
//! Every message travelling over the simulated network is one of these
//! variants, wrapped in an [`Envelope`] carrying the sender and a format
//! version. The stable encoding used for logging and replay is versioned
//! JSON via [`encode_envelope`] / [`decode_envelope`]; CIDs appear as
//! base58 text and binary payloads as byte arrays.

use serde::{Deserialize, Serialize};

use crate::dht::{Key, PeerId, PeerInfo, ProviderRecord};
use crate::exchange::ExchangeMessage;
use crate::node::IpnsRecord;

/// Bumped whenever the message layout changes.
pub const PROTO_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RpcRequest {
    Ping,
    FindNode { target: Key },
    GetProviders { key: Key },
    PutProvider { record: ProviderRecord },
    PutIpns { record: IpnsRecord },
    GetIpns { key: Key },
    Exchange(ExchangeMessage),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RpcReply {
    Pong,
    Nodes { peers: Vec<PeerInfo> },
    Providers { records: Vec<ProviderRecord>, closer: Vec<PeerInfo> },
    IpnsRecords { records: Vec<IpnsRecord>, closer: Vec<PeerInfo> },
    Ack,
    Exchange(Option<ExchangeMessage>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Payload {
    Request(RpcRequest),
    Reply(RpcReply),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub version: u32,
    pub from: PeerId,
    pub payload: Payload,
}

impl RpcRequest {
    /// Short label for metrics and the event trace.
    pub fn label(&self) -> &'static str {
        match self {
            RpcRequest::Ping => "ping",
            RpcRequest::FindNode { .. } => "find_node",
            RpcRequest::GetProviders { .. } => "get_providers",
            RpcRequest::PutProvider { .. } => "put_provider",
            RpcRequest::PutIpns { .. } => "put_ipns",
            RpcRequest::GetIpns { .. } => "get_ipns",
            RpcRequest::Exchange(msg) => msg.label(),
        }
    }
}

impl RpcReply {
    pub fn label(&self) -> &'static str {
        match self {
            RpcReply::Pong => "pong",
            RpcReply::Nodes { .. } => "nodes",
            RpcReply::Providers { .. } => "providers",
            RpcReply::IpnsRecords { .. } => "ipns_records",
            RpcReply::Ack => "ack",
            RpcReply::Exchange(Some(msg)) => msg.label(),
            RpcReply::Exchange(None) => "no_reply",
        }
    }

    /// Payload bytes carried, for the bytes-transferred metric.
    pub fn payload_bytes(&self) -> u64 {
        match self {
            RpcReply::Exchange(Some(ExchangeMessage::Block { data, .. })) => data.len() as u64,
            _ => 0,
        }
    }
}

pub fn encode_envelope(env: &Envelope) -> String {
    serde_json::to_string(env).expect("envelope serializes")
}

pub fn decode_envelope(text: &str) -> Result<Envelope, serde_json::Error> {
    serde_json::from_str(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cid::{Cid, SHA2_256};

    #[test]
    fn envelope_round_trip() {
        let cid = Cid::from_data(b"blob", SHA2_256).unwrap();
        let env = Envelope {
            version: PROTO_VERSION,
            from: Key([7; 32]),
            payload: Payload::Request(RpcRequest::Exchange(ExchangeMessage::Want {
                cid,
                priority: 3,
            })),
        };
        let text = encode_envelope(&env);
        assert!(text.contains("\"version\":1"));
        assert_eq!(decode_envelope(&text).unwrap(), env);
    }

    #[test]
    fn decode_rejects_garbage() {
        assert!(decode_envelope("{not json").is_err());
        assert!(decode_envelope("{\"version\":1}").is_err());
    }
}
