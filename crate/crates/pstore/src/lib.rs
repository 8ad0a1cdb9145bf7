//! A desk-scale decentralised content-addressed storage stack: CIDs,
//! chunked Merkle-DAG storage, Kademlia-style provider routing, want-list
//! block exchange, pinning and garbage collection, mutable signed names,
//! and an HTTP gateway, all runnable over a deterministic simulated
//! network.

pub mod cid;
pub mod cli;
pub mod dag;
pub mod dht;
pub mod exchange;
pub mod gateway;
pub mod node;
pub mod ops;
pub mod proto;
pub mod scenario;
pub mod simnet;
pub mod varint;
