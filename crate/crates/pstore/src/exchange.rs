//! Want-list block exchange: request blocks by CID from candidate
//! providers, serve blocks subject to the local sharing policy, verify
//! everything on receipt.
//!
//! The protocol is a minimal request/response variant
//! (Want/Have/Block/Cancel/DontHave) with no debt ledger. Fetching walks
//! candidates in distance order and widens on DontHave; the first block
//! that verifies wins, corrupt copies are counted and skipped.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cid::Cid;
use crate::dag::{classify_block, BlockView};
use crate::dht::PeerInfo;
use crate::node::NodeState;
use crate::proto::{RpcReply, RpcRequest};
use crate::simnet::Sim;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ExchangeMessage {
    Want { cid: Cid, priority: u32 },
    Have { cid: Cid },
    Block { cid: Cid, data: Vec<u8> },
    Cancel { cid: Cid },
    DontHave { cid: Cid },
}

impl ExchangeMessage {
    pub fn label(&self) -> &'static str {
        match self {
            ExchangeMessage::Want { .. } => "want",
            ExchangeMessage::Have { .. } => "have",
            ExchangeMessage::Block { .. } => "block",
            ExchangeMessage::Cancel { .. } => "cancel",
            ExchangeMessage::DontHave { .. } => "dont_have",
        }
    }
}

/// Outstanding requests, keyed by (session, cid). A cid appears at most
/// once per session.
#[derive(Debug, Default)]
pub struct WantList {
    entries: BTreeMap<(u64, Cid), u32>,
}

impl WantList {
    pub fn add(&mut self, session: u64, cid: Cid, priority: u32) {
        self.entries.insert((session, cid), priority);
    }

    pub fn remove(&mut self, session: u64, cid: &Cid) {
        self.entries.remove(&(session, cid.clone()));
    }

    /// Drop every entry in a session (cancellation).
    pub fn cancel_session(&mut self, session: u64) {
        self.entries.retain(|(s, _), _| *s != session);
    }

    /// Complete a cid across all sessions (the block arrived).
    pub fn complete(&mut self, cid: &Cid) {
        self.entries.retain(|(_, c), _| c != cid);
    }

    pub fn wants(&self, cid: &Cid) -> bool {
        self.entries.keys().any(|(_, c)| c == cid)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }
}

/// Inbound exchange message dispatch for one peer.
///
/// A node with sharing disabled answers DontHave even for blocks it
/// holds; it can still fetch and cache for itself.
pub fn handle_exchange(
    node: &mut NodeState,
    now: u64,
    _from: &crate::dht::PeerId,
    msg: ExchangeMessage,
) -> Option<ExchangeMessage> {
    match msg {
        ExchangeMessage::Want { cid, .. } => {
            if node.share_cache {
                if let Some(data) = node.blockstore.get(&cid, now) {
                    return Some(ExchangeMessage::Block { cid, data });
                }
            }
            Some(ExchangeMessage::DontHave { cid })
        }
        ExchangeMessage::Block { cid, data } => {
            if cid.verify(&data) && node.wants.wants(&cid) {
                let _ = node.store_block(cid.clone(), data, now);
                node.wants.complete(&cid);
            }
            None
        }
        ExchangeMessage::Have { .. } => None,
        ExchangeMessage::Cancel { .. } => None,
        ExchangeMessage::DontHave { .. } => None,
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FetchError {
    #[error("block {0} not found on any candidate")]
    NotFound(Cid),
    #[error("fetch of {0} timed out")]
    Timeout(Cid),
    #[error("every received copy of {0} failed verification")]
    IntegrityViolation(Cid),
}

/// Request one block from `candidates`, nearest first. The first
/// verified copy is cached locally and returned.
pub fn fetch_block(
    sim: &mut Sim,
    id: usize,
    cid: &Cid,
    candidates: &[PeerInfo],
) -> Result<Vec<u8>, FetchError> {
    let now = sim.now();
    if let Some(data) = sim.node_mut(id).blockstore.get(cid, now) {
        return Ok(data);
    }
    let timeout = sim.node(id).config.fetch_timeout;
    let started = sim.now();
    let session = {
        let node = sim.node_mut(id);
        node.next_session += 1;
        node.next_session
    };
    sim.node_mut(id).wants.add(session, cid.clone(), 1);

    let me = sim.peer_id(id);
    let mut saw_corrupt = false;
    let mut outcome = Err(FetchError::NotFound(cid.clone()));
    for candidate in candidates {
        if candidate.peer == me {
            continue;
        }
        let Some(to) = candidate.sim_index() else { continue };
        if sim.now().saturating_sub(started) > timeout {
            outcome = Err(FetchError::Timeout(cid.clone()));
            break;
        }
        let req = RpcRequest::Exchange(ExchangeMessage::Want { cid: cid.clone(), priority: 1 });
        match sim.rpc(id, to, req) {
            Ok(RpcReply::Exchange(Some(ExchangeMessage::Block { cid: got, data })))
                if &got == cid =>
            {
                if cid.verify(&data) {
                    let now = sim.now();
                    let fresh = sim
                        .node_mut(id)
                        .store_block(cid.clone(), data.clone(), now)
                        .unwrap_or(false);
                    if !fresh {
                        sim.metrics.duplicate_blocks += 1;
                    }
                    outcome = Ok(data);
                    break;
                }
                sim.metrics.corruptions_detected += 1;
                saw_corrupt = true;
            }
            _ => {} // DontHave, unreachable, or malformed: widen to the next candidate
        }
    }
    if outcome.is_err() && saw_corrupt {
        outcome = Err(FetchError::IntegrityViolation(cid.clone()));
    }
    // no leaked entries after success or failure
    sim.node_mut(id).wants.cancel_session(session);
    outcome
}

/// Candidate contacts from provider records, excluding `me`.
pub fn provider_candidates(
    records: &[crate::dht::ProviderRecord],
    me: &crate::dht::PeerId,
    now: u64,
) -> Vec<PeerInfo> {
    records
        .iter()
        .filter(|r| &r.provider != me)
        .map(|r| PeerInfo { peer: r.provider, addresses: r.addresses.clone(), last_seen: now })
        .collect()
}

/// Breadth-first fetch of the whole DAG under `root`, resolving
/// providers through the DHT per block. Returns every fetched CID; on
/// success the local blockstore can reassemble the root offline.
pub fn fetch_dag(sim: &mut Sim, id: usize, root: &Cid) -> Result<Vec<Cid>, FetchError> {
    let me = sim.peer_id(id);
    let k = sim.node(id).config.k;
    let mut queue = VecDeque::from([root.clone()]);
    let mut fetched = Vec::new();
    while let Some(cid) = queue.pop_front() {
        if fetched.contains(&cid) {
            continue;
        }
        let now = sim.now();
        let data = match sim.node_mut(id).blockstore.get(&cid, now) {
            Some(data) => data,
            None => {
                let records = sim.find_providers(id, &cid, k);
                let candidates = provider_candidates(&records, &me, sim.now());
                fetch_block(sim, id, &cid, &candidates)?
            }
        };
        fetched.push(cid);
        if let BlockView::Interior(node) = classify_block(&data) {
            for link in node.links() {
                queue.push_back(link.target.clone());
            }
        }
    }
    Ok(fetched)
}
