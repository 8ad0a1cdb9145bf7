//! Per-peer state: the blockstore with pinning and LRU garbage
//! collection, provider and IPNS record stores, the routing table, and
//! the inbound RPC handler. Network-driving flows (add/get/publish) live
//! on the simulator, which owns message delivery.

use std::collections::BTreeMap;

use ed25519_dalek::{Signer, SigningKey, Verifier, VerifyingKey};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cid::{Cid, SHA2_256};
use crate::dht::{dht_key_for, Key, Multiaddress, PeerId, PeerInfo, ProviderStore, RoutingTable};
use crate::exchange;
use crate::proto::{RpcReply, RpcRequest};

pub const HOUR_MS: u64 = 3_600_000;

/// Tunables for a single peer. All times are simulation milliseconds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeConfig {
    pub chunk_size: usize,
    pub fanout: usize,
    pub capacity_bytes: u64,
    pub provider_ttl: u64,
    pub reprovide_interval: u64,
    pub share_cache: bool,
    pub k: usize,
    pub alpha: usize,
    pub gc_interval: u64,
    pub fetch_timeout: u64,
    pub provider_cap: usize,
}

impl Default for NodeConfig {
    fn default() -> Self {
        NodeConfig {
            chunk_size: crate::dag::DEFAULT_CHUNK_SIZE,
            fanout: crate::dag::DEFAULT_FANOUT,
            capacity_bytes: 1 << 30,
            provider_ttl: 24 * HOUR_MS,
            reprovide_interval: 12 * HOUR_MS,
            share_cache: true,
            k: 20,
            alpha: 3,
            gc_interval: HOUR_MS,
            fetch_timeout: 30_000,
            provider_cap: 64,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NodeError {
    #[error("invalid path {0:?}")]
    InvalidPath(String),
    #[error("not-found")]
    NotFound,
    #[error("timeout")]
    Timeout,
    #[error("integrity-violation")]
    IntegrityViolation,
    #[error("segment {0:?} not found")]
    SegmentNotFound(String),
    #[error("segment {0:?} applied to a non-directory")]
    NotADirectory(String),
    #[error("storage-full")]
    StorageFull,
    #[error("no dnslink record for {0:?}")]
    NoRecord(String),
    #[error("malformed dnslink record {0:?}")]
    MalformedDnslink(String),
    #[error("dnslink recursion limit exceeded")]
    RecursionLimit,
    #[error("invalid-signature")]
    InvalidSignature,
    #[error("duplicate or invalid entry name {0:?}")]
    InvalidName(String),
}

impl From<crate::dag::DagError> for NodeError {
    fn from(err: crate::dag::DagError) -> NodeError {
        use crate::dag::DagError::*;
        match err {
            SegmentNotFound(s) => NodeError::SegmentNotFound(s),
            NotADirectory(s) => NodeError::NotADirectory(s),
            IntegrityViolation(_) => NodeError::IntegrityViolation,
            MissingBlock(_) => NodeError::NotFound,
            InvalidPath(p) => NodeError::InvalidPath(p),
            Cid(_) | MalformedNode => NodeError::InvalidPath(String::new()),
            DuplicateName(n) | InvalidName(n) => NodeError::InvalidName(n),
            NotAFile(_) => NodeError::NotFound,
        }
    }
}

#[derive(Debug, Clone)]
struct BlockEntry {
    data: Vec<u8>,
    last_access: u64,
}

/// Content-addressed block storage with access tracking and a byte
/// capacity enforced by [`NodeState::gc`].
#[derive(Debug, Default)]
pub struct Blockstore {
    blocks: BTreeMap<Cid, BlockEntry>,
    used_bytes: u64,
}

impl Blockstore {
    pub fn contains(&self, cid: &Cid) -> bool {
        self.blocks.contains_key(cid)
    }

    pub fn get(&mut self, cid: &Cid, now: u64) -> Option<Vec<u8>> {
        let entry = self.blocks.get_mut(cid)?;
        entry.last_access = now;
        Some(entry.data.clone())
    }

    pub fn peek(&self, cid: &Cid) -> Option<&[u8]> {
        self.blocks.get(cid).map(|e| e.data.as_slice())
    }

    pub fn put(&mut self, cid: Cid, data: Vec<u8>, now: u64) -> bool {
        if self.blocks.contains_key(&cid) {
            self.blocks.get_mut(&cid).unwrap().last_access = now;
            return false;
        }
        self.used_bytes += data.len() as u64;
        self.blocks.insert(cid, BlockEntry { data, last_access: now });
        true
    }

    pub fn remove(&mut self, cid: &Cid) -> bool {
        if let Some(entry) = self.blocks.remove(cid) {
            self.used_bytes -= entry.data.len() as u64;
            true
        } else {
            false
        }
    }

    pub fn used_bytes(&self) -> u64 {
        self.used_bytes
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn cids(&self) -> impl Iterator<Item = &Cid> {
        self.blocks.keys()
    }
}

/// Pin roots; recursive pins protect the whole reachable closure.
#[derive(Debug, Default, Clone)]
pub struct PinSet {
    roots: BTreeMap<Cid, bool>,
}

impl PinSet {
    pub fn pin(&mut self, cid: Cid, recursive: bool) {
        self.roots.insert(cid, recursive);
    }

    pub fn unpin(&mut self, cid: &Cid) -> bool {
        self.roots.remove(cid).is_some()
    }

    pub fn roots(&self) -> impl Iterator<Item = (&Cid, bool)> {
        self.roots.iter().map(|(c, r)| (c, *r))
    }

    pub fn is_pinned_root(&self, cid: &Cid) -> bool {
        self.roots.contains_key(cid)
    }
}

/// A signed, sequenced pointer from a key-derived name to a path.
///
/// `name` is the multihash digest of the publisher's public key, so the
/// record is self-certifying: verifiers recompute the name from
/// `public_key` and check the signature over (value, sequence).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IpnsRecord {
    pub name: Key,
    pub public_key: Vec<u8>,
    pub value: String,
    pub sequence: u64,
    pub signature: Vec<u8>,
    pub expires_at: u64,
}

/// Canonical bytes the IPNS signature covers.
fn ipns_signing_message(value: &str, sequence: u64) -> Vec<u8> {
    let mut msg = Vec::with_capacity(value.len() + 16);
    crate::varint::write_uvarint(&mut msg, sequence);
    crate::varint::write_uvarint(&mut msg, value.len() as u64);
    msg.extend_from_slice(value.as_bytes());
    msg
}

impl IpnsRecord {
    pub fn sign(key: &SigningKey, value: String, sequence: u64, expires_at: u64) -> IpnsRecord {
        let public_key = key.verifying_key().to_bytes().to_vec();
        let name = Key::from_slice(
            Cid::from_data(&public_key, SHA2_256).expect("sha-256 registered").digest(),
        )
        .expect("32-byte digest");
        let signature = key.sign(&ipns_signing_message(&value, sequence)).to_vec();
        IpnsRecord { name, public_key, value, sequence, signature, expires_at }
    }

    /// Signature valid under `public_key` and name matches the key.
    pub fn verify(&self) -> bool {
        let Ok(pk_bytes): Result<[u8; 32], _> = self.public_key.as_slice().try_into() else {
            return false;
        };
        let Ok(vk) = VerifyingKey::from_bytes(&pk_bytes) else { return false };
        let derived = Cid::from_data(&self.public_key, SHA2_256).expect("sha-256 registered");
        if Key::from_slice(derived.digest()) != Some(self.name) {
            return false;
        }
        let Ok(sig_bytes): Result<[u8; 64], _> = self.signature.as_slice().try_into() else {
            return false;
        };
        let sig = ed25519_dalek::Signature::from_bytes(&sig_bytes);
        vk.verify(&ipns_signing_message(&self.value, self.sequence), &sig).is_ok()
    }

    /// The base58 text name ("Qm…", since it is a SHA-256 multihash).
    pub fn name_text(&self) -> String {
        name_text_for(&self.name)
    }
}

pub fn name_text_for(name: &Key) -> String {
    let mh = crate::cid::multihash_encode(SHA2_256, &name.0).expect("32-byte digest");
    crate::cid::base58_encode(&mh)
}

pub fn parse_name_text(text: &str) -> Result<Key, NodeError> {
    let cid = Cid::parse(text).map_err(|_| NodeError::InvalidPath(text.to_string()))?;
    Key::from_slice(cid.digest()).ok_or_else(|| NodeError::InvalidPath(text.to_string()))
}

/// Bookkeeping for content this node announced to the DHT.
#[derive(Debug, Clone)]
pub struct ProvidedEntry {
    pub last_provided: u64,
    /// Per-cid privacy override: never republish when false.
    pub reprovide: bool,
}

/// The full state of one simulated peer. Mutated only by its owning
/// event handler; peers interact exclusively through messages.
pub struct NodeState {
    pub index: usize,
    pub peer_id: PeerId,
    pub signing_key: SigningKey,
    pub config: NodeConfig,
    pub table: RoutingTable,
    pub providers: ProviderStore,
    pub ipns_store: BTreeMap<Key, Vec<IpnsRecord>>,
    pub blockstore: Blockstore,
    pub pins: PinSet,
    pub provided: BTreeMap<Cid, ProvidedEntry>,
    pub ipns_sequence: u64,
    pub ipns_value: Option<String>,
    pub share_cache: bool,
    pub reprovide_enabled: bool,
    /// Set when pins alone exceed capacity and gc cannot get under it.
    pub storage_full: bool,
    pub wants: exchange::WantList,
    pub next_session: u64,
}

impl NodeState {
    pub fn new(index: usize, key_seed: [u8; 32], config: NodeConfig, _now: u64) -> NodeState {
        let signing_key = SigningKey::from_bytes(&key_seed);
        let public = signing_key.verifying_key().to_bytes();
        let peer_id = Key::from_slice(
            Cid::from_data(&public, SHA2_256).expect("sha-256 registered").digest(),
        )
        .expect("32-byte digest");
        let share_cache = config.share_cache;
        NodeState {
            index,
            peer_id,
            signing_key,
            table: RoutingTable::new(peer_id, config.k),
            providers: ProviderStore::new(config.provider_cap),
            ipns_store: BTreeMap::new(),
            blockstore: Blockstore::default(),
            pins: PinSet::default(),
            provided: BTreeMap::new(),
            ipns_sequence: 0,
            ipns_value: None,
            share_cache,
            reprovide_enabled: true,
            storage_full: false,
            wants: exchange::WantList::default(),
            next_session: 0,
            config,
        }
    }

    pub fn address(&self) -> Multiaddress {
        Multiaddress::Sim { node_index: self.index }
    }

    pub fn peer_info(&self, now: u64) -> PeerInfo {
        PeerInfo { peer: self.peer_id, addresses: vec![self.address()], last_seen: now }
    }

    /// Every CID protected by a pin: recursive roots close over the
    /// locally present DAG, direct roots protect only themselves.
    pub fn pinned_closure(&self) -> Vec<Cid> {
        let mut protected = Vec::new();
        for (root, recursive) in self.pins.roots() {
            if recursive {
                let mut fetch = |cid: &Cid| -> Result<Option<Vec<u8>>, crate::dag::DagError> {
                    Ok(self.blockstore.peek(cid).map(|d| d.to_vec()))
                };
                if let Ok(reachable) = crate::dag::reachable_blocks(root, &mut fetch) {
                    protected.extend(reachable);
                }
            } else {
                protected.push(root.clone());
            }
        }
        protected.sort();
        protected.dedup();
        protected
    }

    /// Evict unpinned blocks, least recently accessed first, until usage
    /// fits the capacity. Returns the evicted CIDs in eviction order.
    pub fn gc(&mut self, _now: u64) -> Vec<Cid> {
        let capacity = self.config.capacity_bytes;
        if self.blockstore.used_bytes() <= capacity {
            self.storage_full = false;
            return Vec::new();
        }
        let protected: std::collections::BTreeSet<Cid> =
            self.pinned_closure().into_iter().collect();
        let mut candidates: Vec<(u64, Cid)> = self
            .blockstore
            .blocks
            .iter()
            .filter(|(cid, _)| !protected.contains(cid))
            .map(|(cid, entry)| (entry.last_access, cid.clone()))
            .collect();
        candidates.sort();
        let mut evicted = Vec::new();
        for (_, cid) in candidates {
            if self.blockstore.used_bytes() <= capacity {
                break;
            }
            self.blockstore.remove(&cid);
            self.provided.remove(&cid);
            evicted.push(cid);
        }
        self.storage_full = self.blockstore.used_bytes() > capacity;
        evicted
    }

    /// Store a block, garbage-collecting on capacity breach.
    pub fn store_block(&mut self, cid: Cid, data: Vec<u8>, now: u64) -> Result<bool, NodeError> {
        let fresh = self.blockstore.put(cid, data, now);
        if self.blockstore.used_bytes() > self.config.capacity_bytes {
            self.gc(now);
            if self.storage_full {
                return Err(NodeError::StorageFull);
            }
        }
        Ok(fresh)
    }

    /// Inbound RPC dispatch. Every message also refreshes the sender's
    /// routing-table entry.
    pub fn handle_rpc(&mut self, now: u64, sender: PeerInfo, req: RpcRequest) -> RpcReply {
        if sender.peer != self.peer_id {
            self.table.update(sender.clone());
        }
        match req {
            RpcRequest::Ping => RpcReply::Pong,
            RpcRequest::FindNode { target } => RpcReply::Nodes {
                peers: self.table.closest_peers(&target, self.config.k),
            },
            RpcRequest::GetProviders { key } => RpcReply::Providers {
                records: self.providers.get(&key, now),
                closer: self.table.closest_peers(&key, self.config.k),
            },
            RpcRequest::PutProvider { record } => {
                self.providers.put(record);
                RpcReply::Ack
            }
            RpcRequest::PutIpns { record } => {
                if record.verify() {
                    let slot = self.ipns_store.entry(record.name).or_default();
                    slot.retain(|r| r.sequence > record.sequence);
                    if slot.is_empty() {
                        slot.push(record);
                    }
                }
                RpcReply::Ack
            }
            RpcRequest::GetIpns { key } => RpcReply::IpnsRecords {
                records: self
                    .ipns_store
                    .get(&key)
                    .map(|v| v.iter().filter(|r| r.expires_at > now).cloned().collect())
                    .unwrap_or_default(),
                closer: self.table.closest_peers(&key, self.config.k),
            },
            RpcRequest::Exchange(msg) => {
                RpcReply::Exchange(exchange::handle_exchange(self, now, &sender.peer, msg))
            }
        }
    }

    /// Local provider record for content this node stores.
    pub fn own_provider_record(&self, cid: &Cid, now: u64) -> Option<crate::dht::ProviderRecord> {
        let key = dht_key_for(cid)?;
        Some(crate::dht::ProviderRecord {
            key,
            provider: self.peer_id,
            addresses: vec![self.address()],
            expires_at: now + self.config.provider_ttl,
        })
    }
}

/// Parse `dnslink=/ipfs/<cid>` or `dnslink=/ipns/<name>` TXT values.
/// Returns the path target of the first well-formed record.
pub fn parse_dnslink(records: &[String]) -> Result<String, NodeError> {
    for rec in records {
        if let Some(value) = rec.strip_prefix("dnslink=") {
            if value.starts_with("/ipfs/") || value.starts_with("/ipns/") {
                return Ok(value.to_string());
            }
            return Err(NodeError::MalformedDnslink(rec.clone()));
        }
    }
    Err(NodeError::NoRecord(records.first().cloned().unwrap_or_default()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_node(capacity: u64) -> NodeState {
        let mut config = NodeConfig { capacity_bytes: capacity, ..NodeConfig::default() };
        config.chunk_size = 1024;
        config.fanout = 4;
        NodeState::new(0, [9u8; 32], config, 0)
    }

    fn block(byte: u8, len: usize) -> (Cid, Vec<u8>) {
        let data = vec![byte; len];
        (Cid::from_data(&data, SHA2_256).unwrap(), data)
    }

    #[test]
    fn gc_evicts_lru_until_under_capacity() {
        let mut node = test_node(3000);
        for (i, t) in [(1u8, 10u64), (2, 30), (3, 20), (4, 40)] {
            let (cid, data) = block(i, 1000);
            node.blockstore.put(cid, data, t);
        }
        let evicted = node.gc(100);
        assert!(node.blockstore.used_bytes() <= 3000);
        // least recently accessed first: t=10 then t=20
        let (c1, _) = block(1, 1000);
        assert_eq!(evicted[0], c1);
        assert_eq!(evicted.len(), 1);
    }

    #[test]
    fn pinned_blocks_survive_gc() {
        let mut node = test_node(2000);
        let (keep, keep_data) = block(1, 1000);
        let (evict, evict_data) = block(2, 1000);
        let (extra, extra_data) = block(3, 1000);
        node.blockstore.put(keep.clone(), keep_data, 5);
        node.blockstore.put(evict.clone(), evict_data, 50);
        node.pins.pin(keep.clone(), true);
        node.blockstore.put(extra, extra_data, 60);
        let evicted = node.gc(100);
        assert!(node.blockstore.contains(&keep), "pinned block evicted");
        assert_eq!(evicted, vec![evict]);
    }

    #[test]
    fn all_pinned_over_capacity_flags_storage_full() {
        let mut node = test_node(1000);
        for i in 0..3u8 {
            let (cid, data) = block(i, 600);
            node.blockstore.put(cid.clone(), data, i as u64);
            node.pins.pin(cid, false);
        }
        let evicted = node.gc(10);
        assert!(evicted.is_empty());
        assert!(node.storage_full);
    }

    #[test]
    fn recursive_pin_protects_descendants() {
        let mut node = test_node(100);
        let data: Vec<u8> = (0..5000u32).map(|i| (i % 251) as u8).collect();
        let blocks = crate::dag::chunk(&data, 1024);
        let (root, nodes) = crate::dag::build_file_dag(&blocks, 2);
        let mut unique: Vec<Cid> = nodes.iter().map(|b| b.cid.clone()).collect();
        unique.sort();
        unique.dedup();
        for b in &nodes {
            node.blockstore.put(b.cid.clone(), b.data.clone(), 0);
        }
        node.pins.pin(root, true);
        let closure = node.pinned_closure();
        assert_eq!(closure.len(), unique.len());
        node.gc(10);
        assert_eq!(node.blockstore.len(), unique.len(), "pinned closure must survive");
        assert!(node.storage_full);
    }

    #[test]
    fn ipns_record_sign_and_verify() {
        let key = SigningKey::from_bytes(&[3u8; 32]);
        let rec = IpnsRecord::sign(&key, "/ipfs/QmX".into(), 1, 1000);
        assert!(rec.verify());
        assert!(rec.name_text().starts_with("Qm"));

        let mut forged = rec.clone();
        forged.value = "/ipfs/QmY".into();
        assert!(!forged.verify(), "tampered value must fail");

        let mut replayed = rec.clone();
        replayed.sequence += 1;
        assert!(!replayed.verify(), "tampered sequence must fail");

        let other = SigningKey::from_bytes(&[4u8; 32]);
        let mut stolen = IpnsRecord::sign(&other, "/ipfs/QmZ".into(), 2, 1000);
        stolen.name = rec.name; // claim someone else's name
        assert!(!stolen.verify());
    }

    #[test]
    fn put_ipns_keeps_highest_sequence() {
        let mut node = test_node(10_000);
        let key = SigningKey::from_bytes(&[5u8; 32]);
        let v1 = IpnsRecord::sign(&key, "/ipfs/Qm1".into(), 1, 10_000);
        let v2 = IpnsRecord::sign(&key, "/ipfs/Qm2".into(), 2, 10_000);
        let name = v1.name;
        let sender = node.peer_info(0);
        node.handle_rpc(0, sender.clone(), RpcRequest::PutIpns { record: v2.clone() });
        node.handle_rpc(0, sender.clone(), RpcRequest::PutIpns { record: v1 });
        match node.handle_rpc(5, sender, RpcRequest::GetIpns { key: name }) {
            RpcReply::IpnsRecords { records, .. } => {
                assert_eq!(records.len(), 1);
                assert_eq!(records[0].sequence, 2);
            }
            other => panic!("unexpected reply {other:?}"),
        }
    }

    #[test]
    fn dnslink_parsing() {
        assert_eq!(parse_dnslink(&["dnslink=/ipfs/QmX".into()]).unwrap(), "/ipfs/QmX");
        assert_eq!(parse_dnslink(&["x=1".into(), "dnslink=/ipns/QmN".into()]).unwrap(),
                   "/ipns/QmN");
        assert!(matches!(parse_dnslink(&["dnslink=http://x".into()]),
                         Err(NodeError::MalformedDnslink(_))));
        assert!(matches!(parse_dnslink(&[]), Err(NodeError::NoRecord(_))));
    }
}
