//! The peer-facing operations: publish (add, provide, pin), retrieve
//! (resolve, fetch, reassemble), mutable names (IPNS, dnslink), and the
//! privacy switch. These drive the network, so they live on [`Sim`].

use std::collections::BTreeMap;

use crate::cid::Cid;
use crate::dag::{build_directory_dag, build_file_dag, chunk, reassemble, resolve_path, IpfsPath};
use crate::dht::Key;
use crate::exchange::{fetch_block, fetch_dag, provider_candidates, FetchError};
use crate::node::{name_text_for, parse_name_text, IpnsRecord, NodeError};
use crate::proto::{RpcReply, RpcRequest};
use crate::simnet::Sim;

/// Maximum dnslink/IPNS indirection depth.
pub const NAME_RECURSION_CAP: usize = 8;

impl From<FetchError> for NodeError {
    fn from(err: FetchError) -> NodeError {
        match err {
            FetchError::NotFound(_) => NodeError::NotFound,
            FetchError::Timeout(_) => NodeError::Timeout,
            FetchError::IntegrityViolation(_) => NodeError::IntegrityViolation,
        }
    }
}

/// A parsed retrieval path: immutable content or a mutable name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StorePath {
    Ipfs(IpfsPath),
    /// `/ipns/<name-or-domain>/seg...`; a name containing '.' is a
    /// dnslink domain.
    Ipns { name: String, segments: Vec<String> },
}

impl StorePath {
    pub fn parse(text: &str) -> Result<StorePath, NodeError> {
        if text.starts_with("/ipfs/") {
            return Ok(StorePath::Ipfs(
                IpfsPath::parse(text).map_err(|_| NodeError::InvalidPath(text.to_string()))?,
            ));
        }
        if let Some(rest) = text.strip_prefix("/ipns/") {
            let mut parts = rest.split('/');
            let name = parts
                .next()
                .filter(|s| !s.is_empty())
                .ok_or_else(|| NodeError::InvalidPath(text.to_string()))?
                .to_string();
            let segments = parts.filter(|s| !s.is_empty()).map(|s| s.to_string()).collect();
            return Ok(StorePath::Ipns { name, segments });
        }
        Err(NodeError::InvalidPath(text.to_string()))
    }
}

/// Network-backed block fetcher used while resolving path segments.
struct NetFetcher<'a> {
    sim: &'a mut Sim,
    id: usize,
}

impl crate::dag::BlockFetcher for NetFetcher<'_> {
    fn fetch(&mut self, cid: &Cid) -> Result<Option<Vec<u8>>, crate::dag::DagError> {
        let now = self.sim.now();
        if let Some(data) = self.sim.node_mut(self.id).blockstore.get(cid, now) {
            return Ok(Some(data));
        }
        let k = self.sim.node(self.id).config.k;
        let me = self.sim.peer_id(self.id);
        let records = self.sim.find_providers(self.id, cid, k);
        let candidates = provider_candidates(&records, &me, self.sim.now());
        match fetch_block(self.sim, self.id, cid, &candidates) {
            Ok(data) => Ok(Some(data)),
            Err(FetchError::IntegrityViolation(c)) => {
                Err(crate::dag::DagError::IntegrityViolation(c))
            }
            Err(_) => Ok(None),
        }
    }
}

impl Sim {
    /// Chunk, build the DAG, store every block locally, announce every
    /// block to the DHT, and optionally pin the root recursively. Content
    /// is never pushed to other peers.
    pub fn add(&mut self, id: usize, data: &[u8], pin: bool) -> Result<Cid, NodeError> {
        let (chunk_size, fanout) = {
            let c = &self.node(id).config;
            (c.chunk_size, c.fanout)
        };
        let blocks = chunk(data, chunk_size);
        let (root, nodes) = build_file_dag(&blocks, fanout);
        let now = self.now();
        let mut stored = Vec::new();
        for block in &nodes {
            if self.node_mut(id).store_block(block.cid.clone(), block.data.clone(), now)? {
                stored.push(block.cid.clone());
            }
        }
        if pin {
            self.node_mut(id).pins.pin(root.clone(), true);
        }
        for cid in &stored {
            self.provide(id, cid);
        }
        Ok(root)
    }

    /// Add each entry as a file, then a directory node over them.
    pub fn add_directory(
        &mut self,
        id: usize,
        entries: &BTreeMap<String, Vec<u8>>,
        pin: bool,
    ) -> Result<Cid, NodeError> {
        let mut links = BTreeMap::new();
        for (name, data) in entries {
            if name.is_empty() || name.contains('/') {
                return Err(NodeError::InvalidName(name.clone()));
            }
            let cid = self.add(id, data, false)?;
            links.insert(name.clone(), (cid, data.len() as u64));
        }
        let (root, block) = build_directory_dag(&links)?;
        let now = self.now();
        let fresh = self.node_mut(id).store_block(root.clone(), block.data, now)?;
        if pin {
            self.node_mut(id).pins.pin(root.clone(), true);
        }
        if fresh {
            self.provide(id, &root);
        }
        Ok(root)
    }

    /// Resolve a `/ipfs/` or `/ipns/` path to the final content CID,
    /// fetching directory nodes through the network as needed.
    pub fn resolve(&mut self, id: usize, path_text: &str) -> Result<Cid, NodeError> {
        let ipfs_path = match StorePath::parse(path_text)? {
            StorePath::Ipfs(p) => p,
            StorePath::Ipns { name, segments } => {
                let target = self.resolve_name(id, &name, NAME_RECURSION_CAP)?;
                let mut base = match StorePath::parse(&target)? {
                    StorePath::Ipfs(p) => p,
                    StorePath::Ipns { .. } => return Err(NodeError::RecursionLimit),
                };
                base.segments.extend(segments);
                base
            }
        };
        let mut fetcher = NetFetcher { sim: self, id };
        resolve_path(&ipfs_path, &mut fetcher).map_err(NodeError::from)
    }

    /// Full retrieval: resolve, fetch the DAG, reassemble with integrity
    /// checks, and (policy permitting) become a provider for the cached
    /// blocks.
    pub fn get(&mut self, id: usize, path_text: &str) -> Result<Vec<u8>, NodeError> {
        let (_, data) = self.resolve_and_get(id, path_text)?;
        Ok(data)
    }

    /// As [`Sim::get`], also returning the resolved root CID.
    pub fn resolve_and_get(
        &mut self,
        id: usize,
        path_text: &str,
    ) -> Result<(Cid, Vec<u8>), NodeError> {
        let target = self.resolve(id, path_text)?;
        let fetched = fetch_dag(self, id, &target)?;
        let now = self.now();
        let mut local = |cid: &Cid| -> Result<Option<Vec<u8>>, crate::dag::DagError> {
            Ok(self.node_mut(id).blockstore.get(cid, now))
        };
        let data = reassemble(&target, &mut local).map_err(NodeError::from)?;
        if self.node(id).share_cache {
            // announce cached blocks so the node serves as a provider
            let announced: Vec<Cid> = fetched
                .into_iter()
                .filter(|c| !self.node(id).provided.contains_key(c))
                .collect();
            for cid in announced {
                self.provide(id, &cid);
            }
        }
        Ok((target, data))
    }

    /// Pin content, fetching it first when absent.
    pub fn pin(&mut self, id: usize, cid: &Cid, recursive: bool) -> Result<(), NodeError> {
        if !self.node(id).blockstore.contains(cid) || recursive {
            fetch_dag(self, id, cid)?;
        }
        self.node_mut(id).pins.pin(cid.clone(), recursive);
        Ok(())
    }

    pub fn unpin(&mut self, id: usize, cid: &Cid) -> bool {
        self.node_mut(id).pins.unpin(cid)
    }

    pub fn gc_node(&mut self, id: usize) -> Vec<Cid> {
        let now = self.now();
        self.node_mut(id).gc(now)
    }

    /// Publish this node's single mutable name, pointing it at `path`.
    /// The name is static (derived from the node's key); the sequence
    /// number increments on every publish.
    pub fn ipns_publish(&mut self, id: usize, path: &str) -> Result<String, NodeError> {
        StorePath::parse(path)?;
        let now = self.now();
        let record = {
            let node = self.node_mut(id);
            node.ipns_sequence += 1;
            node.ipns_value = Some(path.to_string());
            IpnsRecord::sign(
                &node.signing_key,
                path.to_string(),
                node.ipns_sequence,
                now + node.config.provider_ttl,
            )
        };
        self.put_ipns_record(id, record.clone());
        Ok(record.name_text())
    }

    /// Refresh the expiry of the currently published record.
    pub fn ipns_republish(&mut self, id: usize) {
        let now = self.now();
        let record = {
            let node = self.node(id);
            let Some(value) = node.ipns_value.clone() else { return };
            IpnsRecord::sign(
                &node.signing_key,
                value,
                node.ipns_sequence,
                now + node.config.provider_ttl,
            )
        };
        self.put_ipns_record(id, record);
    }

    fn put_ipns_record(&mut self, id: usize, record: IpnsRecord) {
        let key = record.name;
        let k = self.node(id).config.k;
        let me = self.peer_id(id);
        let targets = self.iterative_find_node(id, key);
        let mut holders: Vec<(Key, Option<usize>)> = targets
            .iter()
            .filter_map(|t| t.sim_index().map(|i| (t.peer.distance(&key), Some(i))))
            .collect();
        holders.push((me.distance(&key), None));
        holders.sort();
        holders.truncate(k);
        for (_, target) in holders {
            match target {
                Some(to) => {
                    let _ = self.rpc(id, to, RpcRequest::PutIpns { record: record.clone() });
                }
                None => {
                    let slot = self.node_mut(id).ipns_store.entry(key).or_default();
                    slot.retain(|r| r.sequence > record.sequence);
                    if slot.is_empty() {
                        slot.push(record.clone());
                    }
                }
            }
        }
    }

    /// Look a name up in the DHT; among records with valid signatures the
    /// highest sequence wins.
    pub fn ipns_resolve(&mut self, id: usize, name_text: &str) -> Result<String, NodeError> {
        let key = parse_name_text(name_text)?;
        let now = self.now();
        let mut candidates: Vec<IpnsRecord> = Vec::new();
        let mut saw_invalid = false;
        if let Some(local) = self.node(id).ipns_store.get(&key) {
            candidates.extend(local.iter().filter(|r| r.expires_at > now).cloned());
        }

        let (k, alpha) = {
            let n = self.node(id);
            (n.config.k, n.config.alpha)
        };
        let me = self.peer_id(id);

        #[derive(PartialEq)]
        enum Status {
            Candidate,
            Queried,
            Failed,
        }
        let mut known: BTreeMap<Key, (crate::dht::PeerInfo, Status)> = BTreeMap::new();
        for p in self.node(id).table.closest_peers(&key, k) {
            known.insert(p.peer.distance(&key), (p, Status::Candidate));
        }
        loop {
            let batch: Vec<crate::dht::PeerInfo> = known
                .values()
                .filter(|(_, s)| *s != Status::Failed)
                .take(k)
                .filter(|(_, s)| *s == Status::Candidate)
                .map(|(p, _)| p.clone())
                .take(alpha)
                .collect();
            if batch.is_empty() {
                break;
            }
            for peer in batch {
                let Some(to) = peer.sim_index() else { continue };
                let dist = peer.peer.distance(&key);
                match self.rpc(id, to, RpcRequest::GetIpns { key }) {
                    Ok(RpcReply::IpnsRecords { records, closer }) => {
                        if let Some(entry) = known.get_mut(&dist) {
                            entry.1 = Status::Queried;
                        }
                        candidates.extend(records);
                        for learned in closer {
                            if learned.peer == me {
                                continue;
                            }
                            known
                                .entry(learned.peer.distance(&key))
                                .or_insert((learned, Status::Candidate));
                        }
                    }
                    _ => {
                        if let Some(entry) = known.get_mut(&dist) {
                            entry.1 = Status::Failed;
                        }
                        self.node_mut(id).table.evict(&peer.peer);
                    }
                }
            }
        }

        let mut best: Option<IpnsRecord> = None;
        for rec in candidates {
            if rec.name != key || rec.expires_at <= self.now() {
                continue;
            }
            if !rec.verify() {
                saw_invalid = true;
                continue;
            }
            if best.as_ref().map(|b| rec.sequence > b.sequence).unwrap_or(true) {
                best = Some(rec);
            }
        }
        match best {
            Some(rec) => Ok(rec.value),
            None if saw_invalid => Err(NodeError::InvalidSignature),
            None => Err(NodeError::NotFound),
        }
    }

    /// Resolve a name or dnslink domain to a `/ipfs/` path, following
    /// `/ipns/` indirections up to the recursion cap.
    pub fn resolve_name(
        &mut self,
        id: usize,
        name_or_domain: &str,
        depth: usize,
    ) -> Result<String, NodeError> {
        if depth == 0 {
            return Err(NodeError::RecursionLimit);
        }
        let value = if name_or_domain.contains('.') {
            let records = self
                .dnslink_table
                .get(name_or_domain)
                .cloned()
                .ok_or_else(|| NodeError::NoRecord(name_or_domain.to_string()))?;
            crate::node::parse_dnslink(&records)?
        } else {
            self.ipns_resolve(id, name_or_domain)?
        };
        if value.starts_with("/ipfs/") {
            return Ok(value);
        }
        let next = value
            .strip_prefix("/ipns/")
            .ok_or_else(|| NodeError::MalformedDnslink(value.clone()))?;
        self.resolve_name(id, next, depth - 1)
    }

    /// Toggle the privacy policy: when off, this node neither announces
    /// nor serves content, but can still fetch and cache it.
    pub fn set_share_cache(&mut self, id: usize, enabled: bool) {
        self.node_mut(id).share_cache = enabled;
    }

    /// Disable or re-enable periodic re-providing for a node.
    pub fn set_reprovide_enabled(&mut self, id: usize, enabled: bool) {
        self.node_mut(id).reprovide_enabled = enabled;
    }

    /// The IPNS name this node publishes under.
    pub fn ipns_name(&self, id: usize) -> String {
        name_text_for(&self.peer_id(id))
    }
}
