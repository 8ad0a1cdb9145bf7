//! Deterministic discrete-event simulation of the peer network.
//!
//! A single driver owns every node and advances simulated time. RPCs are
//! request/reply pairs with latency sampled from the seeded generator;
//! drops, partitions and departures surface to the sender as timeouts.
//! Maintenance (republish, gc, churn epochs) runs off a timer queue
//! drained by `run_until`. Identical (seed, scenario) runs produce
//! identical traces and metrics.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cid::Cid;
use crate::dht::{Key, PeerId, PeerInfo, ProviderRecord};
use crate::node::{NodeConfig, NodeState};
use crate::proto::{RpcReply, RpcRequest};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub seed: u64,
    pub latency_min: u64,
    pub latency_max: u64,
    pub drop_rate: f64,
    pub bootstrap_count: usize,
    pub rpc_timeout: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 0,
            latency_min: 10,
            latency_max: 100,
            drop_rate: 0.0,
            bootstrap_count: 4,
            rpc_timeout: 1_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum TimerKind {
    Republish(usize),
    Gc(usize),
    ChurnEpoch,
}

#[derive(Debug, Clone, Copy)]
pub struct ChurnConfig {
    pub leave_rate: f64,
    pub epoch: u64,
    pub rejoin: bool,
}

struct Slot {
    state: Option<Box<NodeState>>,
    alive: bool,
    churn_exempt: bool,
    config: NodeConfig,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEvent {
    pub time: u64,
    pub seq: u64,
    pub line: String,
}

/// Counters accumulated over a run. Rendered deterministically.
#[derive(Debug, Default, Clone, Serialize)]
pub struct Metrics {
    pub messages: BTreeMap<String, u64>,
    pub bytes_transferred: u64,
    pub timeouts: u64,
    pub drops: u64,
    pub cross_partition_drops: u64,
    pub cross_partition_deliveries: u64,
    pub lookup_hops: Vec<u32>,
    pub duplicate_blocks: u64,
    pub corruptions_detected: u64,
    pub corruptions_injected: u64,
    pub events_processed: u64,
}

impl Metrics {
    fn count(&mut self, label: &str) {
        *self.messages.entry(label.to_string()).or_insert(0) += 1;
    }

    pub fn message_count(&self, label: &str) -> u64 {
        self.messages.get(label).copied().unwrap_or(0)
    }

    pub fn mean_lookup_hops(&self) -> f64 {
        if self.lookup_hops.is_empty() {
            return 0.0;
        }
        self.lookup_hops.iter().map(|&h| h as f64).sum::<f64>() / self.lookup_hops.len() as f64
    }

    pub fn lookup_hops_percentile(&self, pct: f64) -> u32 {
        if self.lookup_hops.is_empty() {
            return 0;
        }
        let mut sorted = self.lookup_hops.clone();
        sorted.sort_unstable();
        let rank = ((pct / 100.0) * (sorted.len() - 1) as f64).round() as usize;
        sorted[rank.min(sorted.len() - 1)]
    }
}

/// Full end-of-run report: metrics plus storage-level replica counts.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub metrics: Metrics,
    pub mean_lookup_hops: String,
    pub p95_lookup_hops: u32,
    pub live_nodes: usize,
    pub unique_blocks: usize,
    pub total_replicas: u64,
    pub replica_counts: BTreeMap<String, u64>,
}

impl Report {
    pub fn render(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum RpcFailure {
    #[error("rpc timeout")]
    Timeout,
}

pub struct Sim {
    pub cfg: SimConfig,
    time: u64,
    seq: u64,
    rng: ChaCha8Rng,
    slots: Vec<Slot>,
    bootstrap: Vec<usize>,
    partition: Option<Vec<BTreeSet<usize>>>,
    timers: BinaryHeap<Reverse<(u64, u64, TimerKind)>>,
    churn: Option<ChurnConfig>,
    pub metrics: Metrics,
    trace: Vec<TraceEvent>,
    corrupt_next_block: bool,
    corrupt_blocks_from: BTreeSet<usize>,
    /// Injected DNS TXT records for dnslink resolution.
    pub dnslink_table: BTreeMap<String, Vec<String>>,
}

impl Sim {
    pub fn new(cfg: SimConfig) -> Sim {
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Sim {
            cfg,
            time: 0,
            seq: 0,
            rng,
            slots: Vec::new(),
            bootstrap: Vec::new(),
            partition: None,
            timers: BinaryHeap::new(),
            churn: None,
            metrics: Metrics::default(),
            trace: Vec::new(),
            corrupt_next_block: false,
            corrupt_blocks_from: BTreeSet::new(),
            dnslink_table: BTreeMap::new(),
        }
    }

    pub fn now(&self) -> u64 {
        self.time
    }

    fn next_seq(&mut self) -> u64 {
        self.seq += 1;
        self.seq
    }

    fn push_trace(&mut self, line: String) {
        let seq = self.next_seq();
        self.trace.push(TraceEvent { time: self.time, seq, line });
    }

    pub fn trace(&self) -> &[TraceEvent] {
        &self.trace
    }

    pub fn trace_text(&self) -> String {
        let mut out = String::new();
        for ev in &self.trace {
            out.push_str(&format!("t={} seq={} {}\n", ev.time, ev.seq, ev.line));
        }
        out
    }

    pub fn node_count(&self) -> usize {
        self.slots.len()
    }

    pub fn is_alive(&self, id: usize) -> bool {
        self.slots.get(id).map(|s| s.alive).unwrap_or(false)
    }

    pub fn live_nodes(&self) -> Vec<usize> {
        (0..self.slots.len()).filter(|&i| self.slots[i].alive).collect()
    }

    pub fn bootstrap_nodes(&self) -> &[usize] {
        &self.bootstrap
    }

    /// Run `f` against a node's state. The state is removed from the slot
    /// for the duration, so `f` must not re-enter the same node.
    pub fn with_node<R>(&mut self, id: usize, f: impl FnOnce(&mut Sim, &mut NodeState) -> R) -> R {
        let mut state = self.slots[id].state.take().expect("node state present");
        let out = f(self, &mut state);
        self.slots[id].state = Some(state);
        out
    }

    pub fn node(&self, id: usize) -> &NodeState {
        self.slots[id].state.as_deref().expect("node state present")
    }

    pub fn node_mut(&mut self, id: usize) -> &mut NodeState {
        self.slots[id].state.as_deref_mut().expect("node state present")
    }

    pub fn peer_id(&self, id: usize) -> PeerId {
        self.node(id).peer_id
    }

    pub fn peer_info(&self, id: usize) -> PeerInfo {
        self.node(id).peer_info(self.time)
    }

    pub fn set_churn_exempt(&mut self, id: usize, exempt: bool) {
        self.slots[id].churn_exempt = exempt;
    }

    /// Corrupt the next Block payload delivered anywhere in the network.
    pub fn inject_corruption_once(&mut self) {
        self.corrupt_next_block = true;
    }

    /// Mark a node as dishonest: every Block it serves is corrupted.
    pub fn set_corrupt_blocks_from(&mut self, id: usize, corrupt: bool) {
        if corrupt {
            self.corrupt_blocks_from.insert(id);
        } else {
            self.corrupt_blocks_from.remove(&id);
        }
    }

    fn sample_latency(&mut self) -> u64 {
        if self.cfg.latency_max <= self.cfg.latency_min {
            return self.cfg.latency_min;
        }
        self.rng.gen_range(self.cfg.latency_min..=self.cfg.latency_max)
    }

    fn sample_drop(&mut self) -> bool {
        self.cfg.drop_rate > 0.0 && self.rng.gen::<f64>() < self.cfg.drop_rate
    }

    fn partitioned(&self, a: usize, b: usize) -> bool {
        let Some(groups) = &self.partition else { return false };
        let ga = groups.iter().position(|g| g.contains(&a));
        let gb = groups.iter().position(|g| g.contains(&b));
        match (ga, gb) {
            (Some(x), Some(y)) => x != y,
            // a node in no group is cut off from every grouped node
            _ => ga != gb,
        }
    }

    /// One request/reply round trip. Unreachable or dropped messages cost
    /// the sender `rpc_timeout` and return a failure so routing can evict.
    pub fn rpc(
        &mut self,
        from: usize,
        to: usize,
        req: RpcRequest,
    ) -> Result<RpcReply, RpcFailure> {
        let label = req.label();
        self.metrics.count(label);
        self.push_trace(format!("send {label} {from}->{to}"));

        let cut = self.partitioned(from, to);
        let gone = !self.is_alive(to);
        let dropped = !cut && !gone && self.sample_drop();
        if cut || gone || dropped {
            if cut {
                self.metrics.cross_partition_drops += 1;
            }
            self.metrics.drops += 1;
            self.metrics.timeouts += 1;
            let reason = if cut {
                "partition"
            } else if gone {
                "departed"
            } else {
                "loss"
            };
            self.push_trace(format!("drop {label} {from}->{to} ({reason})"));
            self.time += self.cfg.rpc_timeout;
            return Err(RpcFailure::Timeout);
        }

        let latency = self.sample_latency();
        self.time += latency;
        self.push_trace(format!("deliver {label} {from}->{to}"));

        let sender = self.peer_info(from);
        let now = self.time;
        let mut reply =
            self.with_node(to, move |_, node| node.handle_rpc(now, sender, req));

        // fault injection: flip one bit of a Block payload in transit
        let corrupt_source = self.corrupt_blocks_from.contains(&to);
        if self.corrupt_next_block || corrupt_source {
            if let RpcReply::Exchange(Some(crate::exchange::ExchangeMessage::Block {
                data, ..
            })) = &mut reply
            {
                if !data.is_empty() {
                    let mid = data.len() / 2;
                    data[mid] ^= 0x01;
                    self.corrupt_next_block = false;
                    self.metrics.corruptions_injected += 1;
                    self.push_trace(format!("corrupt block {to}->{from}"));
                }
            }
        }

        if self.sample_drop() {
            self.metrics.drops += 1;
            self.metrics.timeouts += 1;
            self.push_trace(format!("drop {} {to}->{from} (loss)", reply.label()));
            self.time += self.cfg.rpc_timeout;
            return Err(RpcFailure::Timeout);
        }
        let reply_latency = self.sample_latency();
        self.time += reply_latency;
        self.metrics.count(reply.label());
        self.metrics.bytes_transferred += reply.payload_bytes();
        self.push_trace(format!("deliver {} {to}->{from}", reply.label()));
        Ok(reply)
    }

    /// Create a node, connect it to the bootstrap peers, and run the
    /// initial self-lookup that fills its routing table.
    pub fn spawn_node(&mut self, config: NodeConfig) -> usize {
        let key_seed: [u8; 32] = self.rng.gen();
        self.spawn_node_with_key(config, key_seed)
    }

    /// As [`Sim::spawn_node`] with a caller-supplied identity key, for
    /// hosts that persist their key pair across runs.
    pub fn spawn_node_with_key(&mut self, config: NodeConfig, key_seed: [u8; 32]) -> usize {
        let id = self.slots.len();
        let state = NodeState::new(id, key_seed, config.clone(), self.time);
        let peer = state.peer_id;
        self.slots.push(Slot {
            state: Some(Box::new(state)),
            alive: true,
            churn_exempt: false,
            config: config.clone(),
        });
        self.push_trace(format!("join node {id}"));
        if self.bootstrap.len() < self.cfg.bootstrap_count {
            self.bootstrap.push(id);
            // bootstrap peers stay up so later joiners have an entry point
            self.slots[id].churn_exempt = true;
        }
        let seeds: Vec<usize> =
            self.bootstrap.iter().copied().filter(|&b| b != id && self.is_alive(b)).collect();
        for b in seeds {
            let info = self.peer_info(b);
            self.node_mut(id).table.update(info);
        }
        if !self.node(id).table.is_empty() {
            self.iterative_find_node(id, peer);
        }
        let republish_at = self.time + config.reprovide_interval;
        let gc_at = self.time + config.gc_interval;
        let s1 = self.next_seq();
        self.timers.push(Reverse((republish_at, s1, TimerKind::Republish(id))));
        let s2 = self.next_seq();
        self.timers.push(Reverse((gc_at, s2, TimerKind::Gc(id))));
        id
    }

    /// Abrupt departure: state dropped, no handoff.
    pub fn leave(&mut self, id: usize) {
        if self.slots[id].alive {
            self.push_trace(format!("leave node {id}"));
            self.slots[id].alive = false;
            self.slots[id].state = None;
        }
    }

    /// Install a partition. Groups must be disjoint; messages between
    /// different groups are dropped while it is active.
    pub fn partition(&mut self, groups: Vec<Vec<usize>>) -> Result<(), String> {
        let mut seen = BTreeSet::new();
        for g in &groups {
            for &id in g {
                if !seen.insert(id) {
                    return Err(format!("node {id} appears in more than one group"));
                }
            }
        }
        self.push_trace("partition installed".to_string());
        self.partition = Some(groups.into_iter().map(|g| g.into_iter().collect()).collect());
        Ok(())
    }

    pub fn heal(&mut self) {
        if self.partition.take().is_some() {
            self.push_trace("partition healed".to_string());
        }
    }

    /// Enable churn: each epoch every non-exempt live node leaves with
    /// probability `leave_rate`; departed nodes optionally rejoin fresh.
    pub fn set_churn(&mut self, churn: ChurnConfig) {
        let at = self.time + churn.epoch;
        self.churn = Some(churn);
        let s = self.next_seq();
        self.timers.push(Reverse((at, s, TimerKind::ChurnEpoch)));
    }

    /// Drain timers up to and including `t`, then advance the clock to `t`.
    pub fn run_until(&mut self, t: u64) -> usize {
        let mut processed = 0;
        while let Some(Reverse((at, _, _))) = self.timers.peek() {
            if *at > t {
                break;
            }
            let Reverse((at, _, kind)) = self.timers.pop().unwrap();
            if self.time < at {
                self.time = at;
            }
            self.dispatch_timer(kind);
            processed += 1;
        }
        if self.time < t {
            self.time = t;
        }
        self.metrics.events_processed += processed as u64;
        processed
    }

    /// Process the single next timer event, if any.
    pub fn step(&mut self) -> usize {
        if let Some(Reverse((at, _, kind))) = self.timers.pop() {
            if self.time < at {
                self.time = at;
            }
            self.dispatch_timer(kind);
            self.metrics.events_processed += 1;
            1
        } else {
            0
        }
    }

    fn dispatch_timer(&mut self, kind: TimerKind) {
        match kind {
            TimerKind::Republish(id) => {
                if self.is_alive(id) {
                    self.push_trace(format!("timer republish node {id}"));
                    self.republish_tick(id);
                    let interval = self.node(id).config.reprovide_interval;
                    let at = self.time + interval;
                    let s = self.next_seq();
                    self.timers.push(Reverse((at, s, TimerKind::Republish(id))));
                }
            }
            TimerKind::Gc(id) => {
                if self.is_alive(id) {
                    self.push_trace(format!("timer gc node {id}"));
                    let now = self.time;
                    self.node_mut(id).gc(now);
                    let interval = self.node(id).config.gc_interval;
                    let at = self.time + interval;
                    let s = self.next_seq();
                    self.timers.push(Reverse((at, s, TimerKind::Gc(id))));
                }
            }
            TimerKind::ChurnEpoch => {
                let Some(churn) = self.churn else { return };
                self.push_trace("timer churn epoch".to_string());
                let candidates: Vec<usize> = (0..self.slots.len())
                    .filter(|&i| self.slots[i].alive && !self.slots[i].churn_exempt)
                    .collect();
                for id in candidates {
                    if self.rng.gen::<f64>() < churn.leave_rate {
                        let config = self.slots[id].config.clone();
                        self.leave(id);
                        if churn.rejoin {
                            self.spawn_node(config);
                        }
                    }
                }
                let at = self.time + churn.epoch;
                let s = self.next_seq();
                self.timers.push(Reverse((at, s, TimerKind::ChurnEpoch)));
            }
        }
    }

    /// Classic Kademlia iteration toward `target`: query the α nearest
    /// unqueried candidates per round, merge replies, stop when the k
    /// best are all queried and nothing closer appears. Returns the k
    /// closest peers that answered, sorted by distance.
    pub fn iterative_find_node(&mut self, id: usize, target: Key) -> Vec<PeerInfo> {
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
        let mut known: BTreeMap<Key, (PeerInfo, Status)> = BTreeMap::new();
        for p in self.node(id).table.closest_peers(&target, k) {
            known.insert(p.peer.distance(&target), (p, Status::Candidate));
        }
        let mut hops: u32 = 0;
        loop {
            // candidates among the k best, nearest first
            let batch: Vec<PeerInfo> = known
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
            hops += 1;
            for peer in batch {
                let Some(to) = peer.sim_index() else { continue };
                let dist = peer.peer.distance(&target);
                match self.rpc(id, to, RpcRequest::FindNode { target }) {
                    Ok(RpcReply::Nodes { peers }) => {
                        if let Some(entry) = known.get_mut(&dist) {
                            entry.1 = Status::Queried;
                        }
                        let now = self.time;
                        self.node_mut(id).table.update(PeerInfo {
                            last_seen: now,
                            ..peer.clone()
                        });
                        for learned in peers {
                            if learned.peer == me {
                                continue;
                            }
                            known
                                .entry(learned.peer.distance(&target))
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
        self.metrics.lookup_hops.push(hops);
        known
            .values()
            .filter(|(_, s)| *s == Status::Queried)
            .take(k)
            .map(|(p, _)| p.clone())
            .collect()
    }

    /// Announce that this node stores `cid`: a provider record goes to
    /// the k closest peers to the content key, and locally when this node
    /// is itself among them. Returns the number of stored copies.
    pub fn provide(&mut self, id: usize, cid: &Cid) -> usize {
        let Some(key) = crate::dht::dht_key_for(cid) else { return 0 };
        let k = self.node(id).config.k;
        let me = self.peer_id(id);
        let targets = self.iterative_find_node(id, key);
        let now = self.time;
        let record = self
            .node(id)
            .own_provider_record(cid, now)
            .expect("32-byte digest cid");
        // self competes with the lookup results for the k slots
        let mut holders: Vec<(Key, Option<usize>)> = targets
            .iter()
            .filter_map(|t| t.sim_index().map(|i| (t.peer.distance(&key), Some(i))))
            .collect();
        holders.push((me.distance(&key), None));
        holders.sort();
        holders.truncate(k);
        let mut stored = 0;
        for (_, target) in holders {
            match target {
                Some(to) => {
                    if self
                        .rpc(id, to, RpcRequest::PutProvider { record: record.clone() })
                        .is_ok()
                    {
                        stored += 1;
                    }
                }
                None => {
                    self.node_mut(id).providers.put(record.clone());
                    stored += 1;
                }
            }
        }
        let reprovide = self.node(id).share_cache;
        self.node_mut(id).provided.insert(
            cid.clone(),
            crate::node::ProvidedEntry { last_provided: now, reprovide },
        );
        stored
    }

    /// Iterative GET_PROVIDERS toward the content key. Absence is an
    /// empty result, never an error.
    pub fn find_providers(&mut self, id: usize, cid: &Cid, limit: usize) -> Vec<ProviderRecord> {
        let Some(key) = crate::dht::dht_key_for(cid) else { return Vec::new() };
        let (k, alpha) = {
            let n = self.node(id);
            (n.config.k, n.config.alpha)
        };
        let me = self.peer_id(id);
        let now = self.time;
        let mut found: BTreeMap<PeerId, ProviderRecord> = BTreeMap::new();
        for r in self.node(id).providers.get(&key, now) {
            found.insert(r.provider, r);
        }

        #[derive(PartialEq)]
        enum Status {
            Candidate,
            Queried,
            Failed,
        }
        let mut known: BTreeMap<Key, (PeerInfo, Status)> = BTreeMap::new();
        for p in self.node(id).table.closest_peers(&key, k) {
            known.insert(p.peer.distance(&key), (p, Status::Candidate));
        }
        while found.len() < limit {
            let batch: Vec<PeerInfo> = known
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
                match self.rpc(id, to, RpcRequest::GetProviders { key }) {
                    Ok(RpcReply::Providers { records, closer }) => {
                        if let Some(entry) = known.get_mut(&dist) {
                            entry.1 = Status::Queried;
                        }
                        let now = self.time;
                        self.node_mut(id).table.update(PeerInfo {
                            last_seen: now,
                            ..peer.clone()
                        });
                        for r in records {
                            if r.expires_at > self.time {
                                found.insert(r.provider, r);
                            }
                        }
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
                if found.len() >= limit {
                    break;
                }
            }
        }
        found.into_values().take(limit).collect()
    }

    /// Re-provide every locally provided CID that is due, and purge
    /// expired foreign records. Returns the number republished.
    pub fn republish_tick(&mut self, id: usize) -> usize {
        let now = self.time;
        self.node_mut(id).providers.purge_expired(now);
        self.node_mut(id)
            .ipns_store
            .values_mut()
            .for_each(|v| v.retain(|r| r.expires_at > now));
        if !self.node(id).reprovide_enabled {
            return 0;
        }
        let interval = self.node(id).config.reprovide_interval;
        let share = self.node(id).share_cache;
        let due: Vec<Cid> = self
            .node(id)
            .provided
            .iter()
            .filter(|(_, e)| e.reprovide && now.saturating_sub(e.last_provided) >= interval)
            .map(|(c, _)| c.clone())
            .collect();
        let mut republished = 0;
        for cid in due {
            if !share || !self.node(id).blockstore.contains(&cid) {
                continue;
            }
            self.provide(id, &cid);
            republished += 1;
        }
        // refresh this node's own IPNS record alongside its providers
        if self.node(id).ipns_value.is_some() {
            self.ipns_republish(id);
        }
        republished
    }

    /// Repeated self-lookups so routing tables converge after a batch of
    /// joins.
    pub fn settle(&mut self, rounds: usize) {
        for _ in 0..rounds {
            for id in self.live_nodes() {
                let me = self.peer_id(id);
                self.iterative_find_node(id, me);
            }
        }
    }

    /// Copies of `cid` present in live blockstores.
    pub fn replica_count(&self, cid: &Cid) -> usize {
        self.live_nodes()
            .into_iter()
            .filter(|&id| self.node(id).blockstore.contains(cid))
            .count()
    }

    pub fn report(&self) -> Report {
        let mut replica_counts: BTreeMap<String, u64> = BTreeMap::new();
        for id in self.live_nodes() {
            for cid in self.node(id).blockstore.cids() {
                *replica_counts.entry(cid.to_text()).or_insert(0) += 1;
            }
        }
        Report {
            metrics: self.metrics.clone(),
            mean_lookup_hops: format!("{:.3}", self.metrics.mean_lookup_hops()),
            p95_lookup_hops: self.metrics.lookup_hops_percentile(95.0),
            live_nodes: self.live_nodes().len(),
            unique_blocks: replica_counts.len(),
            total_replicas: replica_counts.values().sum(),
            replica_counts,
        }
    }
}
