//! Kademlia-style routing structures: 256-bit keys under the XOR metric,
//! k-bucket routing tables, and the provider-record store.
//!
//! The iterative lookup driver lives in the simnet module, since it needs
//! the network; everything here is per-node state.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::cid::Cid;

/// A 256-bit identifier: peer IDs and DHT keys.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Key(pub [u8; 32]);

impl Key {
    pub fn from_slice(bytes: &[u8]) -> Option<Key> {
        bytes.try_into().ok().map(Key)
    }

    /// XOR distance, big-endian. Byte arrays compare like the 256-bit
    /// unsigned integers they encode.
    pub fn distance(&self, other: &Key) -> Key {
        let mut out = [0u8; 32];
        for i in 0..32 {
            out[i] = self.0[i] ^ other.0[i];
        }
        Key(out)
    }

    /// Number of leading zero bits; 256 for the zero key.
    pub fn leading_zeros(&self) -> u32 {
        let mut total = 0;
        for &b in &self.0 {
            if b == 0 {
                total += 8;
            } else {
                total += b.leading_zeros();
                break;
            }
        }
        total
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&b| b == 0)
    }
}

impl fmt::Debug for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0[..4] {
            write!(f, "{b:02x}")?;
        }
        write!(f, "..")
    }
}

/// A peer identifier: SHA-256 of the peer's public key bytes.
pub type PeerId = Key;

/// DHT key for a CID: its 32-byte digest, used directly.
pub fn dht_key_for(cid: &Cid) -> Option<Key> {
    Key::from_slice(cid.digest())
}

/// Either a simulated endpoint or a plain TCP endpoint.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Multiaddress {
    Sim { node_index: usize },
    Ip4 { addr: String, port: u16 },
}

impl Multiaddress {
    pub fn parse(text: &str) -> Option<Multiaddress> {
        if let Some(rest) = text.strip_prefix("/sim/") {
            return rest.parse().ok().map(|node_index| Multiaddress::Sim { node_index });
        }
        let rest = text.strip_prefix("/ip4/")?;
        let (addr, rest) = rest.split_once("/tcp/")?;
        let port: u16 = rest.parse().ok()?;
        if addr.is_empty() {
            return None;
        }
        Some(Multiaddress::Ip4 { addr: addr.to_string(), port })
    }
}

impl fmt::Display for Multiaddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Multiaddress::Sim { node_index } => write!(f, "/sim/{node_index}"),
            Multiaddress::Ip4 { addr, port } => write!(f, "/ip4/{addr}/tcp/{port}"),
        }
    }
}

/// Contact info for a known peer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeerInfo {
    pub peer: PeerId,
    pub addresses: Vec<Multiaddress>,
    pub last_seen: u64,
}

impl PeerInfo {
    /// The simulated node index, when the peer has a /sim address.
    pub fn sim_index(&self) -> Option<usize> {
        self.addresses.iter().find_map(|a| match a {
            Multiaddress::Sim { node_index } => Some(*node_index),
            _ => None,
        })
    }
}

/// 256 k-buckets ordered least-recently-seen first.
#[derive(Debug, Clone)]
pub struct RoutingTable {
    owner: PeerId,
    k: usize,
    buckets: Vec<Vec<PeerInfo>>,
}

impl RoutingTable {
    pub fn new(owner: PeerId, k: usize) -> RoutingTable {
        RoutingTable { owner, k, buckets: vec![Vec::new(); 256] }
    }

    pub fn owner(&self) -> &PeerId {
        &self.owner
    }

    fn bucket_index(&self, peer: &PeerId) -> Option<usize> {
        let d = self.owner.distance(peer);
        if d.is_zero() {
            return None; // owner itself
        }
        Some(255 - d.leading_zeros() as usize)
    }

    /// Record that `seen` was heard from: move-to-back if present, append
    /// if the bucket has room, otherwise drop the newcomer.
    pub fn update(&mut self, seen: PeerInfo) {
        let Some(idx) = self.bucket_index(&seen.peer) else { return };
        let bucket = &mut self.buckets[idx];
        if let Some(pos) = bucket.iter().position(|p| p.peer == seen.peer) {
            bucket.remove(pos);
            bucket.push(seen);
        } else if bucket.len() < self.k {
            bucket.push(seen);
        }
        // full bucket: newcomer dropped, incumbents retained
    }

    /// Remove a peer, e.g. after a send failure.
    pub fn evict(&mut self, peer: &PeerId) {
        if let Some(idx) = self.bucket_index(peer) {
            self.buckets[idx].retain(|p| &p.peer != peer);
        }
    }

    pub fn contains(&self, peer: &PeerId) -> bool {
        self.bucket_index(peer)
            .map(|i| self.buckets[i].iter().any(|p| &p.peer == peer))
            .unwrap_or(false)
    }

    pub fn len(&self) -> usize {
        self.buckets.iter().map(|b| b.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = &PeerInfo> {
        self.buckets.iter().flatten()
    }

    /// The `n` known peers closest to `target` by XOR distance, ascending.
    pub fn closest_peers(&self, target: &Key, n: usize) -> Vec<PeerInfo> {
        let mut all: Vec<&PeerInfo> = self.iter().collect();
        all.sort_by_key(|p| p.peer.distance(target));
        all.into_iter().take(n).cloned().collect()
    }

    pub fn bucket_len(&self, index: usize) -> usize {
        self.buckets[index].len()
    }
}

/// A claim that `provider` stores the content under `key`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderRecord {
    pub key: Key,
    pub provider: PeerId,
    pub addresses: Vec<Multiaddress>,
    pub expires_at: u64,
}

/// Per-key provider records with TTL expiry and a per-key cap.
#[derive(Debug, Clone, Default)]
pub struct ProviderStore {
    records: BTreeMap<Key, Vec<ProviderRecord>>,
    per_key_cap: usize,
}

impl ProviderStore {
    pub fn new(per_key_cap: usize) -> ProviderStore {
        ProviderStore { records: BTreeMap::new(), per_key_cap }
    }

    /// Insert or refresh; (key, provider) is the record identity. A full
    /// key slot evicts the record soonest to expire.
    pub fn put(&mut self, record: ProviderRecord) {
        let slot = self.records.entry(record.key).or_default();
        if let Some(existing) = slot.iter_mut().find(|r| r.provider == record.provider) {
            *existing = record;
            return;
        }
        if slot.len() >= self.per_key_cap {
            let Some(pos) = slot
                .iter()
                .enumerate()
                .min_by_key(|(_, r)| r.expires_at)
                .map(|(i, _)| i)
            else {
                return;
            };
            if slot[pos].expires_at >= record.expires_at {
                return; // newcomer would be the first to go
            }
            slot.remove(pos);
        }
        slot.push(record);
    }

    /// Unexpired records for `key`.
    pub fn get(&self, key: &Key, now: u64) -> Vec<ProviderRecord> {
        self.records
            .get(key)
            .map(|v| v.iter().filter(|r| r.expires_at > now).cloned().collect())
            .unwrap_or_default()
    }

    pub fn remove(&mut self, key: &Key, provider: &PeerId) {
        if let Some(slot) = self.records.get_mut(key) {
            slot.retain(|r| &r.provider != provider);
        }
    }

    /// Drop every expired record.
    pub fn purge_expired(&mut self, now: u64) -> usize {
        let mut purged = 0;
        self.records.retain(|_, slot| {
            let before = slot.len();
            slot.retain(|r| r.expires_at > now);
            purged += before - slot.len();
            !slot.is_empty()
        });
        purged
    }

    pub fn record_count(&self) -> usize {
        self.records.values().map(|v| v.len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cid::SHA2_256;

    fn key(fill: u8) -> Key {
        Key([fill; 32])
    }

    fn key_n(n: u64) -> Key {
        let mut k = [0u8; 32];
        k[24..].copy_from_slice(&n.to_be_bytes());
        Key(k)
    }

    fn peer(k: Key) -> PeerInfo {
        let idx = k.0[31] as usize;
        PeerInfo { peer: k, addresses: vec![Multiaddress::Sim { node_index: idx }], last_seen: 0 }
    }

    #[test]
    fn xor_distance_basics() {
        assert!(key(3).distance(&key(3)).is_zero());
        assert_eq!(key_n(0b0011).distance(&key_n(0b0101)), key_n(6));
        let a = key_n(12345);
        let b = key_n(99999);
        assert_eq!(a.distance(&b), b.distance(&a));
    }

    #[test]
    fn dht_key_is_the_digest() {
        let cid = Cid::from_data(b"content", SHA2_256).unwrap();
        let k = dht_key_for(&cid).unwrap();
        assert_eq!(&k.0[..], cid.digest());
        let other = Cid::from_data(b"other", SHA2_256).unwrap();
        assert_ne!(k, dht_key_for(&other).unwrap());
    }

    #[test]
    fn multiaddress_parsing() {
        assert_eq!(Multiaddress::parse("/sim/7"),
                   Some(Multiaddress::Sim { node_index: 7 }));
        assert_eq!(Multiaddress::parse("/ip4/127.0.0.1/tcp/4001"),
                   Some(Multiaddress::Ip4 { addr: "127.0.0.1".into(), port: 4001 }));
        assert_eq!(Multiaddress::parse("/dns/x"), None);
        let a = Multiaddress::Sim { node_index: 3 };
        assert_eq!(Multiaddress::parse(&a.to_string()), Some(a));
    }

    #[test]
    fn routing_update_lru_rules() {
        let owner = key_n(0);
        let mut table = RoutingTable::new(owner, 2);
        // all these share a bucket: high bits zero, differ in low bits
        let p1 = peer(key_n(4));
        let p2 = peer(key_n(5));
        let p3 = peer(key_n(6)); // same bucket as 4 and 5 (bit 2 set)
        table.update(p1.clone());
        assert_eq!(table.len(), 1);
        table.update(p2.clone());
        table.update(p3.clone()); // bucket full: dropped
        assert_eq!(table.len(), 2);
        assert!(!table.contains(&p3.peer));
        // re-seeing p1 moves it to most-recent
        table.update(p1.clone());
        let in_bucket: Vec<_> = table.iter().map(|p| p.peer).collect();
        assert_eq!(in_bucket, vec![p2.peer, p1.peer]);
    }

    #[test]
    fn owner_never_stored() {
        let owner = key_n(9);
        let mut table = RoutingTable::new(owner, 4);
        table.update(peer(owner));
        assert!(table.is_empty());
    }

    #[test]
    fn closest_peers_matches_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let owner = Key(rng.gen());
        let mut table = RoutingTable::new(owner, 20);
        let mut peers = Vec::new();
        for _ in 0..50 {
            let p = peer(Key(rng.gen()));
            table.update(p.clone());
            peers.push(p);
        }
        for _ in 0..20 {
            let target = Key(rng.gen());
            let got: Vec<PeerId> =
                table.closest_peers(&target, 10).into_iter().map(|p| p.peer).collect();
            let mut expect: Vec<PeerId> = table.iter().map(|p| p.peer).collect();
            expect.sort_by_key(|p| p.distance(&target));
            expect.truncate(10);
            assert_eq!(got, expect);
        }
        // n larger than the table: whole table, sorted
        assert_eq!(table.closest_peers(&owner, 1000).len(), table.len());
        // a stored peer as target sorts first
        let target = peers[7].peer;
        assert_eq!(table.closest_peers(&target, 3)[0].peer, target);
    }

    #[test]
    fn provider_store_expiry_and_identity() {
        let mut store = ProviderStore::new(64);
        let k = key_n(42);
        store.put(ProviderRecord {
            key: k, provider: key_n(1), addresses: vec![], expires_at: 100,
        });
        store.put(ProviderRecord {
            key: k, provider: key_n(1), addresses: vec![], expires_at: 200,
        });
        assert_eq!(store.record_count(), 1, "(key, provider) is the identity");
        assert_eq!(store.get(&k, 50).len(), 1);
        assert_eq!(store.get(&k, 150)[0].expires_at, 200);
        assert!(store.get(&k, 200).is_empty(), "expired records are never returned");
        assert_eq!(store.purge_expired(250), 1);
        assert_eq!(store.record_count(), 0);
    }

    #[test]
    fn provider_store_cap_evicts_soonest_to_expire() {
        let mut store = ProviderStore::new(2);
        let k = key_n(7);
        for (i, exp) in [(1u64, 100u64), (2, 300)] {
            store.put(ProviderRecord {
                key: k, provider: key_n(i), addresses: vec![], expires_at: exp,
            });
        }
        store.put(ProviderRecord { key: k, provider: key_n(3), addresses: vec![], expires_at: 200 });
        let got = store.get(&k, 0);
        assert_eq!(got.len(), 2);
        assert!(got.iter().all(|r| r.provider != key_n(1)));
        // a newcomer expiring sooner than every incumbent is not stored
        store.put(ProviderRecord { key: k, provider: key_n(4), addresses: vec![], expires_at: 50 });
        assert!(store.get(&k, 0).iter().all(|r| r.provider != key_n(4)));
    }
}
