//! Chunking, Merkle-DAG assembly, canonical node codec, path resolution
//! and verified reassembly.
//!
//! Leaf blocks are raw byte slices of the input, named by the CID of those
//! bytes, so identical chunks deduplicate across files. Interior nodes
//! (File, Directory) use the canonical codec below and are named by the
//! CID of their serialized bytes.
//!
//! Canonical node layout (bit-exact):
//!   kind byte (0=Leaf, 1=File, 2=Directory)
//!   ++ varint(link_count)
//!   ++ per link: varint(name_len) ++ name ++ varint(cid_len) ++ cid bytes
//!                ++ varint(subtree_size)
//!   ++ varint(data_len) ++ data

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::cid::{Cid, CidError, SHA2_256};
use crate::varint::{read_uvarint, write_uvarint};

/// Default chunk size: 256 kB.
pub const DEFAULT_CHUNK_SIZE: usize = 262144;
/// Default DAG fanout.
pub const DEFAULT_FANOUT: usize = 174;

#[derive(Debug, Error)]
pub enum DagError {
    #[error("cid error: {0}")]
    Cid(#[from] CidError),
    #[error("malformed node")]
    MalformedNode,
    #[error("duplicate directory entry {0:?}")]
    DuplicateName(String),
    #[error("invalid directory entry name {0:?}")]
    InvalidName(String),
    #[error("path segment {0:?} not found")]
    SegmentNotFound(String),
    #[error("path segment {0:?} applied to a non-directory node")]
    NotADirectory(String),
    #[error("block {0} not found")]
    MissingBlock(Cid),
    #[error("block {0} failed integrity verification")]
    IntegrityViolation(Cid),
    #[error("root {0} is not a file")]
    NotAFile(Cid),
    #[error("invalid path {0:?}")]
    InvalidPath(String),
}

/// A content-addressed block: the unit of storage and exchange.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub cid: Cid,
    pub data: Vec<u8>,
}

impl Block {
    pub fn from_data(data: Vec<u8>) -> Block {
        let cid = Cid::from_data(&data, SHA2_256).expect("sha-256 is registered");
        Block { cid, data }
    }
}

/// One edge of the DAG. File links have empty names; directory links are
/// named and sorted. `subtree_size` is the total leaf bytes beneath the
/// target.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Link {
    pub name: String,
    pub target: Cid,
    pub subtree_size: u64,
}

/// A parsed DAG node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DagNode {
    Leaf { data: Vec<u8> },
    File { links: Vec<Link> },
    Directory { links: Vec<Link> },
}

impl DagNode {
    pub fn links(&self) -> &[Link] {
        match self {
            DagNode::Leaf { .. } => &[],
            DagNode::File { links } | DagNode::Directory { links } => links,
        }
    }
}

/// Serialize a node to the canonical layout. Equal logical nodes always
/// produce identical bytes.
pub fn node_serialize(node: &DagNode) -> Vec<u8> {
    let (kind, links, data): (u8, &[Link], &[u8]) = match node {
        DagNode::Leaf { data } => (0, &[], data),
        DagNode::File { links } => (1, links, &[]),
        DagNode::Directory { links } => (2, links, &[]),
    };
    let mut out = Vec::new();
    out.push(kind);
    write_uvarint(&mut out, links.len() as u64);
    for link in links {
        write_uvarint(&mut out, link.name.len() as u64);
        out.extend_from_slice(link.name.as_bytes());
        let cid_bytes = link.target.to_bytes();
        write_uvarint(&mut out, cid_bytes.len() as u64);
        out.extend_from_slice(&cid_bytes);
        write_uvarint(&mut out, link.subtree_size);
    }
    write_uvarint(&mut out, data.len() as u64);
    out.extend_from_slice(data);
    out
}

/// Decode a canonical node. Strict: the whole input must be consumed and
/// every structural invariant must hold.
pub fn node_deserialize(bytes: &[u8]) -> Result<DagNode, DagError> {
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8], DagError> {
        let end = pos.checked_add(n).ok_or(DagError::MalformedNode)?;
        if end > bytes.len() {
            return Err(DagError::MalformedNode);
        }
        let s = &bytes[*pos..end];
        *pos = end;
        Ok(s)
    };
    let uvarint = |pos: &mut usize| -> Result<u64, DagError> {
        let (v, n) = read_uvarint(&bytes[*pos..]).ok_or(DagError::MalformedNode)?;
        *pos += n;
        Ok(v)
    };

    let kind = *take(&mut pos, 1)?.first().ok_or(DagError::MalformedNode)?;
    let link_count = uvarint(&mut pos)?;
    if link_count > bytes.len() as u64 {
        return Err(DagError::MalformedNode);
    }
    let mut links = Vec::with_capacity(link_count as usize);
    for _ in 0..link_count {
        let name_len = uvarint(&mut pos)? as usize;
        let name = std::str::from_utf8(take(&mut pos, name_len)?)
            .map_err(|_| DagError::MalformedNode)?
            .to_string();
        let cid_len = uvarint(&mut pos)? as usize;
        let cid_bytes = take(&mut pos, cid_len)?;
        let target = Cid::from_multihash(
            crate::cid::multihash_decode(cid_bytes).map_err(|_| DagError::MalformedNode)?,
        );
        let subtree_size = uvarint(&mut pos)?;
        links.push(Link { name, target, subtree_size });
    }
    let data_len = uvarint(&mut pos)? as usize;
    let data = take(&mut pos, data_len)?.to_vec();
    if pos != bytes.len() {
        return Err(DagError::MalformedNode);
    }
    match kind {
        0 => {
            if !links.is_empty() {
                return Err(DagError::MalformedNode);
            }
            Ok(DagNode::Leaf { data })
        }
        1 => {
            if links.is_empty() || !data.is_empty() || links.iter().any(|l| !l.name.is_empty()) {
                return Err(DagError::MalformedNode);
            }
            Ok(DagNode::File { links })
        }
        2 => {
            if !data.is_empty() {
                return Err(DagError::MalformedNode);
            }
            // names unique and sorted bytewise ascending
            if links.windows(2).any(|w| w[0].name.as_bytes() >= w[1].name.as_bytes()) {
                return Err(DagError::MalformedNode);
            }
            if links.iter().any(|l| l.name.is_empty() || l.name.contains('/')) {
                return Err(DagError::MalformedNode);
            }
            Ok(DagNode::Directory { links })
        }
        _ => Err(DagError::MalformedNode),
    }
}

/// How a stored block should be interpreted during traversal.
///
/// Leaf blocks are raw input bytes, so a block is treated as an interior
/// node only when it strictly parses as a File or Directory node.
pub enum BlockView {
    RawLeaf,
    Interior(DagNode),
}

pub fn classify_block(data: &[u8]) -> BlockView {
    match node_deserialize(data) {
        Ok(node @ DagNode::File { .. }) | Ok(node @ DagNode::Directory { .. }) => {
            BlockView::Interior(node)
        }
        _ => BlockView::RawLeaf,
    }
}

/// Slice `input` into consecutive `chunk_size` blocks. Empty input yields
/// one empty block so the empty file has a well-defined CID.
pub fn chunk(input: &[u8], chunk_size: usize) -> Vec<Block> {
    assert!(chunk_size >= 1, "chunk_size must be >= 1");
    if input.is_empty() {
        return vec![Block::from_data(Vec::new())];
    }
    input.chunks(chunk_size).map(|s| Block::from_data(s.to_vec())).collect()
}

/// Build a balanced file DAG over `blocks`, grouping `fanout` at a time
/// bottom-up. A single-block file is not wrapped: its root is the block
/// itself.
pub fn build_file_dag(blocks: &[Block], fanout: usize) -> (Cid, Vec<Block>) {
    assert!(!blocks.is_empty(), "build_file_dag requires at least one block");
    assert!(fanout >= 2, "fanout must be >= 2");
    let mut nodes: Vec<Block> = blocks.to_vec();
    let mut level: Vec<(Cid, u64)> =
        blocks.iter().map(|b| (b.cid.clone(), b.data.len() as u64)).collect();
    while level.len() > 1 {
        let mut next = Vec::with_capacity(level.len().div_ceil(fanout));
        for group in level.chunks(fanout) {
            // a trailing singleton carries up unwrapped
            if let [only] = group {
                next.push(only.clone());
                continue;
            }
            let links: Vec<Link> = group
                .iter()
                .map(|(cid, size)| Link {
                    name: String::new(),
                    target: cid.clone(),
                    subtree_size: *size,
                })
                .collect();
            let subtree: u64 = links.iter().map(|l| l.subtree_size).sum();
            let block = Block::from_data(node_serialize(&DagNode::File { links }));
            next.push((block.cid.clone(), subtree));
            nodes.push(block);
        }
        level = next;
    }
    (level[0].0.clone(), nodes)
}

/// Build a directory node over named entries. Links are sorted by name,
/// so insertion order never affects the root CID.
pub fn build_directory_dag(
    entries: &BTreeMap<String, (Cid, u64)>,
) -> Result<(Cid, Block), DagError> {
    for name in entries.keys() {
        if name.is_empty() || name.contains('/') {
            return Err(DagError::InvalidName(name.clone()));
        }
    }
    let links: Vec<Link> = entries
        .iter()
        .map(|(name, (cid, size))| Link {
            name: name.clone(),
            target: cid.clone(),
            subtree_size: *size,
        })
        .collect();
    let block = Block::from_data(node_serialize(&DagNode::Directory { links }));
    Ok((block.cid.clone(), block))
}

/// An immutable `/ipfs/<cid>/seg...` path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IpfsPath {
    pub root: Cid,
    pub segments: Vec<String>,
}

impl IpfsPath {
    pub fn new(root: Cid, segments: Vec<String>) -> IpfsPath {
        IpfsPath { root, segments }
    }

    pub fn parse(text: &str) -> Result<IpfsPath, DagError> {
        let rest = text
            .strip_prefix("/ipfs/")
            .ok_or_else(|| DagError::InvalidPath(text.to_string()))?;
        let mut parts = rest.split('/');
        let cid_text = parts.next().filter(|s| !s.is_empty())
            .ok_or_else(|| DagError::InvalidPath(text.to_string()))?;
        let root = Cid::parse(cid_text)?;
        let segments: Vec<String> =
            parts.filter(|s| !s.is_empty()).map(|s| s.to_string()).collect();
        Ok(IpfsPath { root, segments })
    }
}

impl fmt::Display for IpfsPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "/ipfs/{}", self.root)?;
        for seg in &self.segments {
            write!(f, "/{seg}")?;
        }
        Ok(())
    }
}

/// Fetch a block's bytes by CID; `None` means not found. Integrity is
/// checked by the caller.
pub trait BlockFetcher {
    fn fetch(&mut self, cid: &Cid) -> Result<Option<Vec<u8>>, DagError>;
}

impl<F> BlockFetcher for F
where
    F: FnMut(&Cid) -> Result<Option<Vec<u8>>, DagError>,
{
    fn fetch(&mut self, cid: &Cid) -> Result<Option<Vec<u8>>, DagError> {
        self(cid)
    }
}

fn fetch_verified(fetch: &mut impl BlockFetcher, cid: &Cid) -> Result<Vec<u8>, DagError> {
    let data = fetch.fetch(cid)?.ok_or_else(|| DagError::MissingBlock(cid.clone()))?;
    if !cid.verify(&data) {
        return Err(DagError::IntegrityViolation(cid.clone()));
    }
    Ok(data)
}

/// Walk directory links from the path root, one link per segment.
pub fn resolve_path(path: &IpfsPath, fetch: &mut impl BlockFetcher) -> Result<Cid, DagError> {
    let mut current = path.root.clone();
    for seg in &path.segments {
        let data = fetch_verified(fetch, &current)?;
        match classify_block(&data) {
            BlockView::Interior(DagNode::Directory { links }) => {
                match links.iter().find(|l| &l.name == seg) {
                    Some(link) => current = link.target.clone(),
                    None => return Err(DagError::SegmentNotFound(seg.clone())),
                }
            }
            _ => return Err(DagError::NotADirectory(seg.clone())),
        }
    }
    Ok(current)
}

/// Depth-first left-to-right concatenation of leaf data under `root`.
/// Every block is verified against its CID before use.
pub fn reassemble(root: &Cid, fetch: &mut impl BlockFetcher) -> Result<Vec<u8>, DagError> {
    let mut out = Vec::new();
    let mut stack = vec![root.clone()];
    while let Some(cid) = stack.pop() {
        let data = fetch_verified(fetch, &cid)?;
        match classify_block(&data) {
            BlockView::RawLeaf => out.extend_from_slice(&data),
            BlockView::Interior(DagNode::File { links }) => {
                for link in links.iter().rev() {
                    stack.push(link.target.clone());
                }
            }
            BlockView::Interior(_) => return Err(DagError::NotAFile(cid)),
        }
    }
    Ok(out)
}

/// Collect every CID reachable from `root` that is present via `fetch`,
/// including `root` itself. Used for recursive pin closures.
pub fn reachable_blocks(
    root: &Cid,
    fetch: &mut impl BlockFetcher,
) -> Result<Vec<Cid>, DagError> {
    let mut seen = Vec::new();
    let mut stack = vec![root.clone()];
    while let Some(cid) = stack.pop() {
        if seen.contains(&cid) {
            continue;
        }
        let Some(data) = fetch.fetch(&cid)? else { continue };
        seen.push(cid);
        if let BlockView::Interior(node) = classify_block(&data) {
            for link in node.links() {
                stack.push(link.target.clone());
            }
        }
    }
    Ok(seen)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn store_of(blocks: &[Block]) -> HashMap<Cid, Vec<u8>> {
        blocks.iter().map(|b| (b.cid.clone(), b.data.clone())).collect()
    }

    fn fetcher(
        store: HashMap<Cid, Vec<u8>>,
    ) -> impl FnMut(&Cid) -> Result<Option<Vec<u8>>, DagError> {
        move |cid| Ok(store.get(cid).cloned())
    }

    #[test]
    fn chunk_boundaries() {
        let exact = vec![7u8; DEFAULT_CHUNK_SIZE];
        let blocks = chunk(&exact, DEFAULT_CHUNK_SIZE);
        assert_eq!(blocks.len(), 1);
        assert_eq!(blocks[0].data.len(), DEFAULT_CHUNK_SIZE);

        let over = vec![7u8; DEFAULT_CHUNK_SIZE + 1];
        let blocks = chunk(&over, DEFAULT_CHUNK_SIZE);
        assert_eq!(blocks.iter().map(|b| b.data.len()).collect::<Vec<_>>(),
                   vec![DEFAULT_CHUNK_SIZE, 1]);

        let empty = chunk(&[], DEFAULT_CHUNK_SIZE);
        assert_eq!(empty.len(), 1);
        assert!(empty[0].data.is_empty());
    }

    #[test]
    fn single_block_file_is_unwrapped() {
        let blocks = chunk(b"small", 4096);
        let (root, nodes) = build_file_dag(&blocks, 2);
        assert_eq!(root, blocks[0].cid);
        assert_eq!(nodes.len(), 1);
    }

    #[test]
    fn three_blocks_fanout_two_shape() {
        // expected shape enumerated from the grouping rule:
        // leaves b1 b2 b3 -> File(b1,b2), then File(inner, b3)
        let data: Vec<u8> = (0..12).collect();
        let blocks = chunk(&data, 4);
        assert_eq!(blocks.len(), 3);
        let (root, nodes) = build_file_dag(&blocks, 2);
        assert_eq!(nodes.len(), 5);
        let store = store_of(&nodes);
        let root_node = node_deserialize(&store[&root]).unwrap();
        match root_node {
            DagNode::File { links } => {
                assert_eq!(links.len(), 2);
                assert_eq!(links[0].subtree_size, 8);
                assert_eq!(links[1].subtree_size, 4);
                assert_eq!(links[1].target, blocks[2].cid);
            }
            other => panic!("expected File, got {other:?}"),
        }
    }

    #[test]
    fn identical_input_gives_identical_root() {
        let data = vec![42u8; 100_000];
        let (r1, _) = build_file_dag(&chunk(&data, 4096), 16);
        let (r2, _) = build_file_dag(&chunk(&data, 4096), 16);
        assert_eq!(r1, r2);
    }

    #[test]
    fn directory_is_order_independent() {
        let c1 = Cid::from_data(b"one", SHA2_256).unwrap();
        let c2 = Cid::from_data(b"two", SHA2_256).unwrap();
        let mut a = BTreeMap::new();
        a.insert("file2".to_string(), (c2.clone(), 3));
        a.insert("file1".to_string(), (c1.clone(), 3));
        let mut b = BTreeMap::new();
        b.insert("file1".to_string(), (c1.clone(), 3));
        b.insert("file2".to_string(), (c2.clone(), 3));
        let (ra, node_a) = build_directory_dag(&a).unwrap();
        let (rb, _) = build_directory_dag(&b).unwrap();
        assert_eq!(ra, rb);
        match node_deserialize(&node_a.data).unwrap() {
            DagNode::Directory { links } => {
                assert_eq!(links[0].name, "file1");
                assert_eq!(links[1].name, "file2");
            }
            other => panic!("expected Directory, got {other:?}"),
        }
    }

    #[test]
    fn empty_directory_is_permitted() {
        let (root, block) = build_directory_dag(&BTreeMap::new()).unwrap();
        assert_eq!(root, block.cid);
        assert!(matches!(node_deserialize(&block.data).unwrap(),
                         DagNode::Directory { links } if links.is_empty()));
    }

    #[test]
    fn directory_rejects_bad_names() {
        let c = Cid::from_data(b"x", SHA2_256).unwrap();
        let mut entries = BTreeMap::new();
        entries.insert("a/b".to_string(), (c, 1));
        assert!(matches!(build_directory_dag(&entries), Err(DagError::InvalidName(_))));
    }

    #[test]
    fn reassemble_round_trip() {
        let data: Vec<u8> = (0..100_000u32).map(|i| (i % 251) as u8).collect();
        for (size, fanout) in [(16usize, 2usize), (4096, 16), (DEFAULT_CHUNK_SIZE, 174)] {
            let blocks = chunk(&data, size);
            let (root, nodes) = build_file_dag(&blocks, fanout);
            let mut f = fetcher(store_of(&nodes));
            assert_eq!(reassemble(&root, &mut f).unwrap(), data);
        }
    }

    #[test]
    fn reassemble_empty_file() {
        let blocks = chunk(&[], 4096);
        let (root, nodes) = build_file_dag(&blocks, 2);
        let mut f = fetcher(store_of(&nodes));
        assert_eq!(reassemble(&root, &mut f).unwrap(), Vec::<u8>::new());
    }

    #[test]
    fn reassemble_detects_corruption() {
        let data = vec![9u8; 50_000];
        let blocks = chunk(&data, 4096);
        let (root, nodes) = build_file_dag(&blocks, 4);
        let mut store = store_of(&nodes);
        // flip one bit in one stored leaf
        let victim = blocks[3].cid.clone();
        store.get_mut(&victim).unwrap()[10] ^= 1;
        let mut f = fetcher(store);
        match reassemble(&root, &mut f) {
            Err(DagError::IntegrityViolation(cid)) => assert_eq!(cid, victim),
            other => panic!("expected integrity violation, got {other:?}"),
        }
    }

    #[test]
    fn resolve_path_walks_directories() {
        let f1 = Block::from_data(b"contents one".to_vec());
        let f2 = Block::from_data(b"contents two".to_vec());
        let mut entries = BTreeMap::new();
        entries.insert("file1".to_string(), (f1.cid.clone(), f1.data.len() as u64));
        entries.insert("file2".to_string(), (f2.cid.clone(), f2.data.len() as u64));
        let (root, dir) = build_directory_dag(&entries).unwrap();
        let store = store_of(&[f1.clone(), f2, dir]);

        let path = IpfsPath::parse(&format!("/ipfs/{root}/file1")).unwrap();
        let mut f = fetcher(store.clone());
        assert_eq!(resolve_path(&path, &mut f).unwrap(), f1.cid);

        let bare = IpfsPath::parse(&format!("/ipfs/{root}")).unwrap();
        let mut f = fetcher(store.clone());
        assert_eq!(resolve_path(&bare, &mut f).unwrap(), root);

        let missing = IpfsPath::parse(&format!("/ipfs/{root}/missing")).unwrap();
        let mut f = fetcher(store.clone());
        assert!(matches!(resolve_path(&missing, &mut f), Err(DagError::SegmentNotFound(_))));

        let through_leaf = IpfsPath::parse(&format!("/ipfs/{}/x", f1.cid)).unwrap();
        let mut f = fetcher(store);
        assert!(matches!(resolve_path(&through_leaf, &mut f), Err(DagError::NotADirectory(_))));
    }

    #[test]
    fn codec_rejects_truncation() {
        let node = DagNode::File {
            links: vec![Link {
                name: String::new(),
                target: Cid::from_data(b"x", SHA2_256).unwrap(),
                subtree_size: 1,
            }],
        };
        let bytes = node_serialize(&node);
        assert_eq!(node_deserialize(&bytes).unwrap(), node);
        for cut in 1..bytes.len() {
            assert!(node_deserialize(&bytes[..cut]).is_err());
        }
        // trailing garbage is also malformed
        let mut extended = bytes.clone();
        extended.push(0);
        assert!(node_deserialize(&extended).is_err());
    }

    #[test]
    fn leaf_codec_round_trip() {
        let node = DagNode::Leaf { data: b"leaf payload".to_vec() };
        assert_eq!(node_deserialize(&node_serialize(&node)).unwrap(), node);
    }

    #[test]
    fn dedup_shares_aligned_prefix() {
        let chunk_size = 1024;
        let mut x = vec![1u8; 4 * chunk_size];
        let mut y = x.clone();
        for b in x.iter_mut().skip(2 * chunk_size) {
            *b = 2;
        }
        for b in y.iter_mut().skip(2 * chunk_size) {
            *b = 3;
        }
        let bx = chunk(&x, chunk_size);
        let by = chunk(&y, chunk_size);
        let shared = bx.iter().zip(&by).take_while(|(a, b)| a.cid == b.cid).count();
        assert_eq!(shared, 2);
        assert!(bx.iter().skip(2).zip(by.iter().skip(2)).all(|(a, b)| a.cid != b.cid));
    }

    #[test]
    fn root_subtree_size_equals_input_length() {
        let data = vec![5u8; 10_000];
        let blocks = chunk(&data, 1024);
        let (root, nodes) = build_file_dag(&blocks, 3);
        let store = store_of(&nodes);
        match node_deserialize(&store[&root]).unwrap() {
            DagNode::File { links } => {
                let total: u64 = links.iter().map(|l| l.subtree_size).sum();
                assert_eq!(total, data.len() as u64);
            }
            other => panic!("expected File, got {other:?}"),
        }
    }
}
