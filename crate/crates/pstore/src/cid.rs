//! Content identifiers: multihash encoding and the base58 text form.
//!
//! A CID here is the v0-style bare multihash: `varint(code) ++
//! varint(digest_len) ++ digest`, rendered as base58 text with no prefix.
//! SHA-256 (code 0x12) identifiers therefore start with "Qm".

use std::collections::BTreeMap;
use std::fmt;
use std::sync::RwLock;

use once_cell::sync::Lazy;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::varint::{read_uvarint, write_uvarint};

/// Registry code for SHA-256.
pub const SHA2_256: u64 = 0x12;

/// The Bitcoin base58 alphabet (no 0, O, I, l).
pub const BASE58_ALPHABET: &[u8; 58] =
    b"123456789ABCDEFGHJKLMNPQRSTUVWXYZabcdefghijkmnopqrstuvwxyz";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CidError {
    #[error("unknown hash function code {0:#x}")]
    UnknownCode(u64),
    #[error("digest length {got} does not match {expected} for code {code:#x}")]
    LengthMismatch { code: u64, expected: usize, got: usize },
    #[error("invalid base58 character {0:?}")]
    InvalidCharacter(char),
    #[error("truncated multihash")]
    TruncatedMultihash,
}

struct HashFunction {
    digest_len: usize,
    hash: fn(&[u8]) -> Vec<u8>,
}

fn sha256_digest(data: &[u8]) -> Vec<u8> {
    Sha256::digest(data).to_vec()
}

static REGISTRY: Lazy<RwLock<BTreeMap<u64, HashFunction>>> = Lazy::new(|| {
    let mut m = BTreeMap::new();
    m.insert(SHA2_256, HashFunction { digest_len: 32, hash: sha256_digest });
    RwLock::new(m)
});

/// Register an additional hash function. The table is global and
/// extensible so alternate functions can replace SHA-256 later.
pub fn register_hash_function(code: u64, digest_len: usize, hash: fn(&[u8]) -> Vec<u8>) {
    REGISTRY
        .write()
        .unwrap()
        .insert(code, HashFunction { digest_len, hash });
}

/// Digest length (bytes) defined for a registered code.
pub fn digest_len_for(code: u64) -> Result<usize, CidError> {
    REGISTRY
        .read()
        .unwrap()
        .get(&code)
        .map(|f| f.digest_len)
        .ok_or(CidError::UnknownCode(code))
}

fn hash_with(code: u64, data: &[u8]) -> Result<Vec<u8>, CidError> {
    let reg = REGISTRY.read().unwrap();
    let f = reg.get(&code).ok_or(CidError::UnknownCode(code))?;
    Ok((f.hash)(data))
}

/// A self-describing digest: hash function code, digest length, digest bytes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Multihash {
    code: u64,
    digest: Vec<u8>,
}

impl Multihash {
    pub fn new(code: u64, digest: Vec<u8>) -> Result<Self, CidError> {
        let expected = digest_len_for(code)?;
        if digest.len() != expected {
            return Err(CidError::LengthMismatch { code, expected, got: digest.len() });
        }
        Ok(Multihash { code, digest })
    }

    pub fn code(&self) -> u64 {
        self.code
    }

    pub fn digest(&self) -> &[u8] {
        &self.digest
    }

    /// Binary form: varint(code) ++ varint(len) ++ digest.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(2 + self.digest.len());
        write_uvarint(&mut out, self.code);
        write_uvarint(&mut out, self.digest.len() as u64);
        out.extend_from_slice(&self.digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CidError> {
        let (code, n1) = read_uvarint(bytes).ok_or(CidError::TruncatedMultihash)?;
        let rest = &bytes[n1..];
        let (len, n2) = read_uvarint(rest).ok_or(CidError::TruncatedMultihash)?;
        let digest = &rest[n2..];
        if digest.len() != len as usize {
            return Err(CidError::TruncatedMultihash);
        }
        Multihash::new(code, digest.to_vec())
    }
}

/// Encode a multihash to its binary form.
pub fn multihash_encode(code: u64, digest: &[u8]) -> Result<Vec<u8>, CidError> {
    Ok(Multihash::new(code, digest.to_vec())?.to_bytes())
}

/// Decode a binary multihash.
pub fn multihash_decode(bytes: &[u8]) -> Result<Multihash, CidError> {
    Multihash::from_bytes(bytes)
}

/// Base58 encode: big-endian base conversion, one leading '1' per leading
/// zero byte.
pub fn base58_encode(data: &[u8]) -> String {
    let zeros = data.iter().take_while(|&&b| b == 0).count();
    // repeated division of the big-endian number by 58
    let mut num: Vec<u8> = data[zeros..].to_vec();
    let mut digits = Vec::new();
    while !num.is_empty() {
        let mut rem: u32 = 0;
        let mut next = Vec::with_capacity(num.len());
        for &byte in &num {
            let acc = rem * 256 + byte as u32;
            let q = (acc / 58) as u8;
            rem = acc % 58;
            if !(next.is_empty() && q == 0) {
                next.push(q);
            }
        }
        digits.push(rem as u8);
        num = next;
    }
    let mut out = String::with_capacity(zeros + digits.len());
    for _ in 0..zeros {
        out.push('1');
    }
    for &d in digits.iter().rev() {
        out.push(BASE58_ALPHABET[d as usize] as char);
    }
    out
}

/// Base58 decode; rejects characters outside the alphabet.
pub fn base58_decode(text: &str) -> Result<Vec<u8>, CidError> {
    let ones = text.bytes().take_while(|&b| b == b'1').count();
    let mut num: Vec<u8> = Vec::new();
    for ch in text[ones..].chars() {
        let digit = BASE58_ALPHABET
            .iter()
            .position(|&a| a as char == ch)
            .ok_or(CidError::InvalidCharacter(ch))? as u32;
        // num = num * 58 + digit
        let mut carry = digit;
        for byte in num.iter_mut().rev() {
            let acc = *byte as u32 * 58 + carry;
            *byte = (acc & 0xff) as u8;
            carry = acc >> 8;
        }
        while carry > 0 {
            num.insert(0, (carry & 0xff) as u8);
            carry >>= 8;
        }
    }
    let mut out = vec![0u8; ones];
    out.extend_from_slice(&num);
    Ok(out)
}

/// A content identifier: a multihash plus its base58 text form.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cid {
    multihash: Multihash,
}

impl Cid {
    pub fn from_multihash(multihash: Multihash) -> Self {
        Cid { multihash }
    }

    /// Hash `data` under `code` and wrap the digest as a CID.
    pub fn from_data(data: &[u8], code: u64) -> Result<Self, CidError> {
        let digest = hash_with(code, data)?;
        Ok(Cid { multihash: Multihash::new(code, digest)? })
    }

    /// Parse the base58 text form.
    pub fn parse(text: &str) -> Result<Self, CidError> {
        let bytes = base58_decode(text)?;
        Ok(Cid { multihash: Multihash::from_bytes(&bytes)? })
    }

    pub fn multihash(&self) -> &Multihash {
        &self.multihash
    }

    pub fn code(&self) -> u64 {
        self.multihash.code
    }

    pub fn digest(&self) -> &[u8] {
        &self.multihash.digest
    }

    /// The raw multihash bytes (also the wire form of a CID).
    pub fn to_bytes(&self) -> Vec<u8> {
        self.multihash.to_bytes()
    }

    pub fn to_text(&self) -> String {
        base58_encode(&self.multihash.to_bytes())
    }

    /// True iff `data` hashes to this CID under its own code.
    pub fn verify(&self, data: &[u8]) -> bool {
        match Cid::from_data(data, self.multihash.code) {
            Ok(c) => c == *self,
            Err(_) => false,
        }
    }
}

impl fmt::Display for Cid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

impl fmt::Debug for Cid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Cid({})", self.to_text())
    }
}

impl serde::Serialize for Cid {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_text())
    }
}

impl<'de> serde::Deserialize<'de> for Cid {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        Cid::parse(&text).map_err(serde::de::Error::custom)
    }
}

impl std::str::FromStr for Cid {
    type Err = CidError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Cid::parse(s)
    }
}
