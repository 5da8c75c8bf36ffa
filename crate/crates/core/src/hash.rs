//! Stable 128-bit content hashes used as keys throughout the fuzzer state.

use std::fmt;
use std::hash::{BuildHasherDefault, Hasher};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use xxhash_rust::xxh3::Xxh3;

/// 128-bit XXH3 digest. Serialized as 32 lowercase hex digits.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Hash128(pub u128);

impl Hash128 {
    pub fn of(bytes: &[u8]) -> Self {
        Self(xxhash_rust::xxh3::xxh3_128(bytes))
    }

    /// Hash of several byte strings, length-prefixed so that part
    /// boundaries are unambiguous.
    pub fn of_parts<'a>(parts: impl IntoIterator<Item = Option<&'a [u8]>>) -> Self {
        let mut h = Xxh3::new();
        for part in parts {
            match part {
                Some(bytes) => {
                    h.update(&[1]);
                    h.update(&(bytes.len() as u64).to_le_bytes());
                    h.update(bytes);
                }
                None => h.update(&[0]),
            }
        }
        Self(h.digest128())
    }

    /// Lower 64 bits; used where only multiplicity matters.
    pub fn low64(self) -> u64 {
        self.0 as u64
    }

    pub fn to_hex(self) -> String {
        format!("{:032x}", self.0)
    }
}

impl fmt::Debug for Hash128 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Hash128({:032x})", self.0)
    }
}

impl fmt::Display for Hash128 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:032x}", self.0)
    }
}

impl FromStr for Hash128 {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        u128::from_str_radix(s, 16).map(Hash128)
    }
}

impl Serialize for Hash128 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Hash128 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Pass-through hasher for keys that are already uniformly distributed
/// digests. Iteration order of maps built with it depends only on insertion
/// history, which keeps campaigns reproducible.
#[derive(Default, Clone, Copy)]
pub struct DigestHasher(u64);

impl Hasher for DigestHasher {
    fn finish(&self) -> u64 {
        self.0
    }

    fn write(&mut self, bytes: &[u8]) {
        for chunk in bytes.chunks(8) {
            let mut buf = [0u8; 8];
            buf[..chunk.len()].copy_from_slice(chunk);
            self.0 = self.0.rotate_left(5) ^ u64::from_le_bytes(buf);
        }
    }

    fn write_u128(&mut self, i: u128) {
        self.0 ^= (i as u64) ^ ((i >> 64) as u64);
    }

    fn write_u64(&mut self, i: u64) {
        self.0 ^= i;
    }
}

pub type DigestBuildHasher = BuildHasherDefault<DigestHasher>;
pub type DigestMap<K, V> = std::collections::HashMap<K, V, DigestBuildHasher>;
pub type DigestSet<K> = std::collections::HashSet<K, DigestBuildHasher>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn part_boundaries_are_unambiguous() {
        let a = Hash128::of_parts([Some(&b"ab"[..]), Some(&b"c"[..])]);
        let b = Hash128::of_parts([Some(&b"a"[..]), Some(&b"bc"[..])]);
        let c = Hash128::of_parts([Some(&b"abc"[..]), None]);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_ne!(b, c);
    }

    #[test]
    fn hex_round_trip() {
        let h = Hash128::of(b"hello");
        assert_eq!(h.to_hex().parse::<Hash128>().unwrap(), h);
        let json = serde_json::to_string(&h).unwrap();
        assert_eq!(serde_json::from_str::<Hash128>(&json).unwrap(), h);
    }

    #[test]
    fn stable_across_calls() {
        assert_eq!(Hash128::of(b"x"), Hash128::of(b"x"));
        assert_ne!(Hash128::of(b""), Hash128::of(b"\0"));
    }
}
