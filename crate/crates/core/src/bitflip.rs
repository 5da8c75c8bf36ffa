//! Maps from secret input bits to the public output bits they flip.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::input::{BitCoordinate, SecretPartId};

/// One entry as it appears in `bitflip_map.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitflipRecord {
    pub part: SecretPartId,
    pub input_bit: usize,
    pub output_bits: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "Vec<BitflipRecord>", from = "Vec<BitflipRecord>")]
pub struct BitflipMap {
    entries: BTreeMap<BitCoordinate, BTreeSet<usize>>,
}

impl BitflipMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts an entry; empty sets are ignored.
    pub fn insert(&mut self, coord: BitCoordinate, outputs: BTreeSet<usize>) {
        if !outputs.is_empty() {
            self.entries.insert(coord, outputs);
        }
    }

    pub fn get(&self, coord: &BitCoordinate) -> Option<&BTreeSet<usize>> {
        self.entries.get(coord)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&BitCoordinate, &BTreeSet<usize>)> {
        self.entries.iter()
    }

    pub fn coords(&self) -> impl Iterator<Item = BitCoordinate> + '_ {
        self.entries.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn count_for_part(&self, part: SecretPartId) -> usize {
        self.entries.keys().filter(|c| c.part == part).count()
    }

    /// Removes the given output bits from every entry, then drops empty entries.
    pub fn remove_outputs(&mut self, outputs: &BTreeSet<usize>) -> bool {
        if outputs.is_empty() {
            return false;
        }
        let mut changed = false;
        for set in self.entries.values_mut() {
            let before = set.len();
            set.retain(|o| !outputs.contains(o));
            changed |= set.len() != before;
        }
        self.entries.retain(|_, v| !v.is_empty());
        changed
    }

    /// Removes specific output bits from a single entry.
    pub fn remove_from_entry(&mut self, coord: &BitCoordinate, outputs: &BTreeSet<usize>) -> bool {
        let Some(set) = self.entries.get_mut(coord) else {
            return false;
        };
        let before = set.len();
        set.retain(|o| !outputs.contains(o));
        let changed = set.len() != before;
        if set.is_empty() {
            self.entries.remove(coord);
        }
        changed
    }

    pub fn remove_entry(&mut self, coord: &BitCoordinate) -> bool {
        self.entries.remove(coord).is_some()
    }

    /// Output bits that appear under more than one key.
    pub fn shared_outputs(&self) -> BTreeSet<usize> {
        let mut seen = BTreeSet::new();
        let mut shared = BTreeSet::new();
        for set in self.entries.values() {
            for o in set {
                if !seen.insert(*o) {
                    shared.insert(*o);
                }
            }
        }
        shared
    }

    /// Union of the outputs predicted to flip when all `coords` flip
    /// together, assuming each entry toggles its outputs independently.
    pub fn predicted_flips<'a>(&self, coords: impl IntoIterator<Item = &'a BitCoordinate>) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        for c in coords {
            if let Some(set) = self.entries.get(c) {
                out.extend(set.iter().copied());
            }
        }
        out
    }

    /// Largest spread between the highest and lowest output bit of any
    /// single entry. Zero for one-to-one maps.
    pub fn compute_extension(&self) -> usize {
        self.extension_by_part().into_values().max().unwrap_or(0)
    }

    pub fn extension_by_part(&self) -> BTreeMap<SecretPartId, usize> {
        let mut out = BTreeMap::new();
        for (coord, set) in &self.entries {
            let (Some(lo), Some(hi)) = (set.first(), set.last()) else {
                continue;
            };
            let e = out.entry(coord.part).or_insert(0);
            *e = (*e).max(hi - lo);
        }
        out
    }

    pub fn to_records(&self) -> Vec<BitflipRecord> {
        self.entries
            .iter()
            .map(|(c, set)| BitflipRecord {
                part: c.part,
                input_bit: c.bit_index,
                output_bits: set.iter().copied().collect(),
            })
            .collect()
    }
}

impl From<BitflipMap> for Vec<BitflipRecord> {
    fn from(map: BitflipMap) -> Self {
        map.to_records()
    }
}

impl From<Vec<BitflipRecord>> for BitflipMap {
    fn from(records: Vec<BitflipRecord>) -> Self {
        let mut map = BitflipMap::new();
        for r in records {
            map.insert(BitCoordinate::new(r.part, r.input_bit), r.output_bits.into_iter().collect());
        }
        map
    }
}

impl FromIterator<(BitCoordinate, BTreeSet<usize>)> for BitflipMap {
    fn from_iter<T: IntoIterator<Item = (BitCoordinate, BTreeSet<usize>)>>(iter: T) -> Self {
        let mut map = BitflipMap::new();
        for (c, s) in iter {
            map.insert(c, s);
        }
        map
    }
}
