//! Running the system under test and capturing what it makes public.

mod inprocess;
mod subprocess;

use serde::{Deserialize, Serialize};

pub use inprocess::{InProcessBackend, TargetFn, TargetIo};
pub use subprocess::{SubprocessBackend, ENV_MAP_SIZE, ENV_SHM_ID};

use crate::error::Result;
use crate::hash::Hash128;
use crate::input::StructuredInput;

pub const DEFAULT_MAP_SIZE: usize = 1 << 16;
pub const DEFAULT_STREAM_CAP: usize = 1 << 20;

/// Everything the target wrote to its public channels.
#[derive(Debug, Clone, Default, Eq, Serialize, Deserialize)]
pub struct OutputData {
    pub stdout: Vec<u8>,
    pub stderr: Vec<u8>,
    /// Set when either stream hit the capture cap. Not part of equality.
    #[serde(default)]
    pub truncated: bool,
}

impl PartialEq for OutputData {
    fn eq(&self, other: &Self) -> bool {
        self.stdout == other.stdout && self.stderr == other.stderr
    }
}

impl std::hash::Hash for OutputData {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.stdout.hash(state);
        self.stderr.hash(state);
    }
}

/// Result of comparing two outputs bit by bit over stdout‖stderr.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BitDiff {
    pub flipped: Vec<usize>,
    /// One of the streams changed length; `flipped` only covers the
    /// common prefix of each stream.
    pub length_mismatch: bool,
}

impl OutputData {
    pub fn new(stdout: impl Into<Vec<u8>>, stderr: impl Into<Vec<u8>>) -> Self {
        Self {
            stdout: stdout.into(),
            stderr: stderr.into(),
            truncated: false,
        }
    }

    pub fn hash128(&self) -> Hash128 {
        Hash128::of_parts([Some(self.stdout.as_slice()), Some(self.stderr.as_slice())])
    }

    pub fn bit_len(&self) -> usize {
        (self.stdout.len() + self.stderr.len()) * 8
    }

    /// Output bit positions that differ from `base`. Stderr bits are
    /// numbered after all of `base`'s stdout bits.
    pub fn diff_bits(base: &OutputData, other: &OutputData) -> BitDiff {
        let mut flipped = Vec::new();
        let mut push = |offset: usize, a: &[u8], b: &[u8]| {
            for (i, (x, y)) in a.iter().zip(b).enumerate() {
                let mut d = x ^ y;
                while d != 0 {
                    let bit = d.trailing_zeros() as usize;
                    flipped.push(offset + i * 8 + bit);
                    d &= d - 1;
                }
            }
        };
        push(0, &base.stdout, &other.stdout);
        push(base.stdout.len() * 8, &base.stderr, &other.stderr);
        BitDiff {
            flipped,
            length_mismatch: base.stdout.len() != other.stdout.len() || base.stderr.len() != other.stderr.len(),
        }
    }
}

/// AFL-style hit counters, stored sparsely as sorted `(index, count)`
/// pairs. `len()` is always the configured map size.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CoverageMap {
    size: usize,
    entries: Vec<(u32, u8)>,
}

impl CoverageMap {
    pub fn empty(size: usize) -> Self {
        Self {
            size,
            entries: Vec::new(),
        }
    }

    /// Builds from raw hit indices (unsorted, possibly repeated).
    pub fn from_hits(size: usize, hits: &mut [u32]) -> Self {
        hits.sort_unstable();
        let mut entries: Vec<(u32, u8)> = Vec::new();
        for &h in hits.iter() {
            match entries.last_mut() {
                Some((idx, count)) if *idx == h => *count = count.saturating_add(1),
                _ => entries.push((h, 1)),
            }
        }
        Self { size, entries }
    }

    pub fn from_dense(counters: &[u8]) -> Self {
        Self {
            size: counters.len(),
            entries: counters
                .iter()
                .enumerate()
                .filter(|(_, c)| **c != 0)
                .map(|(i, c)| (i as u32, *c))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    pub fn is_all_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn nonzero(&self) -> &[(u32, u8)] {
        &self.entries
    }

    pub fn dense(&self) -> Vec<u8> {
        let mut out = vec![0u8; self.size];
        for &(i, c) in &self.entries {
            out[i as usize] = c;
        }
        out
    }
}

/// AFL hit-count bucket as a one-hot byte.
pub fn bucket(count: u8) -> u8 {
    match count {
        0 => 0,
        1 => 1,
        2 => 2,
        3 => 4,
        4..=7 => 8,
        8..=15 => 16,
        16..=31 => 32,
        32..=127 => 64,
        _ => 128,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExitKind {
    Normal,
    Crash,
    Timeout,
}

#[derive(Debug, Clone)]
pub struct ExecutionResult {
    pub output: OutputData,
    pub coverage: CoverageMap,
    pub exit_kind: ExitKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Stability {
    Stable(OutputData),
    Unstable,
}

pub trait TargetBackend {
    fn run(&mut self, input: &StructuredInput) -> Result<ExecutionResult>;

    /// Total executions performed by this backend.
    fn executions(&self) -> u64;

    fn map_size(&self) -> usize;

    /// Runs `input` `k` times and reports whether every output matched.
    fn check_stability(&mut self, input: &StructuredInput, k: usize) -> Result<Stability> {
        assert!(k >= 2, "stability check needs at least two runs");
        let first = self.run(input)?.output;
        for _ in 1..k {
            if self.run(input)?.output != first {
                return Ok(Stability::Unstable);
            }
        }
        Ok(Stability::Stable(first))
    }
}

impl<T: TargetBackend + ?Sized> TargetBackend for Box<T> {
    fn run(&mut self, input: &StructuredInput) -> Result<ExecutionResult> {
        (**self).run(input)
    }

    fn executions(&self) -> u64 {
        (**self).executions()
    }

    fn map_size(&self) -> usize {
        (**self).map_size()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diff_bits_lsb_first() {
        let a = OutputData::new(vec![0x00], vec![]);
        let b = OutputData::new(vec![0x48], vec![]);
        assert_eq!(OutputData::diff_bits(&a, &b).flipped, vec![3, 6]);
    }

    #[test]
    fn diff_bits_spans_stderr() {
        let a = OutputData::new(vec![0, 0], vec![0]);
        let b = OutputData::new(vec![0, 1], vec![0x80]);
        let d = OutputData::diff_bits(&a, &b);
        assert_eq!(d.flipped, vec![8, 23]);
        assert!(!d.length_mismatch);
    }

    #[test]
    fn diff_bits_flags_length_change() {
        let a = OutputData::new(vec![1, 2], vec![]);
        let b = OutputData::new(vec![0], vec![]);
        let d = OutputData::diff_bits(&a, &b);
        assert!(d.length_mismatch);
        assert_eq!(d.flipped, vec![0]);
    }

    #[test]
    fn output_equality_ignores_truncation_flag() {
        let mut a = OutputData::new(b"x".to_vec(), vec![]);
        let b = a.clone();
        a.truncated = true;
        assert_eq!(a, b);
        assert_ne!(OutputData::new(b"x".to_vec(), vec![]), OutputData::new(vec![], b"x".to_vec()));
        assert_ne!(
            OutputData::new(b"x".to_vec(), vec![]).hash128(),
            OutputData::new(vec![], b"x".to_vec()).hash128()
        );
    }

    #[test]
    fn sparse_coverage_matches_dense() {
        let mut hits = vec![5, 1, 5, 9, 5];
        let map = CoverageMap::from_hits(16, &mut hits);
        assert_eq!(map.nonzero(), &[(1, 1), (5, 3), (9, 1)]);
        assert_eq!(map.len(), 16);
        let dense = map.dense();
        assert_eq!(CoverageMap::from_dense(&dense), map);
        assert!(CoverageMap::empty(16).is_all_zero());
    }

    #[test]
    fn buckets_are_one_hot() {
        for c in 1..=255u8 {
            assert_eq!(bucket(c).count_ones(), 1);
        }
        assert_eq!(bucket(0), 0);
        assert_eq!(bucket(3), 4);
        assert_eq!(bucket(200), 128);
    }
}
