//! Leakage metrics computed from recorded observations.
//!
//! All estimators are pure functions of a [`LeakSummary`], which can be
//! built from a live [`FuzzerState`] or from a JSON [`StateSnapshot`].
//! Summaries are sorted by hash so that floating point sums, and hence
//! reports, do not depend on map iteration order.

use serde::{Deserialize, Serialize};

use crate::hash::Hash128;
use crate::input::SecretPartId;
use crate::state::{FuzzerState, StateSnapshot};

pub const DEFAULT_MIN_HITS: u64 = 8;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ViolationSummary {
    pub public_hash: Hash128,
    /// Uniform-phase sample count per stable output, ordered by output hash.
    pub uniform_counts: Vec<u64>,
    /// Stable outputs seen only outside uniform sampling.
    pub non_uniform_only: u64,
    /// Stable outputs across both phases.
    pub distinct_outputs: u64,
    /// Bit-map entries per part, indexed by `SecretPartId::index`.
    pub mapped_bits: [usize; 3],
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LeakSummary {
    /// Hit count of every recorded public input.
    pub hits: Vec<u64>,
    pub violations: Vec<ViolationSummary>,
}

impl LeakSummary {
    pub fn from_state(state: &FuzzerState) -> Self {
        let hits = state.map.values().map(|e| e.hits).collect();
        let mut violations: Vec<ViolationSummary> = state
            .violations()
            .iter()
            .filter_map(|v| {
                let e = state.entry(v)?;
                let mut uniform: Vec<(Hash128, u64)> = Vec::new();
                let mut non_uniform_only = 0u64;
                for r in e.outputs().iter().filter(|r| !e.is_unstable(&r.output_hash)) {
                    if r.uniform.is_empty() {
                        non_uniform_only += 1;
                    } else {
                        uniform.push((r.output_hash, r.uniform.len() as u64));
                    }
                }
                uniform.sort_unstable();
                Some(ViolationSummary {
                    public_hash: *v,
                    distinct_outputs: uniform.len() as u64 + non_uniform_only,
                    uniform_counts: uniform.into_iter().map(|(_, c)| c).collect(),
                    non_uniform_only,
                    mapped_bits: mapped_bits(e.bitflip_map()),
                })
            })
            .collect();
        violations.sort_by_key(|v| v.public_hash);
        Self { hits, violations }
    }

    pub fn from_snapshot(snap: &StateSnapshot) -> Self {
        let hits = snap.entries.iter().map(|e| e.hits).collect();
        let mut violations: Vec<ViolationSummary> = snap
            .violations
            .iter()
            .filter_map(|v| {
                let e = snap.entries.iter().find(|e| e.public_hash == *v)?;
                let stable = |h: &Hash128| !e.unstable.contains(h);
                let uniform_counts: Vec<u64> = e.uniform.iter().filter(|(h, _)| stable(h)).map(|(_, c)| *c).collect();
                let non_uniform_only = e
                    .non_uniform
                    .keys()
                    .filter(|h| stable(h) && !e.uniform.contains_key(h))
                    .count() as u64;
                Some(ViolationSummary {
                    public_hash: *v,
                    distinct_outputs: uniform_counts.len() as u64 + non_uniform_only,
                    uniform_counts,
                    non_uniform_only,
                    mapped_bits: mapped_bits(e.bitflip_map.as_ref()),
                })
            })
            .collect();
        violations.sort_by_key(|v| v.public_hash);
        Self { hits, violations }
    }

    /// Public inputs with at least `min_hits` executions.
    pub fn unique_public_inputs(&self, min_hits: u64) -> usize {
        self.hits.iter().filter(|h| **h >= min_hits).count()
    }
}

fn mapped_bits(map: Option<&crate::bitflip::BitflipMap>) -> [usize; 3] {
    let mut out = [0; 3];
    if let Some(m) = map {
        for part in SecretPartId::ALL {
            out[part.index()] = m.count_for_part(part);
        }
    }
    out
}

/// `p * log2(p)` with `0 log 0 = 0`.
fn plog(p: f64) -> f64 {
    if p > 0.0 {
        p * p.log2()
    } else {
        0.0
    }
}

/// I(S;O|E) = -Σ p(o,v) log p(o,v) + Σ p(v) log p(v), summed over
/// violations only (non-violating public inputs contribute zero).
///
/// p(v) is one over the number of public inputs with at least `min_hits`
/// executions. p(o,v) is p(v) times the output's share of the uniform
/// samples; outputs never seen during uniform sampling get p(v)/N.
/// Violations without uniform samples are skipped.
pub fn estimate_cmi(summary: &LeakSummary, min_hits: u64) -> f64 {
    let unique = summary.unique_public_inputs(min_hits);
    if unique == 0 {
        return 0.0;
    }
    let pv = 1.0 / unique as f64;
    let mut sum_outputs = 0.0;
    let mut sum_violations = 0.0;
    for v in &summary.violations {
        let n: u64 = v.uniform_counts.iter().sum();
        if n == 0 {
            continue;
        }
        let n = n as f64;
        sum_violations += plog(pv);
        for &c in &v.uniform_counts {
            sum_outputs += plog(pv * c as f64 / n);
        }
        sum_outputs += v.non_uniform_only as f64 * plog(pv / n);
    }
    (-sum_outputs + sum_violations).max(0.0)
}

/// log2 of the largest number of distinct outputs seen for one violation.
pub fn capacity_lower_bound(summary: &LeakSummary) -> f64 {
    summary
        .violations
        .iter()
        .map(|v| v.distinct_outputs)
        .max()
        .filter(|m| *m > 0)
        .map_or(0.0, |m| (m as f64).log2())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DirectMappedBits {
    pub explicit: usize,
    pub stack: usize,
    pub heap: usize,
}

impl DirectMappedBits {
    pub fn get(&self, part: SecretPartId) -> usize {
        match part {
            SecretPartId::Explicit => self.explicit,
            SecretPartId::Stack => self.stack,
            SecretPartId::Heap => self.heap,
        }
    }
}

/// Per part, the largest number of map entries of any single violation.
pub fn max_direct_mapped_bits(summary: &LeakSummary) -> DirectMappedBits {
    let max = |i: usize| summary.violations.iter().map(|v| v.mapped_bits[i]).max().unwrap_or(0);
    DirectMappedBits {
        explicit: max(SecretPartId::Explicit.index()),
        stack: max(SecretPartId::Stack.index()),
        heap: max(SecretPartId::Heap.index()),
    }
}

/// The three metrics plus campaign counters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QifReport {
    pub cmi_bits: f64,
    pub capacity_lower_bound_bits: f64,
    pub direct_mapped_bits: DirectMappedBits,
    pub violations: usize,
    pub unique_public_inputs: usize,
    pub executions: u64,
    pub seconds: f64,
}

impl QifReport {
    pub fn compute(summary: &LeakSummary, min_hits: u64, executions: u64, seconds: f64) -> Self {
        Self {
            cmi_bits: estimate_cmi(summary, min_hits),
            capacity_lower_bound_bits: capacity_lower_bound(summary),
            direct_mapped_bits: max_direct_mapped_bits(summary),
            violations: summary.violations.len(),
            unique_public_inputs: summary.unique_public_inputs(min_hits),
            executions,
            seconds,
        }
    }
}
