//! Fuzzer state: per-public-input observations, the coverage corpus and
//! the violation corpus.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bitflip::BitflipMap;
use crate::error::{Error, Result};
use crate::executor::{bucket, CoverageMap, OutputData, Stability, TargetBackend};
use crate::hash::{DigestMap, DigestSet, Hash128};
use crate::input::{SecretParts, StructuredInput};

/// Stability re-runs per witness when confirming a violation.
pub const CONFIRM_RUNS: usize = 3;
/// Distinct outputs per public input for which a full secret is retained.
pub const DEFAULT_MAX_REPRESENTATIVES: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Uniform,
    NonUniform,
}

/// Observations for one distinct output of a public input.
#[derive(Debug, Clone)]
pub struct OutputRecord {
    pub output_hash: Hash128,
    /// 64-bit hashes of the secrets that produced this output during
    /// uniform sampling.
    pub uniform: Vec<u64>,
    /// The same for every other phase.
    pub non_uniform: Vec<u64>,
    /// Full secret reproducing this output, while under the cap.
    pub representative: Option<Box<SecretParts>>,
}

impl OutputRecord {
    fn list(&mut self, phase: Phase) -> &mut Vec<u64> {
        match phase {
            Phase::Uniform => &mut self.uniform,
            Phase::NonUniform => &mut self.non_uniform,
        }
    }
}

/// Exploit-stage data, allocated only for public inputs that need it.
#[derive(Debug, Clone, Default)]
pub struct ExploitData {
    pub bitflip_map: Option<BitflipMap>,
    pub bitflips_done: bool,
    /// Outputs that failed a stability check; ignored when counting.
    pub unstable_outputs: DigestSet<Hash128>,
    /// Full input used as the exploit baseline once this is a violation.
    pub violation_input: Option<StructuredInput>,
}

/// Outputs beyond which lookups go through a hash index.
const LINEAR_LOOKUP: usize = 8;

/// Everything recorded for one public input.
///
/// The two phase maps (output hash to secret hashes) and the
/// representative-secret map are stored together as one record per
/// distinct output, in first-seen order. Accessors expose each map.
#[derive(Debug, Clone, Default)]
pub struct IOHashValue {
    pub representative_public_input: Box<[u8]>,
    pub hits: u64,
    outputs: Vec<OutputRecord>,
    index: Option<Box<DigestMap<Hash128, u32>>>,
    stable_outputs: u32,
    representatives: u32,
    exploit: Option<Box<ExploitData>>,
}

impl IOHashValue {
    fn new(public: &[u8]) -> Self {
        Self {
            representative_public_input: public.into(),
            ..Self::default()
        }
    }

    fn position(&self, out: &Hash128) -> Option<usize> {
        match &self.index {
            Some(idx) => idx.get(out).map(|i| *i as usize),
            None => self.outputs.iter().position(|r| r.output_hash == *out),
        }
    }

    /// All outputs ever recorded, in first-seen order, including unstable ones.
    pub fn outputs(&self) -> &[OutputRecord] {
        &self.outputs
    }

    pub fn output(&self, out: &Hash128) -> Option<&OutputRecord> {
        self.position(out).map(|i| &self.outputs[i])
    }

    pub fn knows_output(&self, out: &Hash128) -> bool {
        self.position(out).is_some()
    }

    pub fn is_unstable(&self, out: &Hash128) -> bool {
        self.exploit.as_ref().is_some_and(|x| x.unstable_outputs.contains(out))
    }

    /// Stable distinct outputs, in first-seen order.
    pub fn distinct_outputs(&self) -> impl Iterator<Item = &Hash128> {
        self.outputs
            .iter()
            .map(|r| &r.output_hash)
            .filter(|h| !self.is_unstable(h))
    }

    pub fn distinct_output_count(&self) -> usize {
        self.stable_outputs as usize
    }

    pub fn uniform_samples(&self) -> u64 {
        self.outputs.iter().map(|r| r.uniform.len() as u64).sum()
    }

    /// Output hash to secret hashes, uniform sampling only.
    pub fn uniform_pub_outs_to_sec_ins(&self) -> impl Iterator<Item = (&Hash128, &[u64])> {
        self.outputs
            .iter()
            .filter(|r| !r.uniform.is_empty())
            .map(|r| (&r.output_hash, r.uniform.as_slice()))
    }

    /// Output hash to secret hashes, every other phase.
    pub fn non_uniform_pub_outs_to_sec_ins(&self) -> impl Iterator<Item = (&Hash128, &[u64])> {
        self.outputs
            .iter()
            .filter(|r| !r.non_uniform.is_empty())
            .map(|r| (&r.output_hash, r.non_uniform.as_slice()))
    }

    pub fn secret_input_for_public_output(&self, out: &Hash128) -> Option<&SecretParts> {
        self.output(out)?.representative.as_deref()
    }

    /// Full input reproducing `output`, if a representative was kept.
    pub fn witness(&self, output: &Hash128) -> Option<StructuredInput> {
        self.secret_input_for_public_output(output)
            .map(|s| StructuredInput::with_secrets(&self.representative_public_input, s))
    }

    pub fn exploit(&self) -> Option<&ExploitData> {
        self.exploit.as_deref()
    }

    pub fn exploit_mut(&mut self) -> &mut ExploitData {
        self.exploit.get_or_insert_with(Default::default)
    }

    pub fn bitflip_map(&self) -> Option<&BitflipMap> {
        self.exploit()?.bitflip_map.as_ref()
    }

    pub fn bitflips_done(&self) -> bool {
        self.exploit().is_some_and(|x| x.bitflips_done)
    }

    pub fn violation_input(&self) -> Option<&StructuredInput> {
        self.exploit()?.violation_input.as_ref()
    }

    fn mark_unstable(&mut self, out: Hash128) {
        let known = self.knows_output(&out);
        if self.exploit_mut().unstable_outputs.insert(out) && known {
            self.stable_outputs -= 1;
        }
    }

    /// Appends a secret hash under `out`; true if `out` is new.
    fn push(&mut self, out: Hash128, secret: &StructuredInput, phase: Phase, max_reps: usize) -> bool {
        if let Some(i) = self.position(&out) {
            self.outputs[i].list(phase).push(secret.secret_hash().low64());
            return false;
        }
        let representative = ((self.representatives as usize) < max_reps).then(|| {
            self.representatives += 1;
            Box::new(secret.secrets())
        });
        let mut record = OutputRecord {
            output_hash: out,
            uniform: Vec::new(),
            non_uniform: Vec::new(),
            representative,
        };
        record.list(phase).push(secret.secret_hash().low64());
        if self.outputs.capacity() == 0 {
            self.outputs.reserve_exact(1);
        }
        self.outputs.push(record);
        let pos = self.outputs.len() - 1;
        match &mut self.index {
            Some(idx) => {
                idx.insert(out, pos as u32);
            }
            None if self.outputs.len() > LINEAR_LOOKUP => {
                let idx = self
                    .outputs
                    .iter()
                    .enumerate()
                    .map(|(i, r)| (r.output_hash, i as u32))
                    .collect();
                self.index = Some(Box::new(idx));
            }
            None => {}
        }
        if !self.is_unstable(&out) {
            self.stable_outputs += 1;
        }
        true
    }
}

#[derive(Debug, Clone)]
pub struct CorpusEntry {
    pub input: StructuredInput,
    /// Whether the probe-pattern secret mutation has run on this entry.
    pub probed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecordOutcome {
    pub public_hash: Hash128,
    pub output_hash: Hash128,
    pub first_output_for_public: bool,
    pub new_distinct_output: bool,
    pub new_coverage: bool,
    /// Stable distinct outputs for this public input after recording.
    pub distinct_outputs: usize,
    pub already_violation: bool,
}

impl RecordOutcome {
    /// A second distinct output for a public input not yet known to violate.
    pub fn is_violation_candidate(&self) -> bool {
        self.new_distinct_output && self.distinct_outputs >= 2 && !self.already_violation
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selection {
    Main(usize),
    Violation(Hash128),
}

#[derive(Debug, Clone)]
pub struct FuzzerState {
    pub map: DigestMap<Hash128, IOHashValue>,
    public_order: Vec<Hash128>,
    pub corpus: Vec<CorpusEntry>,
    violations: Vec<Hash128>,
    violation_set: DigestSet<Hash128>,
    virgin: Vec<u8>,
    pub max_representatives: usize,
}

impl FuzzerState {
    pub fn new(map_size: usize) -> Self {
        Self {
            map: DigestMap::default(),
            public_order: Vec::new(),
            corpus: Vec::new(),
            violations: Vec::new(),
            violation_set: DigestSet::default(),
            virgin: vec![0; map_size],
            max_representatives: DEFAULT_MAX_REPRESENTATIVES,
        }
    }

    pub fn violations(&self) -> &[Hash128] {
        &self.violations
    }

    pub fn is_violation(&self, public: &Hash128) -> bool {
        self.violation_set.contains(public)
    }

    pub fn public_count(&self) -> usize {
        self.public_order.len()
    }

    pub fn entry(&self, public: &Hash128) -> Option<&IOHashValue> {
        self.map.get(public)
    }

    pub fn entry_mut(&mut self, public: &Hash128) -> Option<&mut IOHashValue> {
        self.map.get_mut(public)
    }

    pub fn add_to_corpus(&mut self, input: StructuredInput) {
        self.corpus.push(CorpusEntry { input, probed: false });
    }

    /// Merges coverage into the global accumulator; true if any new
    /// (edge, bucket) pair was seen.
    pub fn merge_coverage(&mut self, cov: &CoverageMap) -> bool {
        let mut new = false;
        for &(idx, count) in cov.nonzero() {
            let Some(slot) = self.virgin.get_mut(idx as usize) else {
                continue;
            };
            let b = bucket(count);
            if *slot & b == 0 {
                *slot |= b;
                new = true;
            }
        }
        new
    }

    pub fn record_execution(
        &mut self,
        input: &StructuredInput,
        output: &OutputData,
        coverage: Option<&CoverageMap>,
        phase: Phase,
    ) -> RecordOutcome {
        let new_coverage = coverage.is_some_and(|c| self.merge_coverage(c));
        let public_hash = input.public_hash();
        let output_hash = output.hash128();
        let max_reps = self.max_representatives;

        let entry = match self.map.get_mut(&public_hash) {
            Some(e) => e,
            None => {
                self.public_order.push(public_hash);
                self.map.entry(public_hash).or_insert_with(|| IOHashValue::new(&input.public))
            }
        };
        entry.hits += 1;
        let mut outcome = RecordOutcome {
            public_hash,
            output_hash,
            first_output_for_public: false,
            new_distinct_output: false,
            new_coverage,
            distinct_outputs: 0,
            already_violation: self.violation_set.contains(&public_hash),
        };
        if entry.is_unstable(&output_hash) {
            outcome.distinct_outputs = entry.distinct_output_count();
            return outcome;
        }
        let first = entry.outputs.is_empty();
        if entry.push(output_hash, input, phase, max_reps) {
            outcome.first_output_for_public = first;
            outcome.new_distinct_output = true;
        }
        outcome.distinct_outputs = entry.distinct_output_count();
        outcome
    }

    /// Adds `public` to the violation corpus without re-execution.
    /// Returns false if it was already registered.
    pub fn register_violation(&mut self, public: Hash128, baseline: StructuredInput) -> bool {
        if !self.violation_set.insert(public) {
            return false;
        }
        self.violations.push(public);
        if let Some(e) = self.map.get_mut(&public) {
            e.exploit_mut().violation_input.get_or_insert(baseline);
        }
        true
    }

    pub fn mark_unstable(&mut self, public: &Hash128, output: Hash128) {
        if let Some(e) = self.map.get_mut(public) {
            e.mark_unstable(output);
        }
    }

    /// Picks the next base input: main corpus only until a violation
    /// exists, then either corpus with equal probability.
    pub fn select_next<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Selection> {
        if self.corpus.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        if self.violations.is_empty() || rng.gen_bool(0.5) {
            Ok(Selection::Main(rng.gen_range(0..self.corpus.len())))
        } else {
            Ok(Selection::Violation(self.violations[rng.gen_range(0..self.violations.len())]))
        }
    }

    /// A recorded public input drawn uniformly.
    pub fn random_public<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<&[u8]> {
        if self.public_order.is_empty() {
            return None;
        }
        let h = self.public_order[rng.gen_range(0..self.public_order.len())];
        self.map.get(&h).map(|e| e.representative_public_input.as_ref())
    }

    /// Checks that every registered violation has two stable distinct outputs.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        for v in &self.violations {
            let e = self.map.get(v).ok_or_else(|| format!("violation {v} has no map entry"))?;
            if e.distinct_output_count() < 2 {
                return Err(format!("violation {v} has fewer than two distinct outputs"));
            }
        }
        if self.violation_set.len() != self.violations.len() {
            return Err("duplicate violations".into());
        }
        for e in self.map.values() {
            let recorded: u64 = e.outputs.iter().map(|r| (r.uniform.len() + r.non_uniform.len()) as u64).sum();
            if recorded > e.hits {
                return Err("hits below recorded entries".into());
            }
        }
        Ok(())
    }

    pub fn snapshot(&self, executions: u64, seconds: f64) -> StateSnapshot {
        let mut entries: Vec<SnapshotEntry> = self
            .map
            .iter()
            .map(|(h, e)| SnapshotEntry {
                public_hash: *h,
                public: hex_encode(&e.representative_public_input),
                hits: e.hits,
                uniform: counts(e.uniform_pub_outs_to_sec_ins()),
                non_uniform: counts(e.non_uniform_pub_outs_to_sec_ins()),
                unstable: {
                    let mut u: Vec<Hash128> = e.exploit().map(|x| x.unstable_outputs.iter().copied().collect()).unwrap_or_default();
                    u.sort_unstable();
                    u
                },
                bitflips_done: e.bitflips_done(),
                bitflip_map: e.bitflip_map().cloned(),
            })
            .collect();
        entries.sort_by_key(|e| e.public_hash);
        StateSnapshot {
            version: SNAPSHOT_VERSION,
            executions,
            seconds,
            corpus_size: self.corpus.len(),
            violations: self.violations.clone(),
            entries,
        }
    }
}

/// Confirms a candidate violation by re-running both witnesses. Unstable
/// witnesses have their recorded outputs excluded from counting.
pub fn confirm_violation<B: TargetBackend + ?Sized>(
    state: &mut FuzzerState,
    backend: &mut B,
    public_hash: Hash128,
    witnesses: [(&StructuredInput, Hash128); 2],
) -> Result<bool> {
    if state.is_violation(&public_hash) {
        return Ok(true);
    }
    let mut stable = Vec::with_capacity(2);
    for (input, recorded) in witnesses {
        match backend.check_stability(input, CONFIRM_RUNS)? {
            Stability::Stable(o) if o.hash128() == recorded => stable.push(recorded),
            _ => state.mark_unstable(&public_hash, recorded),
        }
    }
    if stable.len() == 2 && stable[0] != stable[1] {
        state.register_violation(public_hash, witnesses[0].0.clone());
        Ok(true)
    } else {
        Ok(false)
    }
}

pub const SNAPSHOT_VERSION: u32 = 1;

/// JSON form of the state. Secret hash lists are reduced to counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub version: u32,
    pub executions: u64,
    #[serde(default)]
    pub seconds: f64,
    pub corpus_size: usize,
    pub violations: Vec<Hash128>,
    pub entries: Vec<SnapshotEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotEntry {
    pub public_hash: Hash128,
    /// Representative public input, hex encoded.
    pub public: String,
    pub hits: u64,
    pub uniform: BTreeMap<Hash128, u64>,
    pub non_uniform: BTreeMap<Hash128, u64>,
    #[serde(default)]
    pub unstable: Vec<Hash128>,
    pub bitflips_done: bool,
    pub bitflip_map: Option<BitflipMap>,
}

fn counts<'a>(lists: impl Iterator<Item = (&'a Hash128, &'a [u64])>) -> BTreeMap<Hash128, u64> {
    lists.map(|(k, v)| (*k, v.len() as u64)).collect()
}

pub fn hex_encode(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::executor::InProcessBackend;
    use crate::input::SecretPartId;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::atomic::{AtomicU64, Ordering};

    fn input(public: u8, secret: u8) -> StructuredInput {
        StructuredInput::new(vec![public]).with_part(SecretPartId::Explicit, vec![secret])
    }

    fn out(b: u8) -> OutputData {
        OutputData::new(vec![b], vec![])
    }

    #[test]
    fn record_sequence() {
        let mut s = FuzzerState::new(16);
        let a = s.record_execution(&input(1, 0), &out(1), None, Phase::NonUniform);
        assert!(a.first_output_for_public && a.new_distinct_output);
        assert_eq!(a.distinct_outputs, 1);
        assert!(!a.is_violation_candidate());

        let b = s.record_execution(&input(1, 0), &out(1), None, Phase::NonUniform);
        assert!(!b.new_distinct_output && !b.first_output_for_public);
        assert_eq!(s.entry(&a.public_hash).unwrap().hits, 2);

        let c = s.record_execution(&input(1, 5), &out(2), None, Phase::NonUniform);
        assert!(c.new_distinct_output && c.is_violation_candidate());
        assert_eq!(c.distinct_outputs, 2);
    }

    #[test]
    fn phase_maps_union_is_distinct_outputs() {
        let mut s = FuzzerState::new(16);
        s.record_execution(&input(1, 0), &out(1), None, Phase::NonUniform);
        s.record_execution(&input(1, 1), &out(1), None, Phase::Uniform);
        s.record_execution(&input(1, 2), &out(2), None, Phase::Uniform);
        let h = input(1, 0).public_hash();
        let e = s.entry(&h).unwrap();
        assert_eq!(e.distinct_output_count(), 2);
        assert_eq!(e.uniform_samples(), 2);
        assert_eq!(e.non_uniform_pub_outs_to_sec_ins().count(), 1);
        assert_eq!(e.uniform_pub_outs_to_sec_ins().count(), 2);
        // first representative wins
        assert_eq!(e.witness(&out(1).hash128()).unwrap(), input(1, 0));
    }

    #[test]
    fn coverage_novelty() {
        let mut s = FuzzerState::new(16);
        let map = CoverageMap::from_hits(16, &mut [3]);
        assert!(s.record_execution(&input(0, 0), &out(0), Some(&map), Phase::NonUniform).new_coverage);
        assert!(!s.record_execution(&input(0, 1), &out(0), Some(&map), Phase::NonUniform).new_coverage);
        let twice = CoverageMap::from_hits(16, &mut [3, 3]);
        assert!(s.merge_coverage(&twice));
    }

    #[test]
    fn confirm_deterministic_leak() {
        let mut backend = InProcessBackend::from_fn(|i, io| io.stdout(i.part(SecretPartId::Explicit).unwrap()), 16);
        let mut s = FuzzerState::new(16);
        let (a, b) = (input(7, 0), input(7, 1));
        s.record_execution(&a, &out(0), None, Phase::NonUniform);
        let rec = s.record_execution(&b, &out(1), None, Phase::NonUniform);
        assert!(rec.is_violation_candidate());
        let pair = [(&a, out(0).hash128()), (&b, out(1).hash128())];
        assert!(confirm_violation(&mut s, &mut backend, rec.public_hash, pair).unwrap());
        assert_eq!(s.violations().len(), 1);
        // idempotent
        assert!(confirm_violation(&mut s, &mut backend, rec.public_hash, pair).unwrap());
        assert_eq!(s.violations().len(), 1);
        s.check_invariants().unwrap();
    }

    #[test]
    fn confirm_rejects_nondeterminism() {
        let clock = AtomicU64::new(0);
        let mut backend = InProcessBackend::from_fn(
            move |_, io| io.stdout(&clock.fetch_add(1, Ordering::Relaxed).to_le_bytes()),
            16,
        );
        let mut s = FuzzerState::new(16);
        let (a, b) = (input(7, 0), input(7, 1));
        let o1 = backend.run_output(&a);
        let o2 = backend.run_output(&b);
        s.record_execution(&a, &o1, None, Phase::NonUniform);
        let rec = s.record_execution(&b, &o2, None, Phase::NonUniform);
        let pair = [(&a, o1.hash128()), (&b, o2.hash128())];
        assert!(!confirm_violation(&mut s, &mut backend, rec.public_hash, pair).unwrap());
        assert!(s.violations().is_empty());
        assert_eq!(s.entry(&rec.public_hash).unwrap().distinct_output_count(), 0);
        // excluded outputs no longer count when seen again
        let again = s.record_execution(&b, &o2, None, Phase::NonUniform);
        assert!(!again.new_distinct_output);
    }

    #[test]
    fn selection_schedule() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = FuzzerState::new(16);
        assert!(matches!(s.select_next(&mut rng), Err(Error::EmptyCorpus)));
        s.add_to_corpus(input(0, 0));
        for _ in 0..1000 {
            assert_eq!(s.select_next(&mut rng).unwrap(), Selection::Main(0));
        }
        s.record_execution(&input(0, 0), &out(0), None, Phase::NonUniform);
        s.record_execution(&input(0, 1), &out(1), None, Phase::NonUniform);
        s.register_violation(input(0, 0).public_hash(), input(0, 0));
        let n = 10_000;
        let v = (0..n)
            .filter(|_| matches!(s.select_next(&mut rng).unwrap(), Selection::Violation(_)))
            .count();
        let frac = v as f64 / n as f64;
        assert!((0.47..=0.53).contains(&frac), "{frac}");
    }

    #[test]
    fn snapshot_round_trip() {
        let mut s = FuzzerState::new(16);
        s.record_execution(&input(1, 0), &out(1), None, Phase::NonUniform);
        s.record_execution(&input(1, 2), &out(2), None, Phase::Uniform);
        let snap = s.snapshot(2, 0.0);
        let json = serde_json::to_string(&snap).unwrap();
        assert_eq!(serde_json::from_str::<StateSnapshot>(&json).unwrap(), snap);
        assert_eq!(snap.entries[0].public, "01");
    }
}
