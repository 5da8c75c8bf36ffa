//! Quantification of a confirmed violation: influence detection, bit
//! mapping, stabilisation, secret extension and uniform sampling.

use std::collections::{BTreeMap, BTreeSet};

use log::{debug, warn};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::bitflip::BitflipMap;
use crate::budget::Budget;
use crate::error::Result;
use crate::executor::{OutputData, TargetBackend};
use crate::hash::Hash128;
use crate::input::{BitCoordinate, SecretPartId, StructuredInput};
use crate::state::{FuzzerState, Phase};

/// Influence count at which the logarithmic mapping algorithm takes over.
pub const FAST_THRESHOLD: usize = 1000;
/// Executions per uniform sampling round.
pub const UNIFORM_SAMPLES: u64 = 1 << 16;
/// Random subsets tried per fraction in each stabilisation sweep.
pub const SUBSETS_PER_FRACTION: usize = 8;
/// Subset sizes as fractions of the map, after the all-entries test.
pub const SUBSET_FRACTIONS: [(usize, usize); 4] = [(3, 4), (1, 2), (1, 4), (1, 8)];
/// Safety bound on stabilisation sweeps; each non-final sweep removes at
/// least one output bit, so this is never reached on sane maps.
const MAX_SWEEPS: usize = 256;

/// Runs one input and returns its public output.
pub type Exec<'a> = dyn FnMut(&StructuredInput) -> Result<OutputData> + 'a;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InfluenceSet {
    /// Sorted by (part, bit_index); position in this list is the ordinal
    /// used by the fast algorithm.
    pub coords: Vec<BitCoordinate>,
    /// Output bits flipped by inverting each whole part, for parts whose
    /// output kept its length.
    pub part_flips: BTreeMap<SecretPartId, BTreeSet<usize>>,
}

impl InfluenceSet {
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn parts(&self) -> BTreeSet<SecretPartId> {
        self.coords.iter().map(|c| c.part).collect()
    }
}

fn flipped_bits(base: &OutputData, other: &OutputData) -> Option<BTreeSet<usize>> {
    let d = OutputData::diff_bits(base, other);
    (!d.length_mismatch).then(|| d.flipped.into_iter().collect())
}

/// Inverts every bit of each present part in turn; parts that change the
/// output contribute all their bits.
pub fn find_influences(exec: &mut Exec<'_>, input: &StructuredInput, baseline: &OutputData) -> Result<InfluenceSet> {
    let mut set = InfluenceSet::default();
    for part in SecretPartId::ALL {
        let Some(bits) = input.part_bits(part) else {
            continue;
        };
        if bits == 0 {
            continue;
        }
        let out = exec(&input.flip_part(part)?)?;
        if out != *baseline {
            set.coords.extend((0..bits).map(|b| BitCoordinate::new(part, b)));
            if let Some(flips) = flipped_bits(baseline, &out) {
                set.part_flips.insert(part, flips);
            }
        }
    }
    Ok(set)
}

/// Flips one influence bit at a time. Output bits reached from more than
/// one input bit are removed from every entry.
pub fn bitflip_map_slow(exec: &mut Exec<'_>, input: &StructuredInput, influences: &InfluenceSet) -> Result<BitflipMap> {
    let original = exec(input)?;
    let mut seen: BTreeSet<usize> = BTreeSet::new();
    let mut map: BTreeMap<BitCoordinate, BTreeSet<usize>> = BTreeMap::new();
    for &coord in &influences.coords {
        let out = exec(&input.flip_bit(coord)?)?;
        // a length change is not a bit-linear mapping
        let Some(flips) = flipped_bits(&original, &out) else {
            continue;
        };
        let many_to_one: BTreeSet<usize> = seen.intersection(&flips).copied().collect();
        if !many_to_one.is_empty() {
            for v in map.values_mut() {
                v.retain(|o| !many_to_one.contains(o));
            }
        }
        seen.extend(flips.iter().copied());
        map.insert(coord, flips.difference(&many_to_one).copied().collect());
    }
    Ok(map.into_iter().collect())
}

/// One iteration of the fast algorithm's outer loop.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FastRound {
    pub bit: u32,
    pub bit_value: usize,
    pub mutated_input: StructuredInput,
    pub output: OutputData,
    pub output_flips: Vec<usize>,
    /// Accumulated code per output bit after this round (non-zero only).
    pub output_to_input: BTreeMap<usize, usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FastTrace {
    pub rounds: Vec<FastRound>,
}

pub fn fast_rounds(n: usize) -> u32 {
    if n <= 1 {
        0
    } else {
        usize::BITS - (n - 1).leading_zeros()
    }
}

/// Logarithmic mapping: round `bit` flips every influence whose ordinal
/// has bit `bit - 1` set, so each output bit accumulates the binary code
/// of the input ordinal that drives it.
///
/// Ordinal 0 has code 0 and is invisible to the rounds. Output bits that
/// flipped when its whole part was inverted but never flipped in a round
/// are attributed to it.
pub fn bitflip_map_fast(exec: &mut Exec<'_>, input: &StructuredInput, influences: &InfluenceSet) -> Result<BitflipMap> {
    bitflip_map_fast_traced(exec, input, influences).map(|(m, _)| m)
}

pub fn bitflip_map_fast_traced(
    exec: &mut Exec<'_>,
    input: &StructuredInput,
    influences: &InfluenceSet,
) -> Result<(BitflipMap, FastTrace)> {
    let n = influences.len();
    let mut trace = FastTrace::default();
    if n == 0 {
        return Ok((BitflipMap::new(), trace));
    }
    let original = exec(input)?;
    let mut codes: BTreeMap<usize, usize> = BTreeMap::new();
    for bit in 1..=fast_rounds(n) {
        let bit_value = 1usize << (bit - 1);
        let mut mutated = input.clone();
        for (index, coord) in influences.coords.iter().enumerate() {
            if (index / bit_value) % 2 == 1 {
                mutated.flip_bit_in_place(*coord)?;
            }
        }
        let output = exec(&mutated)?;
        let flips = OutputData::diff_bits(&original, &output).flipped;
        for &o in &flips {
            *codes.entry(o).or_insert(0) += bit_value;
        }
        trace.rounds.push(FastRound {
            bit,
            bit_value,
            mutated_input: mutated,
            output,
            output_flips: flips,
            output_to_input: codes.clone(),
        });
    }

    let mut map: BTreeMap<BitCoordinate, BTreeSet<usize>> = BTreeMap::new();
    for (&out_bit, &code) in &codes {
        if code > 0 && code < n {
            map.entry(influences.coords[code]).or_default().insert(out_bit);
        }
    }
    let first = influences.coords[0];
    if let Some(part_flips) = influences.part_flips.get(&first.part) {
        for o in part_flips {
            if !codes.contains_key(o) {
                map.entry(first).or_default().insert(*o);
            }
        }
    }
    Ok((map.into_iter().collect(), trace))
}

/// Repeatedly flips combinations of mapped bits and removes predictions
/// the target does not honour, until a whole sweep removes nothing.
pub fn stabilize_map<R: Rng + ?Sized>(
    exec: &mut Exec<'_>,
    input: &StructuredInput,
    map: BitflipMap,
    rng: &mut R,
) -> Result<BitflipMap> {
    let mut map = map;
    if map.is_empty() {
        return Ok(map);
    }
    map.remove_outputs(&map.shared_outputs());
    let original = exec(input)?;

    for sweep in 0..MAX_SWEEPS {
        let mut changed = false;
        let mut subsets: Vec<Vec<BitCoordinate>> = vec![map.coords().collect()];
        for (num, den) in SUBSET_FRACTIONS {
            for _ in 0..SUBSETS_PER_FRACTION {
                let coords: Vec<BitCoordinate> = map.coords().collect();
                let k = (coords.len() * num).div_ceil(den).max(1);
                subsets.push(coords.choose_multiple(rng, k.min(coords.len())).copied().collect());
            }
        }
        for subset in subsets {
            // entries may have been dropped earlier in this sweep
            let subset: Vec<BitCoordinate> = subset.into_iter().filter(|c| map.get(c).is_some()).collect();
            if subset.is_empty() {
                continue;
            }
            let mut mutated = input.clone();
            for c in &subset {
                mutated.flip_bit_in_place(*c)?;
            }
            let out = exec(&mutated)?;
            let Some(flipped) = flipped_bits(&original, &out) else {
                for c in &subset {
                    changed |= map.remove_entry(c);
                }
                continue;
            };
            let predicted = map.predicted_flips(&subset);
            let unpredicted: BTreeSet<usize> = flipped.difference(&predicted).copied().collect();
            changed |= map.remove_outputs(&unpredicted);
            let missing: BTreeSet<usize> = predicted.difference(&flipped).copied().collect();
            if !missing.is_empty() {
                for c in &subset {
                    changed |= map.remove_from_entry(c, &missing);
                }
            }
        }
        if !changed || map.is_empty() {
            debug!("map stable after {} sweeps, {} entries", sweep + 1, map.len());
            break;
        }
    }
    Ok(map)
}

/// Result of mapping one violation input.
#[derive(Debug, Clone)]
pub struct MappingResult {
    pub map: BitflipMap,
    pub influences: usize,
    /// Input the final map refers to; extended if extension applied.
    pub input: StructuredInput,
    pub extended: bool,
}

fn map_once<R: Rng + ?Sized>(
    exec: &mut Exec<'_>,
    input: &StructuredInput,
    rng: &mut R,
) -> Result<Option<(BitflipMap, usize)>> {
    let baseline = exec(input)?;
    for _ in 1..crate::state::CONFIRM_RUNS {
        if exec(input)? != baseline {
            return Ok(None);
        }
    }
    let influences = find_influences(exec, input, &baseline)?;
    let map = if influences.len() < FAST_THRESHOLD {
        bitflip_map_slow(exec, input, &influences)?
    } else {
        bitflip_map_fast(exec, input, &influences)?
    };
    let map = stabilize_map(exec, input, map, rng)?;
    Ok(Some((map, influences.len())))
}

/// The complete mapping pipeline, including one extension pass.
/// Returns `None` when the baseline output is not stable.
pub fn map_violation<R: Rng + ?Sized>(
    exec: &mut Exec<'_>,
    input: &StructuredInput,
    max_part_size: usize,
    rng: &mut R,
) -> Result<Option<MappingResult>> {
    let Some((map, influences)) = map_once(exec, input, rng)? else {
        return Ok(None);
    };
    let mut extended = input.clone();
    for (part, bits) in map.extension_by_part() {
        let current = extended.part_bits(part).unwrap_or(0);
        let target = (current + bits).min(max_part_size * 8);
        if bits > 0 && target > current {
            extended = extended.extend_secret_part(part, target)?;
        }
    }
    if extended == *input {
        return Ok(Some(MappingResult {
            map,
            influences,
            input: input.clone(),
            extended: false,
        }));
    }
    match map_once(exec, &extended, rng)? {
        Some((map, influences)) => Ok(Some(MappingResult {
            map,
            influences,
            input: extended,
            extended: true,
        })),
        None => {
            warn!("extended input is unstable; keeping the unextended map");
            Ok(Some(MappingResult {
                map,
                influences,
                input: input.clone(),
                extended: false,
            }))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExploitReport {
    Mapped { entries: usize, influences: usize, extended: bool },
    UnstableBaseline,
    Sampled { samples: u64 },
}

/// One exploit visit to a violation: bit mapping on the first visit,
/// a uniform sampling round on every later one.
pub fn exploit_pass<B: TargetBackend + ?Sized, R: Rng + ?Sized>(
    state: &mut FuzzerState,
    backend: &mut B,
    violation: Hash128,
    max_part_size: usize,
    budget: &Budget,
    rng: &mut R,
) -> Result<ExploitReport> {
    let entry = state.entry(&violation).expect("violation has a map entry");
    let Some(input) = entry.violation_input().cloned() else {
        unreachable!("registered violations carry a baseline input");
    };
    if entry.bitflips_done() {
        let samples = uniform_sampling_round(state, backend, &input, budget, rng)?;
        return Ok(ExploitReport::Sampled { samples });
    }

    let mut exec = |i: &StructuredInput| -> Result<OutputData> {
        let out = backend.run(i)?.output;
        state.record_execution(i, &out, None, Phase::NonUniform);
        Ok(out)
    };
    let result = map_violation(&mut exec, &input, max_part_size, rng)?;
    let entry = state.entry_mut(&violation).expect("violation has a map entry").exploit_mut();
    entry.bitflips_done = true;
    Ok(match result {
        Some(r) => {
            let report = ExploitReport::Mapped {
                entries: r.map.len(),
                influences: r.influences,
                extended: r.extended,
            };
            entry.bitflip_map = Some(r.map);
            entry.violation_input = Some(r.input);
            report
        }
        None => {
            entry.bitflip_map = Some(BitflipMap::new());
            ExploitReport::UnstableBaseline
        }
    })
}

/// Runs up to `UNIFORM_SAMPLES` executions with uniformly resampled
/// secrets and the violation's public part, recording each as Uniform.
pub fn uniform_sampling_round<B: TargetBackend + ?Sized, R: Rng + ?Sized>(
    state: &mut FuzzerState,
    backend: &mut B,
    input: &StructuredInput,
    budget: &Budget,
    rng: &mut R,
) -> Result<u64> {
    let mut sample = input.clone();
    let mut done = 0;
    while done < UNIFORM_SAMPLES {
        if budget.exhausted(backend.executions()) {
            break;
        }
        sample.resample_secrets_in_place(rng);
        let out = backend.run(&sample)?.output;
        state.record_execution(&sample, &out, None, Phase::Uniform);
        done += 1;
    }
    Ok(done)
}
