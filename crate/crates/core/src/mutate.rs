//! Havoc-style mutation operators for the public and secret parts.

use rand::Rng;

use crate::input::{SecretPartId, StructuredInput, HEAP_PROBE, STACK_PROBE};

/// Largest block inserted, deleted or duplicated by a single operator.
const MAX_BLOCK: usize = 32;
/// Upper bound on stacked operators per havoc call.
pub const MAX_STACK: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HavocOp {
    FlipBit,
    RandomByte,
    DeleteBlock,
    InsertBlock,
    DuplicateBlock,
    Splice,
}

impl HavocOp {
    pub const ALL: [HavocOp; 6] = [
        Self::FlipBit,
        Self::RandomByte,
        Self::DeleteBlock,
        Self::InsertBlock,
        Self::DuplicateBlock,
        Self::Splice,
    ];
}

/// Which flavour of secret mutation to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SecretVariant {
    Havoc,
    /// stack := [0xAA], heap := [0x55]
    Probe,
    /// stack := [0x55], heap := [0xAA]
    ProbeSwapped,
}

#[derive(Debug, Clone)]
pub struct Mutator {
    pub max_part_size: usize,
}

impl Default for Mutator {
    fn default() -> Self {
        Self {
            max_part_size: crate::input::DEFAULT_MAX_PART_SIZE,
        }
    }
}

/// Stacking depth in `1..=MAX_STACK`, log-uniformly distributed.
pub fn stacking_depth<R: Rng + ?Sized>(rng: &mut R) -> usize {
    let exp = rng.gen_range(0.0..((MAX_STACK + 1) as f64).log2());
    (exp.exp2().floor() as usize).clamp(1, MAX_STACK)
}

impl Mutator {
    pub fn new(max_part_size: usize) -> Self {
        Self { max_part_size }
    }

    /// Applies one operator in place. Operators that cannot apply to the
    /// current length (for instance deleting from a minimum-length buffer)
    /// fall back to an insertion or a byte overwrite.
    pub fn apply_op<R: Rng + ?Sized>(
        &self,
        op: HavocOp,
        buf: &mut Vec<u8>,
        min_len: usize,
        splice: Option<&[u8]>,
        rng: &mut R,
    ) {
        let can_grow = buf.len() < self.max_part_size;
        match op {
            HavocOp::FlipBit if !buf.is_empty() => {
                let bit = rng.gen_range(0..buf.len() * 8);
                buf[bit / 8] ^= 1 << (bit % 8);
            }
            HavocOp::RandomByte if !buf.is_empty() => {
                let pos = rng.gen_range(0..buf.len());
                buf[pos] ^= rng.gen_range(1..=255u8);
            }
            HavocOp::DeleteBlock if buf.len() > min_len => {
                let max = (buf.len() - min_len).min(MAX_BLOCK);
                let n = rng.gen_range(1..=max);
                let pos = rng.gen_range(0..=buf.len() - n);
                buf.drain(pos..pos + n);
            }
            HavocOp::DuplicateBlock if !buf.is_empty() && can_grow => {
                let n = rng.gen_range(1..=buf.len().min(MAX_BLOCK)).min(self.max_part_size - buf.len());
                let from = rng.gen_range(0..=buf.len() - n);
                let to = rng.gen_range(0..=buf.len());
                let block: Vec<u8> = buf[from..from + n].to_vec();
                buf.splice(to..to, block);
            }
            HavocOp::Splice if splice.is_some_and(|s| !s.is_empty()) => {
                let src = splice.expect("checked");
                let cut = rng.gen_range(0..=buf.len());
                let from = rng.gen_range(0..src.len());
                buf.truncate(cut);
                let room = self.max_part_size.saturating_sub(buf.len());
                buf.extend(src[from..].iter().take(room));
                if buf.len() < min_len {
                    buf.resize(min_len, 0);
                }
            }
            _ if can_grow => {
                let n = rng.gen_range(1..=MAX_BLOCK).min(self.max_part_size - buf.len());
                let pos = rng.gen_range(0..=buf.len());
                let block: Vec<u8> = if rng.gen_bool(0.5) {
                    vec![rng.gen(); n]
                } else {
                    (0..n).map(|_| rng.gen()).collect()
                };
                buf.splice(pos..pos, block);
            }
            _ if !buf.is_empty() => {
                let pos = rng.gen_range(0..buf.len());
                buf[pos] ^= rng.gen_range(1..=255u8);
            }
            _ => {}
        }
    }

    /// Stacks `stacking_depth` random operators on `buf`.
    pub fn havoc<R: Rng + ?Sized>(&self, buf: &mut Vec<u8>, min_len: usize, splice: Option<&[u8]>, rng: &mut R) {
        for _ in 0..stacking_depth(rng) {
            let op = HavocOp::ALL[rng.gen_range(0..HavocOp::ALL.len())];
            self.apply_op(op, buf, min_len, splice, rng);
        }
    }

    /// Havoc on the public part only. `splice` is another corpus entry's
    /// public part, if one is available.
    pub fn mutate_public<R: Rng + ?Sized>(
        &self,
        input: &StructuredInput,
        splice: Option<&[u8]>,
        rng: &mut R,
    ) -> StructuredInput {
        let mut out = input.clone();
        // a stacked havoc can cancel itself out; retry a few times
        for _ in 0..4 {
            self.havoc(&mut out.public, 0, splice, rng);
            if out.public != input.public {
                break;
            }
        }
        out
    }

    /// Replaces each public byte with a uniform random byte, keeping the
    /// length. Used when public inputs must be drawn uniformly.
    pub fn resample_public<R: Rng + ?Sized>(&self, input: &StructuredInput, rng: &mut R) -> StructuredInput {
        let mut out = input.clone();
        rng.fill_bytes(&mut out.public);
        out
    }

    /// Mutates the secret parts only. The explicit part always receives
    /// havoc; stack and heap parts are either probed or havoc-mutated with
    /// a one-byte floor.
    pub fn mutate_secret<R: Rng + ?Sized>(
        &self,
        input: &StructuredInput,
        variant: SecretVariant,
        rng: &mut R,
    ) -> StructuredInput {
        let mut out = input.clone();
        for part in SecretPartId::ALL {
            let probe = match (variant, part) {
                (_, SecretPartId::Explicit) | (SecretVariant::Havoc, _) => None,
                (SecretVariant::Probe, SecretPartId::Stack) | (SecretVariant::ProbeSwapped, SecretPartId::Heap) => {
                    Some(STACK_PROBE)
                }
                _ => Some(HEAP_PROBE),
            };
            let min_len = usize::from(part.is_memory_fill());
            if let Some(buf) = out.part_mut(part) {
                match probe {
                    Some(byte) => *buf = vec![byte],
                    None => self.havoc(buf, min_len, None, rng),
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn full_input() -> StructuredInput {
        StructuredInput::new(vec![0])
            .with_part(SecretPartId::Explicit, vec![1, 2, 3])
            .with_part(SecretPartId::Stack, vec![0])
            .with_part(SecretPartId::Heap, vec![0])
    }

    #[test]
    fn single_bitflip_on_zero_byte() {
        let m = Mutator::default();
        let mut r = rng(0);
        let mut seen = HashSet::new();
        for _ in 0..64 {
            let mut buf = vec![0u8];
            m.apply_op(HavocOp::FlipBit, &mut buf, 0, None, &mut r);
            assert_eq!(buf[0].count_ones(), 1);
            seen.insert(buf[0]);
        }
        assert!(seen.contains(&0x01));
    }

    #[test]
    fn public_mutation_keeps_secrets() {
        let m = Mutator::default();
        let mut r = rng(1);
        let input = full_input();
        for _ in 0..1000 {
            let out = m.mutate_public(&input, Some(&[9, 9, 9]), &mut r);
            assert_eq!(out.secrets(), input.secrets());
        }
    }

    #[test]
    fn empty_public_can_grow() {
        let m = Mutator::default();
        let mut r = rng(2);
        let input = StructuredInput::new(vec![]).with_part(SecretPartId::Explicit, vec![1]);
        assert!((0..100).any(|_| !m.mutate_public(&input, None, &mut r).public.is_empty()));
    }

    #[test]
    fn public_mutation_diversity() {
        let m = Mutator::default();
        let mut r = rng(3);
        let input = StructuredInput::new(vec![0]).with_part(SecretPartId::Explicit, vec![1]);
        let distinct: HashSet<Vec<u8>> = (0..10_000).map(|_| m.mutate_public(&input, None, &mut r).public).collect();
        assert!(distinct.len() >= 2);
    }

    #[test]
    fn probe_variant_paints_memory_parts() {
        let m = Mutator::default();
        let mut r = rng(4);
        let input = full_input();
        let probed = m.mutate_secret(&input, SecretVariant::Probe, &mut r);
        assert_eq!(probed.stack_secret, Some(vec![0xAA]));
        assert_eq!(probed.heap_secret, Some(vec![0x55]));
        assert_eq!(probed.public, input.public);
        let swapped = m.mutate_secret(&input, SecretVariant::ProbeSwapped, &mut r);
        assert_eq!(swapped.stack_secret, Some(vec![0x55]));
        assert_eq!(swapped.heap_secret, Some(vec![0xAA]));
    }

    #[test]
    fn secret_mutation_keeps_public_and_presence() {
        let m = Mutator::default();
        let mut r = rng(5);
        let input = StructuredInput::new(vec![7]).with_part(SecretPartId::Explicit, vec![1]);
        for _ in 0..1000 {
            let out = m.mutate_secret(&input, SecretVariant::Havoc, &mut r);
            assert_eq!(out.public, vec![7]);
            assert!(out.stack_secret.is_none() && out.heap_secret.is_none());
        }
        let heap_only = StructuredInput::new(vec![]).with_part(SecretPartId::Heap, vec![3]);
        for variant in [SecretVariant::Havoc, SecretVariant::Probe] {
            let out = m.mutate_secret(&heap_only, variant, &mut r);
            assert!(out.explicit_secret.is_none() && out.stack_secret.is_none());
            assert!(!out.heap_secret.unwrap().is_empty());
        }
    }

    #[test]
    fn stacking_depth_is_log_uniform() {
        let mut r = rng(6);
        let mut counts = [0usize; MAX_STACK + 1];
        for _ in 0..100_000 {
            counts[stacking_depth(&mut r)] += 1;
        }
        assert_eq!(counts[0], 0);
        assert!(counts[1..].iter().all(|c| *c > 0));
        // smaller depths are strictly more likely
        assert!(counts[1] > counts[2] && counts[2] > counts[4] && counts[4] > counts[8]);
    }

    #[test]
    fn growth_respects_part_cap() {
        let m = Mutator::new(8);
        let mut r = rng(7);
        let mut buf = vec![0u8; 8];
        for _ in 0..1000 {
            m.havoc(&mut buf, 0, Some(&[1; 64]), &mut r);
            assert!(buf.len() <= 8);
        }
    }

    #[test]
    fn resample_public_keeps_length() {
        let m = Mutator::default();
        let mut r = rng(8);
        let input = full_input();
        let out = m.resample_public(&input, &mut r);
        assert_eq!(out.public.len(), 1);
        assert_eq!(out.secrets(), input.secrets());
    }

    proptest! {
        #[test]
        fn memory_parts_never_become_empty(seed in any::<u64>(), len in 1usize..8) {
            let m = Mutator::default();
            let mut r = rng(seed);
            let input = StructuredInput::new(vec![1, 2])
                .with_part(SecretPartId::Stack, vec![0; len])
                .with_part(SecretPartId::Heap, vec![0; len]);
            let mut cur = input;
            for _ in 0..50 {
                cur = m.mutate_secret(&cur, SecretVariant::Havoc, &mut r);
                prop_assert!(!cur.stack_secret.as_ref().unwrap().is_empty());
                prop_assert!(!cur.heap_secret.as_ref().unwrap().is_empty());
                prop_assert_eq!(&cur.public, &vec![1, 2]);
            }
        }
    }
}
