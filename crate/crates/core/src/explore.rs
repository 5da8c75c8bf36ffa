//! The explore stage: coverage-guided search for violations through
//! paired public-only and secret-only mutations.

use rand::Rng;

use crate::error::Result;
use crate::executor::TargetBackend;
use crate::input::{SecretPartId, StructuredInput};
use crate::mutate::{Mutator, SecretVariant};
use crate::state::{confirm_violation, FuzzerState, Phase};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ExploreRoundReport {
    pub executions: u64,
    pub new_coverage_inputs: u64,
    pub new_violations: u64,
}

impl std::ops::AddAssign for ExploreRoundReport {
    fn add_assign(&mut self, o: Self) {
        self.executions += o.executions;
        self.new_coverage_inputs += o.new_coverage_inputs;
        self.new_violations += o.new_violations;
    }
}

/// The three inputs executed in one round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundPlan {
    /// Public part mutated, secrets as in the base.
    pub public_only: StructuredInput,
    /// Secrets mutated, public as in the base.
    pub secret_only: StructuredInput,
    /// Fresh public and secret mutation of the base.
    pub both: StructuredInput,
    pub secret_variant: SecretVariant,
}

/// Builds a round's inputs from `base`. `probed` tells whether the probe
/// variant already ran on this base; memory parts are probed on the first
/// round and then with probability 1/2.
pub fn plan_round<R: Rng + ?Sized>(
    mutator: &Mutator,
    base: &StructuredInput,
    probed: bool,
    uniform_public: bool,
    splice: Option<&[u8]>,
    rng: &mut R,
) -> RoundPlan {
    let mutate_public = |rng: &mut R| {
        if uniform_public {
            mutator.resample_public(base, rng)
        } else {
            mutator.mutate_public(base, splice, rng)
        }
    };
    let public_only = mutate_public(rng);

    let has_memory = base.part(SecretPartId::Stack).is_some() || base.part(SecretPartId::Heap).is_some();
    let variant = if has_memory && (!probed || rng.gen_bool(0.5)) {
        SecretVariant::Probe
    } else {
        SecretVariant::Havoc
    };
    let secret_only = mutator.mutate_secret(base, variant, rng);

    // step 4 uses the opposite probe assignment so both patterns occur
    let paired = match variant {
        SecretVariant::Probe => SecretVariant::ProbeSwapped,
        v => v,
    };
    let both = mutator.mutate_secret(&mutate_public(rng), paired, rng);
    RoundPlan {
        public_only,
        secret_only,
        both,
        secret_variant: variant,
    }
}

/// Executes `input`, records it, keeps it if it found new coverage and
/// confirms it as a violation if it produced a second distinct output.
pub fn execute_and_record<B: TargetBackend + ?Sized>(
    state: &mut FuzzerState,
    backend: &mut B,
    input: &StructuredInput,
) -> Result<ExploreRoundReport> {
    let mut report = ExploreRoundReport {
        executions: 1,
        ..Default::default()
    };
    let result = backend.run(input)?;
    let rec = state.record_execution(input, &result.output, Some(&result.coverage), Phase::NonUniform);
    if rec.new_coverage {
        state.add_to_corpus(input.clone());
        report.new_coverage_inputs += 1;
    }
    if rec.is_violation_candidate() {
        let entry = state.entry(&rec.public_hash).expect("just recorded");
        let other = entry
            .distinct_outputs()
            .copied()
            .find(|h| *h != rec.output_hash && entry.secret_input_for_public_output(h).is_some());
        if let Some(other) = other {
            let witness = entry.witness(&other).expect("representative kept");
            let before = backend.executions();
            let confirmed = confirm_violation(
                state,
                backend,
                rec.public_hash,
                [(&witness, other), (input, rec.output_hash)],
            )?;
            report.executions += backend.executions() - before;
            if confirmed {
                log::info!("violation confirmed for public input {}", rec.public_hash);
                report.new_violations += 1;
            }
        }
    }
    Ok(report)
}

/// One explore round on the main corpus entry at `index`.
pub fn explore_round<B: TargetBackend + ?Sized, R: Rng + ?Sized>(
    state: &mut FuzzerState,
    backend: &mut B,
    mutator: &Mutator,
    index: usize,
    force_uniform_public: bool,
    rng: &mut R,
) -> Result<ExploreRoundReport> {
    let mut base = state.corpus[index].input.clone();
    let probed = state.corpus[index].probed;
    if force_uniform_public {
        if let Some(p) = state.random_public(rng) {
            base.public = p.to_vec();
        }
    }
    let splice_from = (state.corpus.len() > 1).then(|| rng.gen_range(0..state.corpus.len()));
    let splice = splice_from.map(|i| state.corpus[i].input.public.clone());
    let plan = plan_round(mutator, &base, probed, force_uniform_public, splice.as_deref(), rng);
    if plan.secret_variant == SecretVariant::Probe {
        state.corpus[index].probed = true;
    }

    let mut report = ExploreRoundReport::default();
    for input in [&plan.public_only, &plan.secret_only, &plan.both] {
        report += execute_and_record(state, backend, input)?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::executor::InProcessBackend;
    use crate::targets;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn steps_are_never_merged() {
        let m = Mutator::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let base = StructuredInput::new(vec![1, 2, 3])
            .with_part(SecretPartId::Explicit, vec![4, 5])
            .with_part(SecretPartId::Stack, vec![6]);
        for i in 0..2000 {
            let plan = plan_round(&m, &base, i % 2 == 0, i % 3 == 0, Some(&[9, 9]), &mut rng);
            assert_eq!(plan.public_only.secrets(), base.secrets());
            assert_eq!(plan.secret_only.public, base.public);
            assert_eq!(plan.both.present_parts(), base.present_parts());
        }
    }

    #[test]
    fn first_round_probes_memory_parts() {
        let m = Mutator::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let base = StructuredInput::new(vec![1]).with_part(SecretPartId::Heap, vec![0]);
        let plan = plan_round(&m, &base, false, false, None, &mut rng);
        assert_eq!(plan.secret_variant, SecretVariant::Probe);
        assert_eq!(plan.secret_only.heap_secret, Some(vec![0x55]));
        assert_eq!(plan.both.heap_secret, Some(vec![0xAA]));
        let only_explicit = StructuredInput::new(vec![1]).with_part(SecretPartId::Explicit, vec![0]);
        assert_eq!(plan_round(&m, &only_explicit, false, false, None, &mut rng).secret_variant, SecretVariant::Havoc);
    }

    #[test]
    fn retained_secret_reaches_branch() {
        // if (secret == 1) { if (public < 3) 0 else 1 } else 0
        let mut b = InProcessBackend::from_fn(
            |i, io| {
                let s = i.part(SecretPartId::Explicit).unwrap().first().copied().unwrap_or(0);
                let p = i.public.first().copied().unwrap_or(0);
                let r = u8::from(s == 1 && p >= 3);
                io.hit(u64::from(s == 1) * 2 + u64::from(r));
                io.stdout(&[r]);
            },
            1 << 16,
        );
        let mut state = FuzzerState::new(1 << 16);
        let seed = StructuredInput::new(vec![0]).with_part(SecretPartId::Explicit, vec![1]);
        execute_and_record(&mut state, &mut b, &seed).unwrap();
        state.add_to_corpus(seed);
        let m = Mutator::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut reached = false;
        for _ in 0..200 {
            explore_round(&mut state, &mut b, &m, 0, false, &mut rng).unwrap();
            reached |= state.map.values().any(|e| e.distinct_outputs().count() > 0 && e.knows_output(&crate::executor::OutputData::new(vec![1], vec![]).hash128()));
            if reached {
                break;
            }
        }
        assert!(reached);
    }

    #[test]
    fn padding_leak_probe_finds_violation() {
        let t = targets::lookup("padding-leak").unwrap();
        let mut b = t.backend(1 << 16);
        let mut state = FuzzerState::new(1 << 16);
        let seed = StructuredInput::new(vec![1]).with_part(SecretPartId::Stack, vec![0]);
        execute_and_record(&mut state, &mut b, &seed).unwrap();
        state.add_to_corpus(seed);
        let m = Mutator::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let r = explore_round(&mut state, &mut b, &m, 0, false, &mut rng).unwrap();
        assert!(r.new_violations >= 1);
        state.check_invariants().unwrap();
    }

    #[test]
    fn constant_target_never_violates() {
        let t = targets::lookup("constant").unwrap();
        let mut b = t.backend(1 << 16);
        let mut state = FuzzerState::new(1 << 16);
        let seed = StructuredInput::new(vec![0; 16]).with_part(SecretPartId::Explicit, vec![0; 16]);
        execute_and_record(&mut state, &mut b, &seed).unwrap();
        state.add_to_corpus(seed);
        let m = Mutator::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100_000 {
            let idx = rng.gen_range(0..state.corpus.len());
            let r = explore_round(&mut state, &mut b, &m, idx, false, &mut rng).unwrap();
            assert_eq!(r.new_violations, 0);
        }
        assert!(state.violations().is_empty());
    }
}
