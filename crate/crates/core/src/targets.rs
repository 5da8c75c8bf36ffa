//! Built-in in-process targets.
//!
//! The leaking targets replicate the constructed benchmark programs
//! (direct copies, bulk memory disclosures, small conditional leaks) at a
//! size that runs in seconds. Uninitialised stack and heap memory is
//! simulated by tiling the corresponding secret part over a fixed-size
//! region, which is what the native harness does before the target runs.

use std::sync::Arc;

use crate::executor::{InProcessBackend, TargetIo};
use crate::input::{SecretPartId, StructuredInput};

pub type RunFn = fn(&StructuredInput, &mut TargetIo);

pub struct BuiltinTarget {
    pub name: &'static str,
    pub description: &'static str,
    pub parts: &'static [SecretPartId],
    pub leaks: bool,
    /// Replica-specific seed, used when no seed files are supplied.
    pub seed: Option<fn() -> StructuredInput>,
    pub run: RunFn,
}

impl BuiltinTarget {
    pub fn backend(&self, map_size: usize) -> InProcessBackend {
        InProcessBackend::new(Arc::new(self.run), map_size)
    }
}

impl std::fmt::Debug for BuiltinTarget {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BuiltinTarget").field("name", &self.name).finish_non_exhaustive()
    }
}

use SecretPartId::{Explicit, Heap, Stack};

pub static BUILTIN_TARGETS: &[BuiltinTarget] = &[
    BuiltinTarget {
        name: "identity",
        description: "prints the explicit secret unchanged",
        parts: &[Explicit],
        leaks: true,
        seed: None,
        run: identity,
    },
    BuiltinTarget {
        name: "bitwise-not",
        description: "prints the bitwise complement of the explicit secret",
        parts: &[Explicit],
        leaks: true,
        seed: None,
        run: bitwise_not,
    },
    BuiltinTarget {
        name: "and-mask",
        description: "public == 0 ? secret & 0b01001000 : 0",
        parts: &[Explicit],
        leaks: true,
        seed: Some(|| StructuredInput::new(vec![0]).with_part(Explicit, vec![0])),
        run: and_mask,
    },
    BuiltinTarget {
        name: "target-func",
        description: "low % 4 == 0 ? high % 4 : low % 4 (public low, secret high)",
        parts: &[Explicit],
        leaks: true,
        seed: Some(|| StructuredInput::new(vec![1]).with_part(Explicit, vec![0])),
        run: target_func,
    },
    BuiltinTarget {
        name: "small-secret",
        description: "public % 10 == 0 ? (secret < 0xFFFF ? 0 : 1) : 101, 32-bit secret",
        parts: &[Explicit],
        leaks: true,
        seed: Some(|| StructuredInput::new(vec![0]).with_part(Explicit, vec![0; 4])),
        run: small_secret,
    },
    BuiltinTarget {
        name: "password",
        description: "prints granted/denied after comparing the public guess with the secret password",
        parts: &[Explicit],
        leaks: true,
        seed: Some(|| StructuredInput::new(b"hunter2".to_vec()).with_part(Explicit, b"hunter2".to_vec())),
        run: password,
    },
    BuiltinTarget {
        name: "padding-leak",
        description: "copies a 24-byte struct with 4 uninitialised padding bytes to output",
        parts: &[Stack],
        leaks: true,
        seed: None,
        run: padding_leak,
    },
    BuiltinTarget {
        name: "explicit-701",
        description: "public[0] == 1 discloses the first 701 bits of the explicit secret",
        parts: &[Explicit],
        leaks: true,
        seed: Some(|| StructuredInput::new(vec![0; 4]).with_part(Explicit, vec![0; EXPLICIT_701_BYTES])),
        run: explicit_701,
    },
    BuiltinTarget {
        name: "stack-2048",
        description: "public[0] == 1 discloses 256 bytes of uninitialised stack",
        parts: &[Stack],
        leaks: true,
        seed: None,
        run: stack_2048,
    },
    BuiltinTarget {
        name: "heap-1024",
        description: "public[0] == 1 discloses 128 bytes of an uninitialised heap buffer",
        parts: &[Heap],
        leaks: true,
        seed: None,
        run: heap_1024,
    },
    BuiltinTarget {
        name: "stack-probe-8bit",
        description: "public[0] == 1 discloses one uninitialised stack byte",
        parts: &[Stack],
        leaks: true,
        seed: None,
        run: stack_probe_8bit,
    },
    BuiltinTarget {
        name: "seven-mask",
        description: "secret & 7 == 7 ? 4 : secret & 3",
        parts: &[Explicit],
        leaks: true,
        seed: Some(|| StructuredInput::new(vec![0]).with_part(Explicit, vec![0])),
        run: seven_mask,
    },
    BuiltinTarget {
        name: "constant",
        description: "always prints the same line",
        parts: &[Explicit],
        leaks: false,
        seed: None,
        run: constant,
    },
    BuiltinTarget {
        name: "echo-public",
        description: "prints the public input",
        parts: &[Explicit],
        leaks: false,
        seed: None,
        run: echo_public,
    },
    BuiltinTarget {
        name: "public-branches",
        description: "classifies the public input through nested branches",
        parts: &[Explicit, Stack],
        leaks: false,
        seed: None,
        run: public_branches,
    },
    BuiltinTarget {
        name: "secret-sink",
        description: "branches on the secret but only prints public-derived data",
        parts: &[Explicit, Heap],
        leaks: false,
        seed: None,
        run: secret_sink,
    },
    BuiltinTarget {
        name: "initialised-struct",
        description: "padding-leak with every byte of the struct written before output",
        parts: &[Stack, Heap],
        leaks: false,
        seed: None,
        run: initialised_struct,
    },
];

pub fn lookup(name: &str) -> Option<&'static BuiltinTarget> {
    BUILTIN_TARGETS.iter().find(|t| t.name == name)
}

pub const EXPLICIT_701_BITS: usize = 701;
pub const EXPLICIT_701_BYTES: usize = EXPLICIT_701_BITS.div_ceil(8);
pub const STACK_2048_BYTES: usize = 256;
pub const HEAP_1024_BYTES: usize = 128;
/// Offset of the disclosed window inside the simulated heap block.
pub const HEAP_1024_OFFSET: usize = 64;
/// Size of simulated uninitialised memory regions.
pub const MEMORY_REGION: usize = 4096;

fn first_byte(bytes: &[u8]) -> u8 {
    bytes.first().copied().unwrap_or(0)
}

fn explicit(input: &StructuredInput) -> &[u8] {
    input.part(Explicit).unwrap_or(&[])
}

/// Contents of simulated memory after the harness painted it with `pattern`.
pub fn painted(pattern: Option<&[u8]>, len: usize) -> Vec<u8> {
    match pattern {
        Some(p) if !p.is_empty() => p.iter().copied().cycle().take(len).collect(),
        _ => vec![0; len],
    }
}

fn gate(input: &StructuredInput, io: &mut TargetIo) -> bool {
    let open = first_byte(&input.public) == 1;
    io.hit(u64::from(open));
    open
}

fn identity(input: &StructuredInput, io: &mut TargetIo) {
    io.hit(1);
    io.stdout(explicit(input));
}

fn bitwise_not(input: &StructuredInput, io: &mut TargetIo) {
    io.hit(1);
    let out: Vec<u8> = explicit(input).iter().map(|b| !b).collect();
    io.stdout(&out);
}

fn and_mask(input: &StructuredInput, io: &mut TargetIo) {
    if input.public.iter().all(|b| *b == 0) {
        io.hit(1);
        io.stdout(&[first_byte(explicit(input)) & 0b0100_1000]);
    } else {
        io.hit(2);
        io.stdout(&[0]);
    }
}

pub fn target_func_value(low: u8, high: u8) -> u8 {
    if low % 4 == 0 {
        high % 4
    } else {
        low % 4
    }
}

fn target_func(input: &StructuredInput, io: &mut TargetIo) {
    let low = first_byte(&input.public);
    io.hit(u64::from(low % 4 == 0));
    io.stdout(&[target_func_value(low, first_byte(explicit(input)))]);
}

pub fn small_secret_value(public: u8, secret: u32) -> u8 {
    if public % 10 == 0 {
        if secret < 0xFFFF {
            0
        } else {
            1
        }
    } else {
        101
    }
}

fn small_secret(input: &StructuredInput, io: &mut TargetIo) {
    let mut word = [0u8; 4];
    let s = explicit(input);
    let n = s.len().min(4);
    word[..n].copy_from_slice(&s[..n]);
    let public = first_byte(&input.public);
    io.hit(u64::from(public % 10 == 0));
    io.stdout(&[small_secret_value(public, u32::from_le_bytes(word))]);
}

fn password(input: &StructuredInput, io: &mut TargetIo) {
    if input.public.as_slice() == explicit(input) {
        io.hit(1);
        io.stdout(b"granted\n");
    } else {
        io.hit(2);
        io.stdout(b"denied\n");
    }
}

/// `struct { void *sp; int flags; /* 4 bytes padding */ size_t size; }`
fn padding_leak(input: &StructuredInput, io: &mut TargetIo) {
    let mut frame = painted(input.part(Stack), 24);
    if gate(input, io) {
        frame[0..8].copy_from_slice(&0x7fff_0000_1000u64.to_le_bytes());
        frame[8..12].copy_from_slice(&2u32.to_le_bytes());
        frame[16..24].copy_from_slice(&8192u64.to_le_bytes());
        io.stdout(&frame);
    } else {
        io.stdout(b"EINVAL\n");
    }
}

fn explicit_701(input: &StructuredInput, io: &mut TargetIo) {
    if gate(input, io) {
        let mut out = vec![0u8; EXPLICIT_701_BYTES];
        let s = explicit(input);
        let n = s.len().min(EXPLICIT_701_BYTES);
        out[..n].copy_from_slice(&s[..n]);
        out[EXPLICIT_701_BYTES - 1] &= (1u8 << (EXPLICIT_701_BITS % 8)) - 1;
        io.stdout(&out);
    } else {
        io.stdout(b"no\n");
    }
}

fn stack_2048(input: &StructuredInput, io: &mut TargetIo) {
    if gate(input, io) {
        let region = painted(input.part(Stack), MEMORY_REGION);
        io.stdout(&region[..STACK_2048_BYTES]);
    } else {
        io.stdout(b"no\n");
    }
}

fn heap_1024(input: &StructuredInput, io: &mut TargetIo) {
    if gate(input, io) {
        let block = painted(input.part(Heap), MEMORY_REGION);
        io.stdout(&block[HEAP_1024_OFFSET..HEAP_1024_OFFSET + HEAP_1024_BYTES]);
    } else {
        io.stdout(b"no\n");
    }
}

fn stack_probe_8bit(input: &StructuredInput, io: &mut TargetIo) {
    if gate(input, io) {
        let frame = painted(input.part(Stack), 16);
        io.stdout(&[frame[5]]);
    } else {
        io.stdout(&[0xFF, 0xFF]);
    }
}

pub fn seven_mask_value(secret: u8) -> u8 {
    if secret & 0b111 == 0b111 {
        0b100
    } else {
        secret & 0b11
    }
}

fn seven_mask(input: &StructuredInput, io: &mut TargetIo) {
    let s = first_byte(explicit(input));
    io.hit(u64::from(s & 7 == 7));
    io.stdout(&[seven_mask_value(s)]);
}

fn constant(_: &StructuredInput, io: &mut TargetIo) {
    io.hit(1);
    io.stdout(b"hello\n");
}

fn echo_public(input: &StructuredInput, io: &mut TargetIo) {
    io.hit(1);
    io.stdout(&input.public);
}

fn public_branches(input: &StructuredInput, io: &mut TargetIo) {
    let p = &input.public;
    let class = match (p.len(), first_byte(p)) {
        (0, _) => "empty",
        (_, b'A'..=b'Z') => "upper",
        (_, b'a'..=b'z') => "lower",
        (_, b'0'..=b'9') => "digit",
        (n, _) if n > 32 => "long",
        _ => "other",
    };
    io.hit(class.len() as u64 * 31 + p.len().min(64) as u64);
    io.stdout(class.as_bytes());
    io.stdout(&(p.iter().map(|b| u32::from(*b)).sum::<u32>()).to_le_bytes());
}

fn secret_sink(input: &StructuredInput, io: &mut TargetIo) {
    let s = explicit(input);
    let heap = painted(input.part(Heap), 64);
    let mut acc = 0u64;
    for (i, b) in s.iter().chain(&heap).enumerate() {
        if *b > 0x80 {
            io.hit(100 + i as u64 % 32);
        }
        acc = acc.rotate_left(7) ^ u64::from(*b);
    }
    // the accumulator is discarded; only public data is printed
    std::hint::black_box(acc);
    io.stdout(&(input.public.len() as u32).to_le_bytes());
    io.stderr(if first_byte(&input.public) & 1 == 0 { b"even" } else { b"odd" });
}

fn initialised_struct(input: &StructuredInput, io: &mut TargetIo) {
    let mut frame = painted(input.part(Stack), 24);
    let heap = painted(input.part(Heap), 8);
    if gate(input, io) {
        frame.fill(0);
        frame[0..8].copy_from_slice(&0x7fff_0000_1000u64.to_le_bytes());
        frame[8..12].copy_from_slice(&2u32.to_le_bytes());
        frame[16..24].copy_from_slice(&8192u64.to_le_bytes());
        io.stdout(&frame);
    } else {
        let mut buf = heap;
        buf.copy_from_slice(b"EINVAL\n\0");
        io.stdout(&buf);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::executor::TargetBackend;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn names_are_unique() {
        let mut names: Vec<_> = BUILTIN_TARGETS.iter().map(|t| t.name).collect();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), BUILTIN_TARGETS.len());
        assert_eq!(BUILTIN_TARGETS.iter().filter(|t| !t.leaks).count(), 5);
    }

    #[test]
    fn worked_example_baseline() {
        let t = lookup("and-mask").unwrap();
        let mut b = t.backend(1 << 16);
        let out = b.run(&StructuredInput::new(vec![0]).with_part(Explicit, vec![0])).unwrap().output;
        assert_eq!(out.stdout, vec![0b0000_0000]);
        let out = b.run(&StructuredInput::new(vec![0]).with_part(Explicit, vec![0xFF])).unwrap().output;
        assert_eq!(out.stdout, vec![0b0100_1000]);
    }

    #[test]
    fn padding_bytes_reflect_stack_pattern() {
        let t = lookup("padding-leak").unwrap();
        let mut b = t.backend(1 << 16);
        let run = |b: &mut InProcessBackend, p: u8| {
            b.run(&StructuredInput::new(vec![1]).with_part(Stack, vec![p])).unwrap().output.stdout
        };
        let a = run(&mut b, 0xAA);
        assert_eq!(&a[12..16], &[0xAA; 4]);
        let c = run(&mut b, 0x55);
        assert_ne!(a, c);
        assert_eq!(a[..12], c[..12]);
        assert_eq!(a[16..], c[16..]);
    }

    #[test]
    fn seven_mask_has_five_outputs() {
        let outs: std::collections::BTreeSet<u8> = (0..=255u8).map(seven_mask_value).collect();
        assert_eq!(outs.into_iter().collect::<Vec<_>>(), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn painting_tiles_pattern() {
        assert_eq!(painted(Some(&[0x12, 0x34]), 5), vec![0x12, 0x34, 0x12, 0x34, 0x12]);
        assert_eq!(painted(None, 3), vec![0; 3]);
    }

    #[test]
    fn every_target_is_pure() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for t in BUILTIN_TARGETS {
            let mut b = t.backend(1 << 16);
            for _ in 0..100 {
                let mut input = StructuredInput::new((0..rng.gen_range(0..8)).map(|_| rng.gen()).collect());
                for part in t.parts {
                    let len = rng.gen_range(1..12);
                    input.set_part(*part, Some((0..len).map(|_| rng.gen()).collect()));
                }
                let first = b.run(&input).unwrap();
                for _ in 0..99 {
                    let again = b.run(&input).unwrap();
                    assert_eq!(again.output, first.output, "{}", t.name);
                    assert_eq!(again.coverage, first.coverage, "{}", t.name);
                }
            }
        }
    }

    #[test]
    fn non_leaking_targets_ignore_secrets() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for t in BUILTIN_TARGETS.iter().filter(|t| !t.leaks) {
            let mut b = t.backend(1 << 16);
            for _ in 0..200 {
                let mut input = StructuredInput::new((0..rng.gen_range(0..4)).map(|_| rng.gen()).collect());
                for part in t.parts {
                    input.set_part(*part, Some(vec![0; rng.gen_range(1..8)]));
                }
                let base = b.run(&input).unwrap().output;
                let other = b.run(&input.uniform_sample_secrets(&mut rng)).unwrap().output;
                assert_eq!(base, other, "{}", t.name);
            }
        }
    }
}
