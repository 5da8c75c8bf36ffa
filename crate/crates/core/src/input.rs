//! The structured fuzzing input: one public part plus up to three secret
//! parts (explicit secret input, stack memory fill, heap memory fill).
//!
//! Container layout (all integers little-endian):
//!
//! ```text
//! "NIFZ" | version=0x01 | presence mask | u32 len + public bytes
//!        | [u32 len + explicit] | [u32 len + stack] | [u32 len + heap]
//! ```
//!
//! Mask bit 0 is explicit, bit 1 stack, bit 2 heap. Absent parts have no
//! length field at all.

use std::fmt;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, FormatError, Result};
use crate::hash::Hash128;

pub const CONTAINER_MAGIC: &[u8; 4] = b"NIFZ";
pub const CONTAINER_VERSION: u8 = 0x01;
pub const DEFAULT_MAX_PART_SIZE: usize = 1 << 20;

/// Fill patterns for uninitialised memory, chosen so that any byte read
/// from painted memory differs between the two probes in every bit.
pub const STACK_PROBE: u8 = 0b1010_1010;
pub const HEAP_PROBE: u8 = 0b0101_0101;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SecretPartId {
    Explicit,
    Stack,
    Heap,
}

impl SecretPartId {
    pub const ALL: [SecretPartId; 3] = [Self::Explicit, Self::Stack, Self::Heap];

    pub fn mask_bit(self) -> u8 {
        match self {
            Self::Explicit => 0b001,
            Self::Stack => 0b010,
            Self::Heap => 0b100,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Self::Explicit => 0,
            Self::Stack => 1,
            Self::Heap => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Explicit => "explicit",
            Self::Stack => "stack",
            Self::Heap => "heap",
        }
    }

    /// Stack and heap parts are repeated to fill memory, so they can never be empty.
    pub fn is_memory_fill(self) -> bool {
        !matches!(self, Self::Explicit)
    }
}

impl fmt::Display for SecretPartId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SecretPartId {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "explicit" => Ok(Self::Explicit),
            "stack" => Ok(Self::Stack),
            "heap" => Ok(Self::Heap),
            other => Err(format!("unknown secret part '{other}'")),
        }
    }
}

/// Which secret parts a campaign declares, in container mask encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct PartSet(u8);

impl PartSet {
    pub const EMPTY: PartSet = PartSet(0);

    pub fn from_mask(mask: u8) -> Option<Self> {
        (mask & !0b111 == 0).then_some(Self(mask))
    }

    pub fn of(parts: &[SecretPartId]) -> Self {
        Self(parts.iter().fold(0, |m, p| m | p.mask_bit()))
    }

    pub fn mask(self) -> u8 {
        self.0
    }

    pub fn contains(self, part: SecretPartId) -> bool {
        self.0 & part.mask_bit() != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = SecretPartId> {
        SecretPartId::ALL.into_iter().filter(move |p| self.contains(*p))
    }
}

/// A single bit of a secret part. Bit 0 is the least significant bit of
/// byte 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BitCoordinate {
    pub part: SecretPartId,
    pub bit_index: usize,
}

impl BitCoordinate {
    pub fn new(part: SecretPartId, bit_index: usize) -> Self {
        Self { part, bit_index }
    }
}

impl fmt::Display for BitCoordinate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.part, self.bit_index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct StructuredInput {
    pub public: Vec<u8>,
    pub explicit_secret: Option<Vec<u8>>,
    pub stack_secret: Option<Vec<u8>>,
    pub heap_secret: Option<Vec<u8>>,
}

impl StructuredInput {
    pub fn new(public: Vec<u8>) -> Self {
        Self {
            public,
            ..Self::default()
        }
    }

    pub fn with_part(mut self, part: SecretPartId, bytes: Vec<u8>) -> Self {
        self.set_part(part, Some(bytes));
        self
    }

    pub fn part(&self, part: SecretPartId) -> Option<&[u8]> {
        self.slot(part).as_deref()
    }

    pub fn part_mut(&mut self, part: SecretPartId) -> Option<&mut Vec<u8>> {
        self.slot_mut(part).as_mut()
    }

    pub fn set_part(&mut self, part: SecretPartId, bytes: Option<Vec<u8>>) {
        *self.slot_mut(part) = bytes;
    }

    fn slot(&self, part: SecretPartId) -> &Option<Vec<u8>> {
        match part {
            SecretPartId::Explicit => &self.explicit_secret,
            SecretPartId::Stack => &self.stack_secret,
            SecretPartId::Heap => &self.heap_secret,
        }
    }

    fn slot_mut(&mut self, part: SecretPartId) -> &mut Option<Vec<u8>> {
        match part {
            SecretPartId::Explicit => &mut self.explicit_secret,
            SecretPartId::Stack => &mut self.stack_secret,
            SecretPartId::Heap => &mut self.heap_secret,
        }
    }

    pub fn present_parts(&self) -> PartSet {
        PartSet::of(
            &SecretPartId::ALL
                .into_iter()
                .filter(|p| self.part(*p).is_some())
                .collect::<Vec<_>>(),
        )
    }

    pub fn part_bits(&self, part: SecretPartId) -> Option<usize> {
        self.part(part).map(|b| b.len() * 8)
    }

    pub fn public_hash(&self) -> Hash128 {
        Hash128::of(&self.public)
    }

    pub fn secret_hash(&self) -> Hash128 {
        Hash128::of_parts(SecretPartId::ALL.map(|p| self.part(p)))
    }

    /// Copy of the secret parts only.
    pub fn secrets(&self) -> SecretParts {
        SecretParts {
            explicit_secret: self.explicit_secret.clone(),
            stack_secret: self.stack_secret.clone(),
            heap_secret: self.heap_secret.clone(),
        }
    }

    pub fn with_secrets(public: &[u8], secrets: &SecretParts) -> Self {
        Self {
            public: public.to_vec(),
            explicit_secret: secrets.explicit_secret.clone(),
            stack_secret: secrets.stack_secret.clone(),
            heap_secret: secrets.heap_secret.clone(),
        }
    }

    pub fn to_container(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(
            10 + self.public.len() + SecretPartId::ALL.iter().map(|p| self.part(*p).map_or(0, |b| b.len() + 4)).sum::<usize>(),
        );
        out.extend_from_slice(CONTAINER_MAGIC);
        out.push(CONTAINER_VERSION);
        out.push(self.present_parts().mask());
        push_chunk(&mut out, &self.public);
        for part in SecretPartId::ALL {
            if let Some(bytes) = self.part(part) {
                push_chunk(&mut out, bytes);
            }
        }
        out
    }

    pub fn from_container(bytes: &[u8]) -> Result<Self, FormatError> {
        Self::from_container_limited(bytes, u32::MAX as usize)
    }

    pub fn from_container_limited(bytes: &[u8], max_part_size: usize) -> Result<Self, FormatError> {
        let mut reader = Reader { bytes, offset: 0 };
        let magic: [u8; 4] = reader.take(4)?.try_into().expect("4 bytes");
        if &magic != CONTAINER_MAGIC {
            return Err(FormatError::BadMagic(magic));
        }
        let version = reader.take(1)?[0];
        if version != CONTAINER_VERSION {
            return Err(FormatError::UnsupportedVersion(version));
        }
        let mask = reader.take(1)?[0];
        let parts = PartSet::from_mask(mask).ok_or(FormatError::ReservedMaskBits(mask))?;

        let public = reader.chunk("public", max_part_size)?.to_vec();
        let mut input = StructuredInput::new(public);
        for part in parts.iter() {
            let payload = reader.chunk(part.as_str(), max_part_size)?;
            if payload.is_empty() && part.is_memory_fill() {
                return Err(FormatError::EmptyMemoryPart { part });
            }
            input.set_part(part, Some(payload.to_vec()));
        }
        if reader.offset != bytes.len() {
            return Err(FormatError::TrailingBytes(bytes.len() - reader.offset));
        }
        Ok(input)
    }

    /// Returns a copy with one secret bit inverted.
    pub fn flip_bit(&self, coord: BitCoordinate) -> Result<Self> {
        let mut out = self.clone();
        out.flip_bit_in_place(coord)?;
        Ok(out)
    }

    pub fn flip_bit_in_place(&mut self, coord: BitCoordinate) -> Result<()> {
        let buf = self.part_mut(coord.part).ok_or(Error::MissingPart(coord.part))?;
        let bits = buf.len() * 8;
        if coord.bit_index >= bits {
            return Err(Error::BitOutOfRange { coord, bits });
        }
        buf[coord.bit_index / 8] ^= 1 << (coord.bit_index % 8);
        Ok(())
    }

    /// Inverts every bit of one secret part.
    pub fn flip_part(&self, part: SecretPartId) -> Result<Self> {
        let mut out = self.clone();
        let buf = out.part_mut(part).ok_or(Error::MissingPart(part))?;
        buf.iter_mut().for_each(|b| *b = !*b);
        Ok(out)
    }

    /// Grows a secret part to `new_bit_length` (rounded up to whole bytes)
    /// by repeat-copying its current contents.
    pub fn extend_secret_part(&self, part: SecretPartId, new_bit_length: usize) -> Result<Self> {
        let buf = self.part(part).ok_or(Error::MissingPart(part))?;
        let current_bits = buf.len() * 8;
        if new_bit_length < current_bits {
            return Err(Error::ShrinkRequested {
                part,
                current_bits,
                requested_bits: new_bit_length,
            });
        }
        let new_len = new_bit_length.div_ceil(8);
        let mut out = self.clone();
        if new_len > buf.len() && !buf.is_empty() {
            let tiled: Vec<u8> = buf.iter().copied().cycle().take(new_len).collect();
            out.set_part(part, Some(tiled));
        }
        Ok(out)
    }

    /// Replaces every byte of every present secret part with uniformly
    /// random bytes. Lengths, presence and the public part are unchanged.
    pub fn uniform_sample_secrets<R: RngCore + ?Sized>(&self, rng: &mut R) -> Self {
        let mut out = self.clone();
        out.resample_secrets_in_place(rng);
        out
    }

    pub fn resample_secrets_in_place<R: RngCore + ?Sized>(&mut self, rng: &mut R) {
        for part in SecretPartId::ALL {
            if let Some(buf) = self.part_mut(part) {
                rng.fill_bytes(buf);
            }
        }
    }
}

fn push_chunk(out: &mut Vec<u8>, bytes: &[u8]) {
    let len = u32::try_from(bytes.len()).expect("part length exceeds u32");
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(bytes);
}

struct Reader<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        let available = self.bytes.len() - self.offset;
        if available < n {
            return Err(FormatError::Truncated {
                offset: self.offset,
                needed: n,
                available,
            });
        }
        let out = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(out)
    }

    fn chunk(&mut self, part: &'static str, max: usize) -> Result<&'a [u8], FormatError> {
        let len = u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize;
        if len > max {
            return Err(FormatError::PartTooLarge { part, len, max });
        }
        self.take(len)
    }
}

/// The secret portion of an input, kept as a representative witness for
/// an observed output.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct SecretParts {
    pub explicit_secret: Option<Vec<u8>>,
    pub stack_secret: Option<Vec<u8>>,
    pub heap_secret: Option<Vec<u8>>,
}
