use std::path::PathBuf;

use thiserror::Error;

use crate::input::{BitCoordinate, SecretPartId};

/// Errors raised while decoding the on-disk input container.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum FormatError {
    #[error("container too short: need {needed} bytes at offset {offset}, have {available}")]
    Truncated {
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("bad magic {0:02x?}, expected \"NIFZ\"")]
    BadMagic([u8; 4]),
    #[error("unsupported container version {0}")]
    UnsupportedVersion(u8),
    #[error("presence mask {0:#04x} has reserved bits set")]
    ReservedMaskBits(u8),
    #[error("{0} trailing bytes after last part")]
    TrailingBytes(usize),
    #[error("{part} part is present but empty")]
    EmptyMemoryPart { part: SecretPartId },
    #[error("{part} part is {len} bytes, above the {max} byte limit")]
    PartTooLarge {
        part: &'static str,
        len: usize,
        max: usize,
    },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Format(#[from] FormatError),

    #[error("bit coordinate {coord} out of range for a {bits}-bit part")]
    BitOutOfRange { coord: BitCoordinate, bits: usize },

    #[error("secret part {0} is not present in this input")]
    MissingPart(SecretPartId),

    #[error("cannot shrink {part} from {current_bits} to {requested_bits} bits")]
    ShrinkRequested {
        part: SecretPartId,
        current_bits: usize,
        requested_bits: usize,
    },

    #[error("main corpus is empty; a campaign needs at least one seed")]
    EmptyCorpus,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("target not found: {}", .0.display())]
    TargetNotFound(PathBuf),

    #[error("failed to spawn target {}: {source}", path.display())]
    Spawn {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("shared memory setup failed: {0}")]
    SharedMemory(std::io::Error),

    #[error("resident set {rss_mb} MiB exceeds the {limit_mb} MiB budget")]
    ResourceLimit { rss_mb: u64, limit_mb: u64 },

    #[error("target baseline output is not stable")]
    UnstableBaseline,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
