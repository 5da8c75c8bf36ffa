//! Coverage-guided detection and quantification of information flow from
//! secret inputs to public outputs.
//!
//! An input is a public part plus up to three secret parts. A public input
//! is a violation once two secrets produce distinct stable outputs for it.
//! Violations are then mapped bit by bit and sampled uniformly to estimate
//! leakage.
//!
//! ```
//! use nifuzz::budget::ClockMode;
//! use nifuzz::campaign::{Campaign, CampaignConfig};
//!
//! let mut config = CampaignConfig::new("builtin:target-func".parse()?, 1e6);
//! config.clock = ClockMode::Logical;
//! config.max_executions = Some(100_000);
//! let report = Campaign::new(config)?.run()?;
//! assert_eq!(report.capacity_lower_bound_bits, 2.0);
//! # Ok::<(), nifuzz::Error>(())
//! ```

pub mod bitflip;
pub mod budget;
pub mod campaign;
pub mod error;
pub mod estimators;
pub mod executor;
pub mod exploit;
pub mod explore;
pub mod hash;
pub mod input;
pub mod mutate;
pub mod report;
pub mod state;
pub mod targets;

pub use error::{Error, FormatError, Result};
pub use input::{BitCoordinate, PartSet, SecretPartId, StructuredInput};
