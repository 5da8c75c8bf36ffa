//! On-disk campaign artifacts.
//!
//! ```text
//! <out>/stats.jsonl
//! <out>/report.json
//! <out>/state_snapshot.json
//! <out>/violations/<public-hash>/<output-hash>.bin
//! <out>/violations/<public-hash>/bitflip_map.json
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::estimators::QifReport;
use crate::state::{FuzzerState, StateSnapshot};

pub const STATS_FILE: &str = "stats.jsonl";
pub const REPORT_FILE: &str = "report.json";
pub const SNAPSHOT_FILE: &str = "state_snapshot.json";
pub const VIOLATIONS_DIR: &str = "violations";
pub const BITFLIP_MAP_FILE: &str = "bitflip_map.json";
pub const WITNESS_EXT: &str = "bin";

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes)?;
    Ok(())
}

pub fn write_report(dir: &Path, report: &QifReport) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_json(&dir.join(REPORT_FILE), report)
}

pub fn read_report(path: &Path) -> Result<QifReport> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

pub fn write_snapshot(dir: &Path, snapshot: &StateSnapshot) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_json(&dir.join(SNAPSHOT_FILE), snapshot)
}

pub fn read_snapshot(path: &Path) -> Result<StateSnapshot> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

/// Dumps one container file per retained witness and the bit map of every
/// violation. Returns the violation directories written.
pub fn write_violations(dir: &Path, state: &FuzzerState) -> Result<Vec<PathBuf>> {
    let root = dir.join(VIOLATIONS_DIR);
    fs::create_dir_all(&root)?;
    let mut written = Vec::new();
    for v in state.violations() {
        let Some(entry) = state.entry(v) else { continue };
        let vdir = root.join(v.to_hex());
        fs::create_dir_all(&vdir)?;
        for out in entry.distinct_outputs() {
            if let Some(w) = entry.witness(out) {
                fs::write(vdir.join(format!("{}.{WITNESS_EXT}", out.to_hex())), w.to_container())?;
            }
        }
        if let Some(map) = entry.bitflip_map() {
            write_json(&vdir.join(BITFLIP_MAP_FILE), map)?;
        }
        written.push(vdir);
    }
    Ok(written)
}

/// Witness files of one violation directory, sorted by name.
pub fn witness_files(vdir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(vdir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == WITNESS_EXT))
        .collect();
    files.sort();
    Ok(files)
}
