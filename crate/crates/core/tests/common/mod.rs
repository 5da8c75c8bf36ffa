#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Mutex;

static BUILD: Mutex<()> = Mutex::new(());

/// Compiles `tests/c/target.c` with `-D<mode>` once per test binary.
pub fn c_target(mode: &str) -> PathBuf {
    let _guard = BUILD.lock().unwrap_or_else(|e| e.into_inner());
    let out = Path::new(env!("CARGO_TARGET_TMPDIR")).join(format!("{}-{mode}", std::process::id()));
    if out.exists() {
        return out;
    }
    let src = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/c/target.c");
    let status = Command::new("cc")
        .args(["-std=c11", "-D_DEFAULT_SOURCE", "-O1", "-Wall", "-Werror", "-Wno-unused-function"])
        .arg(format!("-D{mode}"))
        .arg(&src)
        .arg("-o")
        .arg(&out)
        .status()
        .expect("cc must be installed");
    assert!(status.success(), "compiling {mode} failed");
    out
}
