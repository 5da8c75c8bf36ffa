//! Spawn-per-execution backend for native targets.
//!
//! Protocol: the input is written in container format to a scratch file
//! whose path is `argv[1]`. Coverage counters live in a SysV shared memory
//! segment whose id is in `NIFUZZ_SHM_ID` and whose size is in
//! `NIFUZZ_MAP_SIZE`. Stdout and stderr are captured through pipes.

use std::io::Read;
use std::os::unix::process::ExitStatusExt;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::thread::JoinHandle;
use std::time::Duration;

use wait_timeout::ChildExt;

use super::{CoverageMap, ExecutionResult, ExitKind, OutputData, TargetBackend, DEFAULT_STREAM_CAP};
use crate::error::{Error, Result};
use crate::input::StructuredInput;

pub const ENV_SHM_ID: &str = "NIFUZZ_SHM_ID";
pub const ENV_MAP_SIZE: &str = "NIFUZZ_MAP_SIZE";

/// An owned SysV shared memory segment, removed on drop.
struct SharedMap {
    id: libc::c_int,
    ptr: *mut u8,
    size: usize,
}

impl SharedMap {
    fn new(size: usize) -> Result<Self> {
        // SAFETY: plain syscalls; the returned pointer is checked before use.
        unsafe {
            let id = libc::shmget(libc::IPC_PRIVATE, size.max(1), libc::IPC_CREAT | libc::IPC_EXCL | 0o600);
            if id < 0 {
                return Err(Error::SharedMemory(std::io::Error::last_os_error()));
            }
            let ptr = libc::shmat(id, std::ptr::null(), 0);
            if ptr as isize == -1 {
                let err = std::io::Error::last_os_error();
                libc::shmctl(id, libc::IPC_RMID, std::ptr::null_mut());
                return Err(Error::SharedMemory(err));
            }
            Ok(Self {
                id,
                ptr: ptr.cast(),
                size,
            })
        }
    }

    fn as_mut_slice(&mut self) -> &mut [u8] {
        // SAFETY: the mapping is at least `size` bytes and lives as long as self.
        unsafe { std::slice::from_raw_parts_mut(self.ptr, self.size) }
    }
}

impl Drop for SharedMap {
    fn drop(&mut self) {
        // SAFETY: ptr and id came from a successful shmat/shmget.
        unsafe {
            libc::shmdt(self.ptr.cast());
            libc::shmctl(self.id, libc::IPC_RMID, std::ptr::null_mut());
        }
    }
}

pub struct SubprocessBackend {
    program: PathBuf,
    timeout: Duration,
    stream_cap: usize,
    map: SharedMap,
    scratch: tempfile::TempDir,
    input_path: PathBuf,
    executions: u64,
}

impl SubprocessBackend {
    pub fn new(program: impl AsRef<Path>, map_size: usize, timeout: Duration) -> Result<Self> {
        let program = program.as_ref().to_path_buf();
        if !program.is_file() {
            return Err(Error::TargetNotFound(program));
        }
        let scratch = tempfile::Builder::new().prefix("nifuzz-").tempdir()?;
        let input_path = scratch.path().join("cur_input");
        Ok(Self {
            program,
            timeout,
            stream_cap: DEFAULT_STREAM_CAP,
            map: SharedMap::new(map_size)?,
            scratch,
            input_path,
            executions: 0,
        })
    }

    pub fn with_stream_cap(mut self, cap: usize) -> Self {
        self.stream_cap = cap;
        self
    }

    pub fn shm_id(&self) -> i32 {
        self.map.id
    }

    pub fn scratch_dir(&self) -> &Path {
        self.scratch.path()
    }

    fn spawn(&self) -> Result<Child> {
        Command::new(&self.program)
            .arg(&self.input_path)
            .env(ENV_SHM_ID, self.map.id.to_string())
            .env(ENV_MAP_SIZE, self.map.size.to_string())
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|source| Error::Spawn {
                path: self.program.clone(),
                source,
            })
    }
}

/// Reads up to `cap` bytes, then drains and discards the rest so the
/// child never blocks on a full pipe.
fn capture<R: Read + Send + 'static>(mut pipe: R, cap: usize) -> JoinHandle<(Vec<u8>, bool)> {
    std::thread::spawn(move || {
        let mut kept = Vec::new();
        let mut truncated = false;
        let mut chunk = [0u8; 8192];
        loop {
            match pipe.read(&mut chunk) {
                Ok(0) => break,
                Ok(n) => {
                    let room = cap.saturating_sub(kept.len());
                    if n > room {
                        truncated = true;
                    }
                    kept.extend_from_slice(&chunk[..n.min(room)]);
                }
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => continue,
                Err(_) => break,
            }
        }
        (kept, truncated)
    })
}

impl TargetBackend for SubprocessBackend {
    fn run(&mut self, input: &StructuredInput) -> Result<ExecutionResult> {
        std::fs::write(&self.input_path, input.to_container())?;
        self.map.as_mut_slice().fill(0);

        let mut child = self.spawn()?;
        self.executions += 1;
        let out = capture(child.stdout.take().expect("piped"), self.stream_cap);
        let err = capture(child.stderr.take().expect("piped"), self.stream_cap);

        let exit_kind = match child.wait_timeout(self.timeout)? {
            Some(status) if status.signal().is_some() => ExitKind::Crash,
            Some(_) => ExitKind::Normal,
            None => {
                let _ = child.kill();
                let _ = child.wait();
                ExitKind::Timeout
            }
        };
        let (stdout, t1) = out.join().unwrap_or_default();
        let (stderr, t2) = err.join().unwrap_or_default();
        let coverage = CoverageMap::from_dense(self.map.as_mut_slice());
        Ok(ExecutionResult {
            output: OutputData {
                stdout,
                stderr,
                truncated: t1 || t2,
            },
            coverage,
            exit_kind,
        })
    }

    fn executions(&self) -> u64 {
        self.executions
    }

    fn map_size(&self) -> usize {
        self.map.size
    }
}
