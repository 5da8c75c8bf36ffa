use std::sync::Arc;

use super::{CoverageMap, ExecutionResult, ExitKind, OutputData, TargetBackend, DEFAULT_STREAM_CAP};
use crate::error::Result;
use crate::input::StructuredInput;

/// A registered in-process target. It must be a pure function of its input.
pub type TargetFn = dyn Fn(&StructuredInput, &mut TargetIo) + Send + Sync;

/// Capture buffers handed to an in-process target for one execution.
#[derive(Debug)]
pub struct TargetIo {
    stdout: Vec<u8>,
    stderr: Vec<u8>,
    hits: Vec<u32>,
    map_size: usize,
    stream_cap: usize,
    truncated: bool,
    exit_kind: ExitKind,
}

impl TargetIo {
    fn new(map_size: usize, stream_cap: usize) -> Self {
        Self {
            stdout: Vec::new(),
            stderr: Vec::new(),
            hits: Vec::new(),
            map_size,
            stream_cap,
            truncated: false,
            exit_kind: ExitKind::Normal,
        }
    }

    fn reset(&mut self) {
        self.stdout.clear();
        self.stderr.clear();
        self.hits.clear();
        self.truncated = false;
        self.exit_kind = ExitKind::Normal;
    }

    pub fn stdout(&mut self, bytes: &[u8]) {
        Self::append(&mut self.stdout, bytes, self.stream_cap, &mut self.truncated);
    }

    pub fn stderr(&mut self, bytes: &[u8]) {
        Self::append(&mut self.stderr, bytes, self.stream_cap, &mut self.truncated);
    }

    fn append(buf: &mut Vec<u8>, bytes: &[u8], cap: usize, truncated: &mut bool) {
        let room = cap.saturating_sub(buf.len());
        if bytes.len() > room {
            *truncated = true;
        }
        buf.extend_from_slice(&bytes[..bytes.len().min(room)]);
    }

    /// Records a synthetic branch id. Ids are hashed into the map.
    pub fn hit(&mut self, branch: u64) {
        if self.map_size == 0 {
            return;
        }
        let mixed = xxhash_rust::xxh3::xxh3_64(&branch.to_le_bytes());
        self.hits.push((mixed % self.map_size as u64) as u32);
    }

    /// Marks this execution as a crash.
    pub fn crash(&mut self) {
        self.exit_kind = ExitKind::Crash;
    }
}

/// Executes a Rust closure directly. Used for benchmark replicas and tests.
pub struct InProcessBackend {
    target: Arc<TargetFn>,
    io: TargetIo,
    executions: u64,
}

impl InProcessBackend {
    pub fn new(target: Arc<TargetFn>, map_size: usize) -> Self {
        Self {
            target,
            io: TargetIo::new(map_size, DEFAULT_STREAM_CAP),
            executions: 0,
        }
    }

    pub fn from_fn<F>(f: F, map_size: usize) -> Self
    where
        F: Fn(&StructuredInput, &mut TargetIo) + Send + Sync + 'static,
    {
        Self::new(Arc::new(f), map_size)
    }

    pub fn with_stream_cap(mut self, cap: usize) -> Self {
        self.io.stream_cap = cap;
        self
    }

    /// Runs the target and returns only the output, skipping coverage
    /// map construction.
    pub fn run_output(&mut self, input: &StructuredInput) -> OutputData {
        self.io.reset();
        (self.target)(input, &mut self.io);
        self.executions += 1;
        OutputData {
            stdout: self.io.stdout.clone(),
            stderr: self.io.stderr.clone(),
            truncated: self.io.truncated,
        }
    }
}

impl TargetBackend for InProcessBackend {
    fn run(&mut self, input: &StructuredInput) -> Result<ExecutionResult> {
        let output = self.run_output(input);
        let coverage = CoverageMap::from_hits(self.io.map_size, &mut self.io.hits);
        Ok(ExecutionResult {
            output,
            coverage,
            exit_kind: self.io.exit_kind,
        })
    }

    fn executions(&self) -> u64 {
        self.executions
    }

    fn map_size(&self) -> usize {
        self.io.map_size
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::executor::Stability;
    use crate::input::SecretPartId;
    use std::sync::atomic::{AtomicU64, Ordering};

    #[test]
    fn identity_on_public() {
        let mut b = InProcessBackend::from_fn(|i, io| io.stdout(&i.public), 1 << 16);
        let r = b.run(&StructuredInput::new(vec![5])).unwrap();
        assert_eq!(r.output, OutputData::new(vec![5], vec![]));
        assert_eq!(r.coverage.len(), 1 << 16);
        assert_eq!(r.exit_kind, ExitKind::Normal);
        assert_eq!(b.executions(), 1);
    }

    #[test]
    fn coverage_is_cleared_between_runs() {
        let mut b = InProcessBackend::from_fn(
            |i, io| {
                if i.public.first() == Some(&1) {
                    io.hit(1);
                    io.hit(2);
                }
            },
            1 << 16,
        );
        assert_eq!(b.run(&StructuredInput::new(vec![1])).unwrap().coverage.nonzero().len(), 2);
        assert!(b.run(&StructuredInput::new(vec![0])).unwrap().coverage.is_all_zero());
    }

    #[test]
    fn streams_are_capped() {
        let mut b = InProcessBackend::from_fn(|_, io| io.stdout(&[7; 100]), 16).with_stream_cap(10);
        let out = b.run(&StructuredInput::new(vec![])).unwrap().output;
        assert_eq!(out.stdout.len(), 10);
        assert!(out.truncated);
    }

    #[test]
    fn stability_detects_counter() {
        let mut echo = InProcessBackend::from_fn(|i, io| io.stdout(&i.public), 16);
        let input = StructuredInput::new(vec![1, 2]).with_part(SecretPartId::Explicit, vec![3]);
        assert_eq!(
            echo.check_stability(&input, 3).unwrap(),
            Stability::Stable(OutputData::new(vec![1, 2], vec![]))
        );

        let counter = AtomicU64::new(0);
        let mut noisy = InProcessBackend::from_fn(
            move |_, io| io.stdout(&counter.fetch_add(1, Ordering::Relaxed).to_le_bytes()),
            16,
        );
        assert_eq!(noisy.check_stability(&input, 2).unwrap(), Stability::Unstable);
    }
}
