//! Campaign stopping conditions and the campaign clock.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

/// How campaign time is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClockMode {
    #[default]
    Wall,
    /// One microsecond per execution. Makes time-based behaviour (budget,
    /// stats cadence, reported seconds) a pure function of the run.
    Logical,
}

pub const LOGICAL_SECONDS_PER_EXEC: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct Budget {
    start: Instant,
    clock: ClockMode,
    time_limit: Option<Duration>,
    max_executions: Option<u64>,
    stop: Arc<AtomicBool>,
}

impl Budget {
    pub fn new(clock: ClockMode, time_limit: Option<Duration>, max_executions: Option<u64>) -> Self {
        Self {
            start: Instant::now(),
            clock,
            time_limit,
            max_executions,
            stop: Arc::new(AtomicBool::new(false)),
        }
    }

    pub fn unlimited() -> Self {
        Self::new(ClockMode::Wall, None, None)
    }

    pub fn clock(&self) -> ClockMode {
        self.clock
    }

    /// Flag that ends the campaign at the next check when set.
    pub fn stop_flag(&self) -> Arc<AtomicBool> {
        Arc::clone(&self.stop)
    }

    pub fn elapsed_secs(&self, executions: u64) -> f64 {
        match self.clock {
            ClockMode::Wall => self.start.elapsed().as_secs_f64(),
            ClockMode::Logical => executions as f64 * LOGICAL_SECONDS_PER_EXEC,
        }
    }

    pub fn exhausted(&self, executions: u64) -> bool {
        if self.stop.load(Ordering::Relaxed) {
            return true;
        }
        if self.max_executions.is_some_and(|m| executions >= m) {
            return true;
        }
        self.time_limit
            .is_some_and(|t| self.elapsed_secs(executions) >= t.as_secs_f64())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logical_clock_counts_executions() {
        let b = Budget::new(ClockMode::Logical, Some(Duration::from_secs(1)), None);
        assert!(!b.exhausted(999_999));
        assert!(b.exhausted(1_000_000));
        assert_eq!(b.elapsed_secs(2_000_000), 2.0);
    }

    #[test]
    fn execution_cap_and_stop_flag() {
        let b = Budget::new(ClockMode::Wall, None, Some(10));
        assert!(!b.exhausted(9));
        assert!(b.exhausted(10));
        let u = Budget::unlimited();
        assert!(!u.exhausted(u64::MAX));
        u.stop_flag().store(true, Ordering::Relaxed);
        assert!(u.exhausted(0));
    }
}
