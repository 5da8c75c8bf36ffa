//! Campaign orchestration: seeding, the explore/exploit loop, statistics
//! and final artifacts.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::budget::{Budget, ClockMode};
use crate::error::{Error, Result};
use crate::estimators::{LeakSummary, QifReport, DEFAULT_MIN_HITS};
use crate::executor::{InProcessBackend, SubprocessBackend, TargetBackend, DEFAULT_MAP_SIZE};
use crate::exploit::exploit_pass;
use crate::explore::{execute_and_record, explore_round};
use crate::input::{PartSet, SecretPartId, StructuredInput, DEFAULT_MAX_PART_SIZE};
use crate::mutate::Mutator;
use crate::report;
use crate::state::{FuzzerState, Selection};
use crate::targets;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(1);
pub const DEFAULT_STATS_INTERVAL_SECS: f64 = 5.0;
/// Loop iterations between resident-set checks.
const RSS_CHECK_EVERY: u64 = 1 << 12;

/// Sizes of the generic seed used when neither seed files nor a
/// target-specific seed exist.
const GENERIC_PUBLIC_LEN: usize = 16;
const GENERIC_EXPLICIT_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TargetSpec {
    Builtin(String),
    Subprocess(PathBuf),
    /// A backend supplied by the caller through `Campaign::with_backend`.
    Custom(String),
}

impl FromStr for TargetSpec {
    type Err = Error;

    /// `builtin:<name>` or a bare built-in name selects an in-process
    /// target; anything else is a path to an executable.
    fn from_str(s: &str) -> Result<Self> {
        if let Some(name) = s.strip_prefix("builtin:") {
            return match targets::lookup(name) {
                Some(_) => Ok(Self::Builtin(name.to_owned())),
                None => Err(Error::Config(format!("unknown built-in target `{name}`"))),
            };
        }
        if targets::lookup(s).is_some() && !Path::new(s).exists() {
            return Ok(Self::Builtin(s.to_owned()));
        }
        Ok(Self::Subprocess(PathBuf::from(s)))
    }
}

impl std::fmt::Display for TargetSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Builtin(n) => write!(f, "builtin:{n}"),
            Self::Subprocess(p) => write!(f, "{}", p.display()),
            Self::Custom(n) => write!(f, "custom:{n}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CampaignConfig {
    pub target: TargetSpec,
    pub seeds_dir: Option<PathBuf>,
    /// Seeds in addition to those read from `seeds_dir`.
    pub seeds: Vec<StructuredInput>,
    /// Declared secret parts. `None` takes a built-in target's parts, or
    /// all three for subprocess targets.
    pub parts: Option<PartSet>,
    pub budget_secs: f64,
    pub timeout: Duration,
    pub map_size: usize,
    pub rng_seed: u64,
    pub force_uniform_public: bool,
    pub min_hits: u64,
    pub out_dir: Option<PathBuf>,
    pub max_executions: Option<u64>,
    pub clock: ClockMode,
    pub max_part_size: usize,
    pub stats_interval_secs: f64,
    pub max_rss_mb: Option<u64>,
}

impl CampaignConfig {
    pub fn new(target: TargetSpec, budget_secs: f64) -> Self {
        Self {
            target,
            seeds_dir: None,
            seeds: Vec::new(),
            parts: None,
            budget_secs,
            timeout: DEFAULT_TIMEOUT,
            map_size: DEFAULT_MAP_SIZE,
            rng_seed: 0,
            force_uniform_public: false,
            min_hits: DEFAULT_MIN_HITS,
            out_dir: None,
            max_executions: None,
            clock: ClockMode::Wall,
            max_part_size: DEFAULT_MAX_PART_SIZE,
            stats_interval_secs: DEFAULT_STATS_INTERVAL_SECS,
            max_rss_mb: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_owned()));
        if !(self.budget_secs.is_finite() && self.budget_secs > 0.0) {
            return bad("time budget must be a positive number of seconds");
        }
        if self.parts.is_some_and(PartSet::is_empty) {
            return bad("at least one secret part must be declared");
        }
        if self.map_size == 0 || self.map_size > 1 << 24 {
            return bad("map size must be between 1 and 16777216");
        }
        if self.timeout.is_zero() {
            return bad("execution timeout must be positive");
        }
        if self.min_hits == 0 {
            return bad("min hits must be at least 1");
        }
        if self.max_part_size == 0 {
            return bad("max part size must be positive");
        }
        if !(self.stats_interval_secs.is_finite() && self.stats_interval_secs > 0.0) {
            return bad("stats interval must be positive");
        }
        Ok(())
    }
}

/// One line of the statistics stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsLine {
    #[serde(flatten)]
    pub report: QifReport,
    /// Unix time in wall-clock mode, campaign seconds in logical mode.
    pub timestamp: f64,
}

/// Builds the execution backend for `spec`.
pub fn open_backend(spec: &TargetSpec, map_size: usize, timeout: Duration) -> Result<Box<dyn TargetBackend>> {
    Ok(match spec {
        TargetSpec::Builtin(name) => {
            let t = targets::lookup(name).ok_or_else(|| Error::Config(format!("unknown built-in target `{name}`")))?;
            Box::new(t.backend(map_size))
        }
        TargetSpec::Subprocess(path) => Box::new(SubprocessBackend::new(path, map_size, timeout)?),
        TargetSpec::Custom(name) => {
            return Err(Error::Config(format!("custom target `{name}` needs a caller-supplied backend")))
        }
    })
}

/// Reads every file in `dir` (sorted by name) as a container.
pub fn read_seed_dir(dir: &Path, max_part_size: usize) -> Result<Vec<StructuredInput>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::Config(format!("cannot read seed directory {}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let bytes = std::fs::read(p)?;
            StructuredInput::from_container_limited(&bytes, max_part_size)
                .map_err(|e| Error::Config(format!("seed {}: {e}", p.display())))
        })
        .collect()
}

/// Adds missing declared parts and drops undeclared ones.
pub fn conform_to_parts(mut input: StructuredInput, parts: PartSet) -> StructuredInput {
    for part in SecretPartId::ALL {
        if !parts.contains(part) {
            input.set_part(part, None);
        } else if input.part(part).is_none() {
            let fill = match part {
                SecretPartId::Explicit => vec![0; GENERIC_EXPLICIT_LEN],
                SecretPartId::Stack | SecretPartId::Heap => vec![0],
            };
            input.set_part(part, Some(fill));
        }
    }
    input
}

pub struct Campaign {
    config: CampaignConfig,
    parts: PartSet,
    backend: Box<dyn TargetBackend>,
    state: FuzzerState,
    mutator: Mutator,
    rng: ChaCha8Rng,
    budget: Budget,
    stats: Vec<StatsLine>,
    sink: Option<BufWriter<File>>,
    last_stats_secs: f64,
    iterations: u64,
}

impl Campaign {
    pub fn new(config: CampaignConfig) -> Result<Self> {
        config.validate()?;
        let backend = open_backend(&config.target, config.map_size, config.timeout)?;
        Self::with_backend(config, backend)
    }

    /// Uses a caller-supplied backend; `config.target` only names it.
    pub fn with_backend(config: CampaignConfig, backend: Box<dyn TargetBackend>) -> Result<Self> {
        config.validate()?;
        let parts = config.parts.unwrap_or_else(|| match &config.target {
            TargetSpec::Builtin(n) => targets::lookup(n).map_or(PartSet::of(&SecretPartId::ALL), |t| PartSet::of(t.parts)),
            TargetSpec::Subprocess(_) | TargetSpec::Custom(_) => PartSet::of(&SecretPartId::ALL),
        });
        let sink = match &config.out_dir {
            Some(dir) => {
                std::fs::create_dir_all(dir)?;
                Some(BufWriter::new(File::create(dir.join(report::STATS_FILE))?))
            }
            None => None,
        };
        let budget = Budget::new(
            config.clock,
            Some(Duration::from_secs_f64(config.budget_secs)),
            config.max_executions,
        );
        Ok(Self {
            parts,
            state: FuzzerState::new(backend.map_size()),
            mutator: Mutator::new(config.max_part_size),
            rng: ChaCha8Rng::seed_from_u64(config.rng_seed),
            budget,
            backend,
            stats: Vec::new(),
            sink,
            last_stats_secs: 0.0,
            iterations: 0,
            config,
        })
    }

    pub fn config(&self) -> &CampaignConfig {
        &self.config
    }

    pub fn state(&self) -> &FuzzerState {
        &self.state
    }

    pub fn executions(&self) -> u64 {
        self.backend.executions()
    }

    pub fn budget(&self) -> &Budget {
        &self.budget
    }

    /// Every statistics line emitted so far.
    pub fn stats(&self) -> &[StatsLine] {
        &self.stats
    }

    pub fn elapsed_secs(&self) -> f64 {
        self.budget.elapsed_secs(self.executions())
    }

    pub fn report(&self) -> QifReport {
        QifReport::compute(
            &LeakSummary::from_state(&self.state),
            self.config.min_hits,
            self.executions(),
            self.elapsed_secs(),
        )
    }

    fn initial_seeds(&self) -> Result<Vec<StructuredInput>> {
        let mut seeds = match &self.config.seeds_dir {
            Some(dir) => read_seed_dir(dir, self.config.max_part_size)?,
            None => Vec::new(),
        };
        seeds.extend(self.config.seeds.iter().cloned());
        if seeds.is_empty() {
            let builtin_seed = match &self.config.target {
                TargetSpec::Builtin(n) => targets::lookup(n).and_then(|t| t.seed),
                TargetSpec::Subprocess(_) | TargetSpec::Custom(_) => None,
            };
            seeds.push(match builtin_seed {
                Some(f) => f(),
                None => StructuredInput::new(vec![0; GENERIC_PUBLIC_LEN]),
            });
        }
        Ok(seeds.into_iter().map(|s| conform_to_parts(s, self.parts)).collect())
    }

    /// Executes every seed and adds it to the main corpus.
    pub fn seed(&mut self) -> Result<()> {
        self.emit_stats();
        for seed in self.initial_seeds()? {
            let before = self.state.corpus.len();
            execute_and_record(&mut self.state, &mut self.backend, &seed)?;
            if self.state.corpus.len() == before {
                self.state.add_to_corpus(seed);
            }
        }
        Ok(())
    }

    /// One loop iteration. Returns false once the budget is exhausted.
    pub fn step(&mut self) -> Result<bool> {
        if self.budget.exhausted(self.executions()) {
            return Ok(false);
        }
        self.iterations += 1;
        if self.iterations % RSS_CHECK_EVERY == 0 {
            self.check_rss()?;
        }
        match self.state.select_next(&mut self.rng)? {
            Selection::Main(i) => {
                explore_round(
                    &mut self.state,
                    &mut self.backend,
                    &self.mutator,
                    i,
                    self.config.force_uniform_public,
                    &mut self.rng,
                )?;
            }
            Selection::Violation(v) => {
                let r = exploit_pass(
                    &mut self.state,
                    &mut self.backend,
                    v,
                    self.config.max_part_size,
                    &self.budget,
                    &mut self.rng,
                )?;
                log::debug!("exploit pass on {v}: {r:?}");
                self.emit_stats();
                return Ok(true);
            }
        }
        if self.elapsed_secs() - self.last_stats_secs >= self.config.stats_interval_secs {
            self.emit_stats();
        }
        Ok(true)
    }

    /// Seeds, loops until the budget is spent, then writes the artifacts.
    pub fn run(&mut self) -> Result<QifReport> {
        self.seed()?;
        while self.step()? {}
        let report = self.report();
        self.push_stats(report.clone());
        if let Some(sink) = &mut self.sink {
            if let Err(e) = sink.flush() {
                log::warn!("stats stream: {e}");
            }
        }
        if let Some(dir) = self.config.out_dir.clone() {
            self.write_artifacts(&dir, &report)?;
        }
        Ok(report)
    }

    pub fn write_artifacts(&self, dir: &Path, report: &QifReport) -> Result<()> {
        report::write_report(dir, report)?;
        report::write_snapshot(dir, &self.state.snapshot(self.executions(), report.seconds))?;
        report::write_violations(dir, &self.state)?;
        Ok(())
    }

    /// Recomputes the metrics and appends a statistics line.
    pub fn emit_stats(&mut self) {
        let r = self.report();
        self.push_stats(r);
    }

    fn push_stats(&mut self, report: QifReport) {
        self.last_stats_secs = report.seconds;
        let timestamp = match self.config.clock {
            ClockMode::Logical => report.seconds,
            ClockMode::Wall => SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0.0, |d| d.as_secs_f64()),
        };
        let line = StatsLine { report, timestamp };
        if let Some(sink) = &mut self.sink {
            let written = serde_json::to_writer(&mut *sink, &line)
                .map_err(std::io::Error::from)
                .and_then(|()| sink.write_all(b"\n"))
                .and_then(|()| sink.flush());
            if let Err(e) = written {
                log::warn!("stats stream: {e}");
            }
        }
        log::info!(
            "execs {} violations {} cmi {:.6} capacity {:.3} mapped {}/{}/{}",
            line.report.executions,
            line.report.violations,
            line.report.cmi_bits,
            line.report.capacity_lower_bound_bits,
            line.report.direct_mapped_bits.explicit,
            line.report.direct_mapped_bits.stack,
            line.report.direct_mapped_bits.heap,
        );
        self.stats.push(line);
    }

    fn check_rss(&self) -> Result<()> {
        let Some(limit_mb) = self.config.max_rss_mb else {
            return Ok(());
        };
        match resident_set_mb() {
            Some(rss_mb) if rss_mb > limit_mb => Err(Error::ResourceLimit { rss_mb, limit_mb }),
            _ => Ok(()),
        }
    }
}

/// Current resident set size, where the platform exposes it.
pub fn resident_set_mb() -> Option<u64> {
    let statm = std::fs::read_to_string("/proc/self/statm").ok()?;
    let pages: u64 = statm.split_whitespace().nth(1)?.parse().ok()?;
    // SAFETY: sysconf has no preconditions.
    let page = unsafe { libc::sysconf(libc::_SC_PAGESIZE) };
    Some(pages * u64::try_from(page).ok()? / (1 << 20))
}

/// Runs a campaign to completion.
pub fn run_campaign(config: CampaignConfig) -> Result<QifReport> {
    Campaign::new(config)?.run()
}

/// Convenience constructor for in-process closures.
pub fn in_process<F>(f: F, map_size: usize) -> Box<dyn TargetBackend>
where
    F: Fn(&StructuredInput, &mut crate::executor::TargetIo) + Send + Sync + 'static,
{
    Box::new(InProcessBackend::from_fn(f, map_size))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn logical(target: &str, execs: u64) -> CampaignConfig {
        let mut c = CampaignConfig::new(target.parse().unwrap(), 1e9);
        c.clock = ClockMode::Logical;
        c.max_executions = Some(execs);
        c
    }

    #[test]
    fn target_spec_parsing() {
        assert_eq!("identity".parse::<TargetSpec>().unwrap(), TargetSpec::Builtin("identity".into()));
        assert_eq!(
            "builtin:small-secret".parse::<TargetSpec>().unwrap(),
            TargetSpec::Builtin("small-secret".into())
        );
        assert!("builtin:nope".parse::<TargetSpec>().is_err());
        assert_eq!(
            "./bin/target".parse::<TargetSpec>().unwrap(),
            TargetSpec::Subprocess("./bin/target".into())
        );
    }

    #[test]
    fn config_validation() {
        let mut c = logical("identity", 10);
        c.budget_secs = 0.0;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = logical("identity", 10);
        c.parts = Some(PartSet::EMPTY);
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        assert!(logical("identity", 10).validate().is_ok());
    }

    #[test]
    fn conform_adds_and_drops_parts() {
        let i = StructuredInput::new(vec![1]).with_part(SecretPartId::Heap, vec![9]);
        let c = conform_to_parts(i, PartSet::of(&[SecretPartId::Explicit, SecretPartId::Stack]));
        assert_eq!(c.explicit_secret, Some(vec![0; GENERIC_EXPLICIT_LEN]));
        assert_eq!(c.stack_secret, Some(vec![0]));
        assert_eq!(c.heap_secret, None);
    }

    #[test]
    fn first_stats_line_has_no_violations() {
        let mut c = Campaign::new(logical("identity", 20_000)).unwrap();
        c.run().unwrap();
        assert_eq!(c.stats()[0].report.violations, 0);
        assert!(!c.state().violations().is_empty());
        let caps: Vec<f64> = c.stats().iter().map(|s| s.report.capacity_lower_bound_bits).collect();
        assert!(caps.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn execution_cap_is_respected_closely() {
        let mut c = Campaign::new(logical("constant", 5_000)).unwrap();
        let r = c.run().unwrap();
        assert!(r.executions >= 5_000 && r.executions < 5_010);
        assert_eq!(r.violations, 0);
    }
}
