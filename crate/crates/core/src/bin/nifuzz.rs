use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use nifuzz::budget::ClockMode;
use nifuzz::campaign::{open_backend, run_campaign, CampaignConfig, TargetSpec};
use nifuzz::estimators::{LeakSummary, QifReport, DEFAULT_MIN_HITS};
use nifuzz::executor::DEFAULT_MAP_SIZE;
use nifuzz::input::DEFAULT_MAX_PART_SIZE;
use nifuzz::report::{read_snapshot, witness_files};
use nifuzz::{Error, PartSet, SecretPartId, StructuredInput};

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_SPAWN: u8 = 3;

#[derive(Parser)]
#[command(name = "nifuzz", version, about = "Find and quantify secret-to-public information leaks")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a fuzzing campaign.
    Fuzz(FuzzArgs),
    /// Re-execute stored witnesses and print their outputs.
    Replay(ReplayArgs),
    /// Recompute the metrics from a state snapshot.
    Report(ReportArgs),
    /// List the built-in in-process targets.
    Targets,
}

#[derive(Args)]
struct TargetArgs {
    /// Built-in target name (`builtin:<name>`) or path to an instrumented executable.
    #[arg(long)]
    target: String,
    #[arg(long, default_value_t = 1.0)]
    timeout_secs: f64,
    #[arg(long, default_value_t = DEFAULT_MAP_SIZE)]
    map_size: usize,
}

#[derive(Args)]
struct FuzzArgs {
    #[command(flatten)]
    target: TargetArgs,
    /// Directory of container-format seed files.
    #[arg(long)]
    seeds: Option<PathBuf>,
    /// Declared secret parts, comma separated.
    #[arg(long, value_parser = parse_parts)]
    parts: Option<PartSet>,
    #[arg(long, default_value_t = 60.0)]
    budget_secs: f64,
    #[arg(long, default_value_t = 0)]
    rng_seed: u64,
    /// Draw public inputs uniformly instead of mutating them.
    #[arg(long)]
    force_uniform_public: bool,
    /// Public inputs with fewer executions are left out of p(v).
    #[arg(long, default_value_t = DEFAULT_MIN_HITS)]
    min_hits: u64,
    /// Output directory for stats, report, snapshot and witnesses.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Stop after this many executions.
    #[arg(long)]
    max_execs: Option<u64>,
    /// Count one microsecond per execution instead of wall time.
    #[arg(long)]
    logical_clock: bool,
    #[arg(long, default_value_t = DEFAULT_MAX_PART_SIZE)]
    max_part_size: usize,
    /// Abort when the resident set exceeds this many MiB (0 disables).
    #[arg(long, default_value_t = 8192)]
    max_rss_mb: u64,
}

#[derive(Args)]
struct ReplayArgs {
    #[command(flatten)]
    target: TargetArgs,
    /// Witness files or violation directories.
    #[arg(required = true)]
    witness: Vec<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    snapshot: PathBuf,
    #[arg(long, default_value_t = DEFAULT_MIN_HITS)]
    min_hits: u64,
}

fn parse_parts(s: &str) -> Result<PartSet, String> {
    let parts = s
        .split(',')
        .map(|p| p.trim().parse::<SecretPartId>().map_err(|e| e.to_string()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PartSet::of(&parts))
}

fn timeout(secs: f64) -> Result<Duration, Error> {
    Duration::try_from_secs_f64(secs)
        .ok()
        .filter(|d| !d.is_zero())
        .ok_or_else(|| Error::Config("timeout must be a positive number of seconds".into()))
}

fn fuzz(a: FuzzArgs) -> anyhow::Result<()> {
    let mut c = CampaignConfig::new(a.target.target.parse()?, a.budget_secs);
    c.seeds_dir = a.seeds;
    c.parts = a.parts;
    c.timeout = timeout(a.target.timeout_secs)?;
    c.map_size = a.target.map_size;
    c.rng_seed = a.rng_seed;
    c.force_uniform_public = a.force_uniform_public;
    c.min_hits = a.min_hits;
    c.out_dir = a.out;
    c.max_executions = a.max_execs;
    c.clock = if a.logical_clock { ClockMode::Logical } else { ClockMode::Wall };
    c.max_part_size = a.max_part_size;
    c.max_rss_mb = (a.max_rss_mb > 0).then_some(a.max_rss_mb);
    let report = run_campaign(c)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn expand_witnesses(paths: &[PathBuf]) -> anyhow::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            out.extend(witness_files(p).with_context(|| format!("reading {}", p.display()))?);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

fn print_stream(name: &str, bytes: &[u8]) {
    println!("  {name} ({} bytes): \"{}\"", bytes.len(), bytes.escape_ascii());
}

fn replay(a: ReplayArgs) -> anyhow::Result<()> {
    let spec: TargetSpec = a.target.target.parse()?;
    let mut backend = open_backend(&spec, a.target.map_size, timeout(a.target.timeout_secs)?)?;
    let files = expand_witnesses(&a.witness)?;
    let mut outputs = Vec::new();
    for f in &files {
        let bytes = std::fs::read(f).with_context(|| format!("reading {}", f.display()))?;
        let input = StructuredInput::from_container(&bytes).map_err(Error::from)?;
        let r = backend.run(&input)?;
        println!("{}", f.display());
        println!("  exit: {:?}", r.exit_kind);
        print_stream("stdout", &r.output.stdout);
        print_stream("stderr", &r.output.stderr);
        outputs.push(r.output);
    }
    if outputs.len() >= 2 {
        let distinct = outputs.iter().map(|o| o.hash128()).collect::<std::collections::BTreeSet<_>>().len();
        println!("{distinct} distinct outputs over {} witnesses", outputs.len());
    }
    Ok(())
}

fn report(a: ReportArgs) -> anyhow::Result<()> {
    let snap = read_snapshot(&a.snapshot).with_context(|| format!("reading {}", a.snapshot.display()))?;
    let r = QifReport::compute(&LeakSummary::from_snapshot(&snap), a.min_hits, snap.executions, snap.seconds);
    println!("{}", serde_json::to_string_pretty(&r)?);
    Ok(())
}

fn list_targets() {
    for t in nifuzz::targets::BUILTIN_TARGETS {
        let parts: Vec<&str> = t.parts.iter().map(|p| p.as_str()).collect();
        let kind = if t.leaks { "leaks" } else { "clean" };
        println!("{:<20} {:<6} {:<20} {}", t.name, kind, parts.join(","), t.description);
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(Error::Config(_) | Error::TargetNotFound(_) | Error::Format(_)) => EXIT_CONFIG,
        Some(Error::Spawn { .. } | Error::SharedMemory(_)) => EXIT_SPAWN,
        _ => EXIT_FAILURE,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::Fuzz(a) => fuzz(a),
        Command::Replay(a) => replay(a),
        Command::Report(a) => report(a),
        Command::Targets => {
            list_targets();
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("nifuzz: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
