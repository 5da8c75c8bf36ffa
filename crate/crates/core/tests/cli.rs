mod common;

use std::path::Path;
use std::process::{Command, Output};

use nifuzz::campaign::StatsLine;
use nifuzz::estimators::QifReport;
use nifuzz::report::{read_report, REPORT_FILE, SNAPSHOT_FILE, STATS_FILE, VIOLATIONS_DIR};

fn nifuzz(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nifuzz")).args(args).output().unwrap()
}

fn fuzz_target_func(out: &Path, seed: &str) -> Output {
    nifuzz(&[
        "fuzz",
        "--target",
        "builtin:target-func",
        "--logical-clock",
        "--budget-secs",
        "1000",
        "--max-execs",
        "200000",
        "--rng-seed",
        seed,
        "--out",
        out.to_str().unwrap(),
    ])
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn fuzz_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let o = fuzz_target_func(dir.path(), "3");
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let printed: QifReport = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(printed.capacity_lower_bound_bits, 2.0);
    assert_eq!(printed.executions, 200_000);
    assert_eq!(read_report(&dir.path().join(REPORT_FILE)).unwrap(), printed);
    assert!(dir.path().join(SNAPSHOT_FILE).is_file());

    let stats = std::fs::read_to_string(dir.path().join(STATS_FILE)).unwrap();
    let lines: Vec<StatsLine> = stats.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert!(lines.len() >= 2);
    assert_eq!(lines[0].report.violations, 0);
    assert_eq!(lines.last().unwrap().report, printed);
    for w in lines.windows(2) {
        assert!(w[1].report.capacity_lower_bound_bits >= w[0].report.capacity_lower_bound_bits);
        assert!(w[1].report.executions >= w[0].report.executions);
        assert!(w[1].timestamp >= w[0].timestamp);
    }

    let vdirs: Vec<_> = std::fs::read_dir(dir.path().join(VIOLATIONS_DIR)).unwrap().collect();
    assert_eq!(vdirs.len(), printed.violations);
}

#[test]
fn offline_report_matches_the_campaign_report() {
    let dir = tempfile::tempdir().unwrap();
    assert!(fuzz_target_func(dir.path(), "5").status.success());
    let o = nifuzz(&["report", dir.path().join(SNAPSHOT_FILE).to_str().unwrap()]);
    assert!(o.status.success());
    let offline: QifReport = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(offline, read_report(&dir.path().join(REPORT_FILE)).unwrap());
}

#[test]
fn replay_reexecutes_violation_witnesses() {
    let dir = tempfile::tempdir().unwrap();
    assert!(fuzz_target_func(dir.path(), "9").status.success());
    let vdir = std::fs::read_dir(dir.path().join(VIOLATIONS_DIR)).unwrap().next().unwrap().unwrap().path();
    let o = nifuzz(&["replay", "--target", "target-func", vdir.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("exit: Normal"));
    let n = text.matches("exit:").count();
    assert!(n >= 2);
    assert!(text.contains(&format!("{n} distinct outputs over {n} witnesses")), "{text}");
}

#[test]
fn same_seed_gives_identical_reports() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(fuzz_target_func(a.path(), "11").status.success());
    assert!(fuzz_target_func(b.path(), "11").status.success());
    for f in [REPORT_FILE, STATS_FILE, SNAPSHOT_FILE] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn native_target_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let target = common::c_target("MODE_LEAK");
    let o = nifuzz(&[
        "fuzz",
        "--target",
        target.to_str().unwrap(),
        "--parts",
        "explicit",
        "--max-execs",
        "1500",
        "--timeout-secs",
        "5",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r: QifReport = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(r.violations >= 1);
    assert!(r.capacity_lower_bound_bits > 0.0 && r.capacity_lower_bound_bits <= 4.0);
}

#[test]
fn missing_target_exits_with_config_status() {
    let o = nifuzz(&["fuzz", "--target", "/nonexistent/target", "--budget-secs", "1"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("/nonexistent/target"), "{err}");
}

#[test]
fn invalid_configuration_exits_with_config_status() {
    for args in [
        &["fuzz", "--target", "identity", "--budget-secs", "0"][..],
        &["fuzz", "--target", "builtin:no-such-target"][..],
        &["fuzz", "--target", "identity", "--timeout-secs", "0"][..],
        &["fuzz", "--target", "identity", "--min-hits", "0"][..],
    ] {
        let o = nifuzz(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(String::from_utf8_lossy(&o.stderr).starts_with("nifuzz: "), "{args:?}");
    }
}

#[test]
fn unknown_part_is_a_usage_error() {
    let o = nifuzz(&["fuzz", "--target", "identity", "--parts", "explicit,registers"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("registers"));
}

#[test]
fn unspawnable_target_exits_with_spawn_status() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("not-executable");
    std::fs::write(&p, "data").unwrap();
    let o = nifuzz(&["fuzz", "--target", p.to_str().unwrap(), "--budget-secs", "5"]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn corrupt_witness_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.bin");
    std::fs::write(&p, b"NIFZ\x02\x00").unwrap();
    let o = nifuzz(&["replay", "--target", "identity", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn targets_lists_builtins() {
    let o = nifuzz(&["targets"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for t in nifuzz::targets::BUILTIN_TARGETS {
        assert!(text.lines().any(|l| l.starts_with(t.name)), "{}", t.name);
    }
}
