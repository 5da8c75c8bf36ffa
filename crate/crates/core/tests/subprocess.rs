mod common;

use std::os::unix::fs::PermissionsExt;
use std::time::{Duration, Instant};

use nifuzz::budget::ClockMode;
use nifuzz::campaign::{Campaign, CampaignConfig, TargetSpec};
use nifuzz::executor::{ExitKind, SubprocessBackend, TargetBackend, DEFAULT_MAP_SIZE};
use nifuzz::bitflip::BitflipRecord;
use nifuzz::report::{read_snapshot, witness_files, BITFLIP_MAP_FILE, VIOLATIONS_DIR};
use nifuzz::{Error, PartSet, SecretPartId, StructuredInput};

use common::c_target;

const TIMEOUT: Duration = Duration::from_secs(5);

fn input(public: &[u8], explicit: u8) -> StructuredInput {
    StructuredInput::new(public.to_vec()).with_part(SecretPartId::Explicit, vec![explicit])
}

#[test]
fn target_sees_container_path_and_map_size() {
    let mut b = SubprocessBackend::new(c_target("MODE_ENV"), 4096, TIMEOUT).unwrap();
    let x = StructuredInput::new(b"abc".to_vec())
        .with_part(SecretPartId::Explicit, vec![1, 2])
        .with_part(SecretPartId::Heap, vec![]);
    let r = b.run(&x).unwrap();
    assert_eq!(r.exit_kind, ExitKind::Normal);
    assert_eq!(r.output.stdout, b"map=4096 pub=3 explicit=2 stack=-1 heap=0\n");
    assert_eq!(r.output.stderr, b"path_is_argv1=1\n");
    assert_eq!(r.coverage.nonzero().iter().map(|&(i, _)| i).collect::<Vec<_>>(), vec![7]);
}

#[test]
fn coverage_map_is_cleared_between_executions() {
    let mut env = SubprocessBackend::new(c_target("MODE_ENV"), 256, TIMEOUT).unwrap();
    assert!(!env.run(&input(b"x", 0)).unwrap().coverage.is_all_zero());
    // the leak target records nothing for an empty public part
    let mut b = SubprocessBackend::new(c_target("MODE_LEAK"), 256, TIMEOUT).unwrap();
    assert!(!b.run(&input(b"\x03", 0)).unwrap().coverage.is_all_zero());
    assert!(b.run(&input(b"", 0)).unwrap().coverage.is_all_zero());
}

#[test]
fn output_depends_on_low_secret_nibble_only() {
    let mut b = SubprocessBackend::new(c_target("MODE_LEAK"), DEFAULT_MAP_SIZE, TIMEOUT).unwrap();
    assert_eq!(b.run(&input(b"\xA0", 0x35)).unwrap().output.stdout, [0xA5]);
    assert_eq!(b.run(&input(b"\xA0", 0xF5)).unwrap().output.stdout, [0xA5]);
    assert_eq!(b.run(&input(b"\xA0", 0x36)).unwrap().output.stdout, [0xA6]);
    assert_eq!(b.executions(), 3);
}

#[test]
fn crash_by_signal_is_reported() {
    let mut b = SubprocessBackend::new(c_target("MODE_CRASH"), 64, TIMEOUT).unwrap();
    assert_eq!(b.run(&input(b"", 0)).unwrap().exit_kind, ExitKind::Crash);
}

#[test]
fn hanging_target_is_killed_at_the_timeout() {
    let mut b = SubprocessBackend::new(c_target("MODE_HANG"), 64, Duration::from_millis(200)).unwrap();
    let start = Instant::now();
    assert_eq!(b.run(&input(b"", 0)).unwrap().exit_kind, ExitKind::Timeout);
    assert!(start.elapsed() < Duration::from_secs(3));
}

#[test]
fn missing_program_is_target_not_found() {
    let err = SubprocessBackend::new("/nonexistent/target", 64, TIMEOUT).err().unwrap();
    assert!(matches!(err, Error::TargetNotFound(_)), "{err}");
}

#[test]
fn non_executable_program_fails_to_spawn() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("plain");
    std::fs::write(&p, "not a program").unwrap();
    std::fs::set_permissions(&p, std::fs::Permissions::from_mode(0o644)).unwrap();
    let mut b = SubprocessBackend::new(&p, 64, TIMEOUT).unwrap();
    let err = b.run(&input(b"", 0)).err().unwrap();
    assert!(matches!(err, Error::Spawn { .. }), "{err}");
}

#[test]
fn shell_script_reads_the_input_file() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("size.sh");
    std::fs::write(&p, "#!/bin/sh\nwc -c < \"$1\"\n").unwrap();
    std::fs::set_permissions(&p, std::fs::Permissions::from_mode(0o755)).unwrap();
    let mut b = SubprocessBackend::new(&p, 64, TIMEOUT).unwrap();
    let x = input(b"hello", 9);
    let r = b.run(&x).unwrap();
    let n: usize = String::from_utf8_lossy(&r.output.stdout).trim().parse().unwrap();
    assert_eq!(n, x.to_container().len());
}

#[test]
fn campaign_against_native_target_maps_the_leak() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = CampaignConfig::new(TargetSpec::Subprocess(c_target("MODE_LEAK")), 120.0);
    c.parts = Some(PartSet::of(&[SecretPartId::Explicit]));
    c.max_executions = Some(3000);
    c.clock = ClockMode::Wall;
    c.out_dir = Some(dir.path().to_path_buf());
    c.seeds = vec![input(b"\x10", 0)];
    let mut campaign = Campaign::new(c).unwrap();
    let report = campaign.run().unwrap();
    assert!(report.violations >= 1);
    assert_eq!(report.direct_mapped_bits.explicit, 4);
    campaign.state().check_invariants().unwrap();

    let snap = read_snapshot(&dir.path().join("state_snapshot.json")).unwrap();
    assert_eq!(snap.violations.len(), report.violations);
    // with this budget only some violations reach the exploit stage
    let mapped = snap.entries.iter().find(|e| e.bitflip_map.is_some()).expect("one violation mapped");
    assert!(snap.violations.contains(&mapped.public_hash));
    let vdir = dir.path().join(VIOLATIONS_DIR).join(mapped.public_hash.to_hex());
    let map: Vec<BitflipRecord> = serde_json::from_slice(&std::fs::read(vdir.join(BITFLIP_MAP_FILE)).unwrap()).unwrap();
    let pairs: Vec<(usize, Vec<usize>)> = map.iter().map(|r| (r.input_bit, r.output_bits.clone())).collect();
    assert_eq!(pairs, (0..4).map(|i| (i, vec![i])).collect::<Vec<_>>());

    // witnesses replay to distinct outputs on a fresh backend
    let files = witness_files(&vdir).unwrap();
    assert!(files.len() >= 2);
    let mut b = SubprocessBackend::new(c_target("MODE_LEAK"), DEFAULT_MAP_SIZE, TIMEOUT).unwrap();
    let mut outs = std::collections::BTreeSet::new();
    for f in &files {
        let w = StructuredInput::from_container(&std::fs::read(f).unwrap()).unwrap();
        let out = b.run(&w).unwrap().output;
        assert_eq!(f.file_stem().unwrap().to_str().unwrap(), out.hash128().to_hex());
        outs.insert(out.stdout);
    }
    assert_eq!(outs.len(), files.len());
}
