//! Exit-status and output contract of the `cft` binary.

use std::process::Command;
use std::time::Duration;

use cft::harness::builtin_cases;
use cft::server::{serve, FlawSet, ServerConfig};

fn cft() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cft"))
}

#[test]
fn decode_missing_trace_exits_2_and_names_the_path() {
    let output = cft()
        .args(["decode", "definitely-missing.trace"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(
        stderr.contains("definitely-missing.trace"),
        "stderr must name the path: {stderr}"
    );
}

#[test]
fn unknown_flag_exits_2() {
    let output = cft().args(["serve", "--no-such-flag"]).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn unknown_case_id_exits_2() {
    let output = cft()
        .args(["attack", "--target", "127.0.0.1:1", "--case", "C-NOPE"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn list_cases_enumerates_every_builtin_id() {
    let output = cft().arg("list-cases").output().unwrap();
    assert_eq!(output.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&output.stdout);
    let cases = builtin_cases();
    for case in &cases {
        assert!(stdout.contains(&case.id), "missing {}", case.id);
        assert!(stdout.contains(case.category.name()));
    }
    assert!(stdout.contains(&format!("{} cases", cases.len())));
}

#[test]
fn attack_exit_codes_follow_the_verdict() {
    let scratch = tempfile::tempdir().unwrap();
    let root = scratch.path().join("sandbox");
    std::fs::create_dir(&root).unwrap();
    let flawed = serve(
        ServerConfig::new(&root)
            .with_flaws(FlawSet::VULNERABLE)
            .with_read_timeout(Duration::from_millis(300)),
    )
    .unwrap();

    // Confirmed vulnerable: exit 1, evidence printed.
    let output = cft()
        .args([
            "attack",
            "--target",
            &flawed.local_addr().to_string(),
            "--case",
            "C-DIR-1",
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("VULNERABLE_CONFIRMED"));
    assert!(
        stdout.contains("SENT["),
        "evidence must include sent frames"
    );

    drop(flawed);
    let hardened_root = scratch.path().join("sandbox2");
    std::fs::create_dir(&hardened_root).unwrap();
    let hardened = serve(
        ServerConfig::new(&hardened_root)
            .with_flaws(FlawSet::HARDENED)
            .with_read_timeout(Duration::from_millis(300)),
    )
    .unwrap();

    // Secure target: exit 0.
    let output = cft()
        .args([
            "attack",
            "--target",
            &hardened.local_addr().to_string(),
            "--case",
            "C-DIR-1",
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&output.stdout).contains("SECURE"));

    // Layout-dependent case without the root hint: inconclusive, exit 1.
    let output = cft()
        .args([
            "attack",
            "--target",
            &hardened.local_addr().to_string(),
            "--case",
            "C-DIR-2",
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&output.stdout).contains("INCONCLUSIVE"));

    // Same case with the hint: conclusive SECURE, exit 0.
    let output = cft()
        .args([
            "attack",
            "--target",
            &hardened.local_addr().to_string(),
            "--case",
            "C-DIR-2",
            "--root",
            hardened_root.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0));
}

#[test]
fn suite_without_targets_exits_2() {
    let output = cft().arg("suite").output().unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn decode_renders_a_trace_written_by_put() {
    let scratch = tempfile::tempdir().unwrap();
    let root = scratch.path().join("sandbox");
    std::fs::create_dir(&root).unwrap();
    let handle =
        serve(ServerConfig::new(&root).with_read_timeout(Duration::from_millis(300))).unwrap();

    let local = scratch.path().join("local.bin");
    std::fs::write(&local, b"cli trace test payload").unwrap();
    let trace = scratch.path().join("put.trace");
    let output = cft()
        .args([
            "put",
            "--target",
            &handle.local_addr().to_string(),
            "--file",
            local.to_str().unwrap(),
            "--name",
            "via-cli.bin",
            "--block-size",
            "8",
            "--trace",
            trace.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(
        output.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    assert_eq!(
        std::fs::read(root.join("via-cli.bin")).unwrap(),
        b"cli trace test payload"
    );

    let output = cft().arg("decode").arg(&trace).output().unwrap();
    assert_eq!(output.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("PUT_REQ"));
    assert!(stdout.contains("PUT_COMMIT"));
    assert!(stdout.contains("checksum=ok"));
}
