//! The structured attack suite.
//!
//! [`builtin_cases`] generates the categorized attack catalog,
//! [`run_case`] plays one case against one target and judges it, and
//! [`run_suite`] runs everything differentially: each case must be
//! VULNERABLE_CONFIRMED against the target carrying its flaw and SECURE
//! against the hardened build, proving both that the attack works and
//! that the fix holds.

mod bva;
mod cases;
mod runner;

pub use bva::{bva_values, BvaField};
pub use cases::{
    builtin_cases, AttackCase, Category, Step, VulnSignature, ALL_CATEGORIES, SECRET_ABS_TOKEN,
    STALE_MARKER,
};
pub use runner::{run_case, CaseOutcome, TargetSpec, Verdict, CANARY_PROBE_LEN};

use std::io::{self, Write};
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::server::{serve, FlawSet, ServerConfig, ServerHandle};

/// One case's differential outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaseRecord {
    pub id: String,
    pub category: String,
    pub targets_flaw: Option<String>,
    pub flawed: TargetRecord,
    pub hardened: TargetRecord,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TargetRecord {
    pub target: String,
    pub verdict: Verdict,
    pub evidence: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteReport {
    pub cases: Vec<CaseRecord>,
    /// VULNERABLE_CONFIRMED verdicts against the flawed target.
    pub confirmations: usize,
    /// Non-SECURE verdicts against the hardened target.
    pub hardened_failures: usize,
    pub inconclusive: usize,
    pub pass: bool,
    pub wall_ms: u64,
}

impl SuiteReport {
    pub fn summary_line(&self) -> String {
        format!(
            "suite {}: {} cases, {} confirmations, {} hardened failures, {} inconclusive, {} ms",
            if self.pass { "PASS" } else { "FAIL" },
            self.cases.len(),
            self.confirmations,
            self.hardened_failures,
            self.inconclusive,
            self.wall_ms
        )
    }
}

/// Expected verdict for a case against the flaw-enabled target.
pub fn expected_flawed_verdict(case: &AttackCase) -> Verdict {
    if case.targets_flaw.is_some() {
        Verdict::VulnerableConfirmed
    } else {
        Verdict::Secure
    }
}

/// Run every case against both targets, sequentially, fresh session per
/// case. The suite passes iff every flaw-targeting case is confirmed
/// against the flawed target, everything is SECURE against the hardened
/// target, and nothing is inconclusive.
pub fn run_suite(flawed: &TargetSpec, hardened: &TargetSpec, cases: &[AttackCase]) -> SuiteReport {
    let started = Instant::now();
    let mut records = Vec::with_capacity(cases.len());
    let mut confirmations = 0usize;
    let mut hardened_failures = 0usize;
    let mut inconclusive = 0usize;

    for case in cases {
        let flawed_outcome = run_case(case, flawed, None);
        let hardened_outcome = run_case(case, hardened, None);

        if flawed_outcome.verdict == Verdict::VulnerableConfirmed {
            confirmations += 1;
        }
        if hardened_outcome.verdict != Verdict::Secure {
            hardened_failures += 1;
        }
        for v in [&flawed_outcome.verdict, &hardened_outcome.verdict] {
            if matches!(v, Verdict::Inconclusive(_)) {
                inconclusive += 1;
            }
        }
        let pass = flawed_outcome.verdict == expected_flawed_verdict(case)
            && hardened_outcome.verdict == Verdict::Secure;
        records.push(CaseRecord {
            id: case.id.clone(),
            category: case.category.name().to_string(),
            targets_flaw: case.targets_flaw.map(|f| f.label().to_string()),
            flawed: TargetRecord {
                target: flawed.label.clone(),
                verdict: flawed_outcome.verdict,
                evidence: flawed_outcome.evidence,
            },
            hardened: TargetRecord {
                target: hardened.label.clone(),
                verdict: hardened_outcome.verdict,
                evidence: hardened_outcome.evidence,
            },
            pass,
        });
    }

    let pass = records.iter().all(|r| r.pass);
    SuiteReport {
        cases: records,
        confirmations,
        hardened_failures,
        inconclusive,
        pass,
        wall_ms: started.elapsed().as_millis() as u64,
    }
}

/// Run every case against a single target; used for repeated
/// hardened-only regression sweeps. Returns per-case verdicts.
pub fn run_all_against(target: &TargetSpec, cases: &[AttackCase]) -> Vec<(String, Verdict)> {
    cases
        .iter()
        .map(|case| (case.id.clone(), run_case(case, target, None).verdict))
        .collect()
}

/// Write the machine-readable report: one JSON record per line, cases
/// first, then a summary record.
pub fn write_report(path: &Path, report: &SuiteReport) -> io::Result<()> {
    let mut out = io::BufWriter::new(std::fs::File::create(path)?);
    for case in &report.cases {
        serde_json::to_writer(&mut out, case)?;
        out.write_all(b"\n")?;
    }
    #[derive(Serialize)]
    struct Summary<'a> {
        suite: &'a str,
        cases: usize,
        confirmations: usize,
        hardened_failures: usize,
        inconclusive: usize,
        wall_ms: u64,
    }
    serde_json::to_writer(
        &mut out,
        &Summary {
            suite: if report.pass { "PASS" } else { "FAIL" },
            cases: report.cases.len(),
            confirmations: report.confirmations,
            hardened_failures: report.hardened_failures,
            inconclusive: report.inconclusive,
            wall_ms: report.wall_ms,
        },
    )?;
    out.write_all(b"\n")?;
    out.flush()
}

/// Options for launching in-process targets on loopback.
#[derive(Debug, Clone)]
pub struct SelfHostOptions {
    pub canary: String,
    pub read_timeout: Duration,
}

impl Default for SelfHostOptions {
    fn default() -> Self {
        SelfHostOptions {
            canary: std::env::var("CFT_CANARY")
                .unwrap_or_else(|_| crate::server::DEFAULT_CANARY.to_string()),
            read_timeout: crate::server::DEFAULT_READ_TIMEOUT,
        }
    }
}

impl SelfHostOptions {
    /// Shrinks the server's per-frame timeout so timeout-path cases finish
    /// quickly; used by repeated regression sweeps.
    pub fn fast() -> Self {
        SelfHostOptions {
            read_timeout: Duration::from_millis(300),
            ..Default::default()
        }
    }
}

/// An in-process server plus the target descriptor pointing at it. The
/// scratch sandbox lives as long as the value.
pub struct HostedTarget {
    pub handle: ServerHandle,
    pub spec: TargetSpec,
    _scratch: tempfile::TempDir,
}

/// Launch one server with the given flaw set on an ephemeral loopback
/// port, sandboxed in a scratch directory.
pub fn host_target(
    label: &str,
    flaws: FlawSet,
    opts: &SelfHostOptions,
) -> io::Result<HostedTarget> {
    let scratch = tempfile::tempdir()?;
    let root = scratch.path().join("sandbox");
    std::fs::create_dir(&root)?;
    let config = ServerConfig::new(root)
        .with_flaws(flaws)
        .with_canary(opts.canary.clone())
        .with_read_timeout(opts.read_timeout);
    let handle = serve(config)?;
    let mut spec = TargetSpec::new(handle.local_addr(), label);
    spec.canary = opts.canary.clone();
    spec.crash_probe = Some(Arc::new(handle.crash_probe()));
    spec.secret_path = Some(handle.secret_path());
    spec.recv_timeout = opts.read_timeout + Duration::from_millis(1000);
    Ok(HostedTarget {
        handle,
        spec,
        _scratch: scratch,
    })
}

/// Launch the canonical differential pair: all flaws on versus all off.
pub fn host_pair(opts: &SelfHostOptions) -> io::Result<(HostedTarget, HostedTarget)> {
    let flawed = host_target("flawed", FlawSet::VULNERABLE, opts)?;
    let hardened = host_target("hardened", FlawSet::HARDENED, opts)?;
    Ok((flawed, hardened))
}
