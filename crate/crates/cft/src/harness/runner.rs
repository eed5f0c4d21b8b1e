//! Case execution and the signature-based verdict engine.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::client::{GetStatus, RawFrameSpec, ServerEvent, Session, TransferStatus};
use crate::protocol::{OpPayload, OP_ERR, OP_OK};
use crate::trace::TraceSink;

use super::cases::{AttackCase, Step, VulnSignature, SECRET_ABS_TOKEN};

/// Shortest canary prefix that counts as a leak. Small overruns surface
/// fewer bytes than the whole canary; twelve is long enough that a chance
/// collision in ordinary reply text is not credible.
pub const CANARY_PROBE_LEN: usize = 12;

/// A server under test, as the harness sees it.
#[derive(Clone)]
pub struct TargetSpec {
    pub address: SocketAddr,
    pub label: String,
    pub canary: String,
    /// Reads the target's crash counter when the target runs in-process.
    /// Remote targets have no probe; crash verdicts then rest on the
    /// connection observation alone.
    pub crash_probe: Option<Arc<dyn Fn() -> u64 + Send + Sync>>,
    /// Absolute path of the planted secret file, when known. Needed only
    /// by the absolute-path directory case.
    pub secret_path: Option<PathBuf>,
    pub recv_timeout: Duration,
}

impl TargetSpec {
    pub fn new(address: SocketAddr, label: impl Into<String>) -> TargetSpec {
        TargetSpec {
            address,
            label: label.into(),
            canary: crate::server::DEFAULT_CANARY.to_string(),
            crash_probe: None,
            secret_path: None,
            recv_timeout: crate::client::DEFAULT_RECV_TIMEOUT,
        }
    }

    fn canary_probe(&self) -> &[u8] {
        let bytes = self.canary.as_bytes();
        &bytes[..bytes.len().min(CANARY_PROBE_LEN)]
    }
}

/// Per-case outcome against one target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", content = "reason")]
pub enum Verdict {
    #[serde(rename = "VULNERABLE_CONFIRMED")]
    VulnerableConfirmed,
    #[serde(rename = "SECURE")]
    Secure,
    #[serde(rename = "INCONCLUSIVE")]
    Inconclusive(String),
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Verdict::VulnerableConfirmed => f.write_str("VULNERABLE_CONFIRMED"),
            Verdict::Secure => f.write_str("SECURE"),
            Verdict::Inconclusive(reason) => write!(f, "INCONCLUSIVE({reason})"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaseOutcome {
    pub verdict: Verdict,
    pub evidence: Vec<String>,
}

#[derive(Debug, Clone)]
struct CapturedReply {
    step: usize,
    decisive: bool,
    event: ServerEvent,
}

#[derive(Debug, Default)]
struct Observation {
    evidence: Vec<String>,
    replies: Vec<CapturedReply>,
    /// A receive or send hit a dead connection where the script expected
    /// the server to still be there.
    closed_unexpectedly: bool,
    /// Honest confirmatory step failed to complete.
    clean_failure: Option<String>,
    /// Execution could not produce a meaningful observation.
    fatal: Option<String>,
}

impl Observation {
    fn sent(&mut self, step: usize, bytes: &[u8]) {
        self.evidence
            .push(format!("SENT[{step}] {}", hex::encode(bytes)));
    }

    fn note(&mut self, text: impl Into<String>) {
        self.evidence.push(format!("NOTE {}", text.into()));
    }

    fn reply(&mut self, step: usize, decisive: bool, event: ServerEvent) {
        let mut line = format!(
            "EVENT[{step}]{} {}",
            if decisive { " decisive" } else { "" },
            event.summary()
        );
        if let Some(payload) = event.reply_payload() {
            let cap = payload.len().min(120);
            line.push_str(&format!(
                " body={:?}",
                String::from_utf8_lossy(&payload[..cap])
            ));
        }
        self.evidence.push(line);
        if matches!(event, ServerEvent::Closed) {
            self.closed_unexpectedly = true;
        }
        self.replies.push(CapturedReply {
            step,
            decisive,
            event,
        });
    }
}

/// Execute a case against a target and judge it. Fresh connection per
/// case; an unreachable target or an ambiguous observation yields
/// INCONCLUSIVE, never a guessed verdict.
pub fn run_case(
    case: &AttackCase,
    target: &TargetSpec,
    trace: Option<Arc<TraceSink>>,
) -> CaseOutcome {
    let crash_before = target.crash_probe.as_ref().map(|p| p());
    let mut obs = Observation::default();
    execute_script(case, target, trace, &mut obs);
    let crash_delta = match (crash_before, target.crash_probe.as_ref()) {
        (Some(before), Some(probe)) => Some(probe().saturating_sub(before)),
        _ => None,
    };
    if let Some(delta) = crash_delta {
        obs.note(format!("crash counter delta {delta}"));
    }
    let verdict = judge(case, target, &obs, crash_delta);
    let mut evidence = obs.evidence;
    evidence.push(format!("VERDICT {} vs {}", verdict, target.label));
    CaseOutcome { verdict, evidence }
}

fn execute_script(
    case: &AttackCase,
    target: &TargetSpec,
    trace: Option<Arc<TraceSink>>,
    obs: &mut Observation,
) {
    let mut session = match Session::connect(target.address, trace.clone()) {
        Ok(s) => s,
        Err(e) => {
            obs.fatal = Some(format!("unreachable: {e}"));
            return;
        }
    };
    session.set_recv_timeout(target.recv_timeout);

    for (idx, step) in case.script.iter().enumerate() {
        match step {
            Step::Raw {
                spec,
                await_reply,
                decisive,
            } => {
                match session.send_raw(spec) {
                    Ok(bytes) => obs.sent(idx, &bytes),
                    Err(e) => {
                        obs.note(format!("send failed at step {idx}: {e}"));
                        obs.closed_unexpectedly = true;
                        return;
                    }
                }
                if *await_reply {
                    let event = session.receive(None);
                    obs.reply(idx, *decisive, event);
                }
            }
            Step::Payload {
                payload,
                await_reply,
                decisive,
            } => {
                match session.send_payload(payload) {
                    Ok(bytes) => obs.sent(idx, &bytes),
                    Err(e) => {
                        obs.note(format!("send failed at step {idx}: {e}"));
                        obs.closed_unexpectedly = true;
                        return;
                    }
                }
                if *await_reply {
                    let event = session.receive(None);
                    obs.reply(idx, *decisive, event);
                }
            }
            Step::Hello { client_id } => {
                obs.sent(
                    idx,
                    &RawFrameSpec::for_payload(&OpPayload::Hello {
                        client_id: client_id.clone(),
                    })
                    .resolve(),
                );
                match session.hello(client_id) {
                    Ok(event) => obs.reply(idx, false, event),
                    Err(e) => {
                        obs.fatal = Some(format!("hello failed: {e}"));
                        return;
                    }
                }
            }
            Step::PutFile {
                filename,
                content,
                block_size,
            } => {
                // The honest client sends exactly these frames; log them
                // from the same deterministic encoding it uses.
                obs.sent(
                    idx,
                    &OpPayload::PutReq {
                        filename: filename.clone(),
                        file_size: content.len() as u32,
                        block_size: *block_size,
                    }
                    .to_frame_bytes(),
                );
                for (i, chunk) in content.chunks(*block_size as usize).enumerate() {
                    obs.sent(
                        idx,
                        &OpPayload::Data {
                            block_index: i as u32,
                            data: chunk.to_vec(),
                        }
                        .to_frame_bytes(),
                    );
                }
                obs.sent(idx, &OpPayload::PutCommit.to_frame_bytes());
                match session.put_file(filename, content, *block_size) {
                    Ok(report) => {
                        for event in &report.replies {
                            obs.reply(idx, false, event.clone());
                        }
                        match &report.status {
                            TransferStatus::Completed => {
                                obs.note(format!(
                                    "put {filename} completed ({} data frames)",
                                    report.data_frames_sent
                                ));
                            }
                            TransferStatus::Refused { code, at_frame } => {
                                obs.clean_failure = Some(format!(
                                    "put refused with code {code:#04X} at frame {at_frame}"
                                ));
                            }
                            TransferStatus::Aborted { reason } => {
                                obs.clean_failure = Some(format!("put aborted: {reason}"));
                            }
                        }
                    }
                    Err(e) => {
                        obs.fatal = Some(format!("put failed: {e}"));
                        return;
                    }
                }
            }
            Step::Get { filename } => {
                let resolved = if filename == SECRET_ABS_TOKEN {
                    match &target.secret_path {
                        Some(p) => p.display().to_string(),
                        None => {
                            obs.fatal = Some(
                                "absolute-path case needs the target's sandbox layout \
                                 (secret path hint missing)"
                                    .into(),
                            );
                            return;
                        }
                    }
                } else {
                    filename.clone()
                };
                obs.sent(
                    idx,
                    &OpPayload::GetReq {
                        filename: resolved.clone(),
                    }
                    .to_frame_bytes(),
                );
                match session.get_file(&resolved) {
                    Ok(outcome) => {
                        for event in &outcome.replies {
                            obs.reply(idx, true, event.clone());
                        }
                        match outcome.status {
                            GetStatus::Completed { data } => {
                                obs.note(format!("get returned {} bytes", data.len()));
                            }
                            GetStatus::Refused { code } => {
                                obs.note(format!("get refused with code {code:#04X}"));
                            }
                            GetStatus::Aborted { reason } => {
                                obs.note(format!("get aborted: {reason}"));
                            }
                        }
                    }
                    Err(e) => {
                        obs.fatal = Some(format!("get failed: {e}"));
                        return;
                    }
                }
            }
            Step::Bye => {
                obs.sent(idx, &OpPayload::Bye.to_frame_bytes());
                match session.bye() {
                    Ok(event) => {
                        // A closed/ok answer here is the clean end of the
                        // session, not a crash indicator.
                        obs.evidence
                            .push(format!("EVENT[{idx}] bye: {}", event.summary()));
                    }
                    Err(e) => obs.note(format!("bye failed: {e}")),
                }
            }
            Step::Reconnect => {
                session = match Session::connect(target.address, trace.clone()) {
                    Ok(s) => s,
                    Err(e) => {
                        obs.fatal = Some(format!("reconnect failed: {e}"));
                        return;
                    }
                };
                session.set_recv_timeout(target.recv_timeout);
                obs.note("reconnected (fresh session)");
            }
        }
    }
}

fn judge(
    case: &AttackCase,
    target: &TargetSpec,
    obs: &Observation,
    crash_delta: Option<u64>,
) -> Verdict {
    if let Some(reason) = &obs.fatal {
        return Verdict::Inconclusive(reason.clone());
    }

    let triggered = match &case.signature {
        VulnSignature::CanaryInReply => {
            let probe = target.canary_probe();
            obs.replies
                .iter()
                .any(|r| r.event.reply_payload().is_some_and(|p| contains(p, probe)))
        }
        VulnSignature::SimulatedCrash => match (obs.closed_unexpectedly, crash_delta) {
            (true, Some(0)) => {
                return Verdict::Inconclusive(
                    "connection dropped but the crash counter did not move".into(),
                );
            }
            (true, _) => true,
            (false, Some(d)) if d > 0 => {
                return Verdict::Inconclusive(
                    "crash counter moved without this session dying".into(),
                );
            }
            (false, _) => false,
        },
        VulnSignature::IllegalAccept { .. } => {
            return judge_decisive(case, obs, |frame_op| frame_op == OP_OK);
        }
        VulnSignature::SmearReply => {
            // Same decision shape: a length-corrupt frame answered with a
            // non-error reply means it was processed.
            return judge_decisive(case, obs, |frame_op| frame_op != OP_ERR);
        }
        VulnSignature::StaleResidue { marker } => obs
            .replies
            .iter()
            .any(|r| r.event.reply_payload().is_some_and(|p| contains(p, marker))),
    };

    if triggered {
        return Verdict::VulnerableConfirmed;
    }
    secure_or_inconclusive(case, obs)
}

/// Judge signatures that hinge on how the decisive frames were answered.
/// Any decisive reply matching `trigger` confirms; an ERR is a refusal
/// (the expected code is report detail, not a verdict input); a missing
/// observation is inconclusive.
fn judge_decisive(case: &AttackCase, obs: &Observation, trigger: impl Fn(u8) -> bool) -> Verdict {
    let decisive: Vec<&CapturedReply> = obs.replies.iter().filter(|r| r.decisive).collect();
    if decisive.is_empty() {
        return Verdict::Inconclusive("no decisive reply observed".into());
    }
    let mut all_refused = true;
    for reply in &decisive {
        match &reply.event {
            ServerEvent::Reply(report) => match report.frame() {
                Some(frame) if trigger(frame.opcode) => {
                    return Verdict::VulnerableConfirmed;
                }
                Some(frame) if frame.opcode == OP_ERR => {}
                _ => all_refused = false,
            },
            ServerEvent::Timeout => {
                return Verdict::Inconclusive(format!(
                    "timeout awaiting the decisive reply at step {}",
                    reply.step
                ));
            }
            ServerEvent::Closed => {
                return Verdict::Inconclusive(format!(
                    "connection closed before the decisive reply at step {}",
                    reply.step
                ));
            }
        }
    }
    if !all_refused {
        return Verdict::Inconclusive("decisive reply was not a frame".into());
    }
    secure_or_inconclusive(case, obs)
}

fn secure_or_inconclusive(case: &AttackCase, obs: &Observation) -> Verdict {
    if let Some(reason) = &obs.clean_failure {
        return Verdict::Inconclusive(format!("confirmatory run failed: {reason}"));
    }
    if case.expect_clean {
        let err_reply = obs
            .replies
            .iter()
            .find(|r| r.event.reply_opcode() == Some(OP_ERR));
        if let Some(r) = err_reply {
            return Verdict::Inconclusive(format!(
                "expected a clean run but got an ERR reply at step {}",
                r.step
            ));
        }
    }
    if obs.closed_unexpectedly && !matches!(case.signature, VulnSignature::SimulatedCrash) {
        return Verdict::Inconclusive("connection closed unexpectedly".into());
    }
    Verdict::Secure
}

fn contains(haystack: &[u8], needle: &[u8]) -> bool {
    !needle.is_empty()
        && haystack
            .windows(needle.len())
            .any(|window| window == needle)
}
