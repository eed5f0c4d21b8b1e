//! Acceptance suite: one test per criterion, each printing a pass/fail
//! line (run with `cargo test --test acceptance -- --nocapture` to see
//! them). The criteria pin the workbench's contract:
//!
//! 1. codec soundness (round trip + decode fuzz, under 30 s)
//! 2. the self-hosted differential suite passes end to end (under 2 min)
//! 3. per-flaw isolation: exactly the targeting cases flip (under 5 min)
//! 4. hardened safety under 10^4 mutated streams (under 2 min)
//! 5. repeatability: identical verdicts across runs, 20 clean hardened sweeps
//! 6. trace fidelity for the length-smearing attack
//! 7. crash isolation between concurrent sessions

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::net::TcpStream;
use std::path::Path;
use std::process::Command;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use cft::client::{Session, TransferStatus};
use cft::harness::{
    builtin_cases, host_pair, host_target, run_all_against, run_case, SelfHostOptions, Step,
    Verdict,
};
use cft::protocol::{
    self, decode_frame_slice, decode_payload, encode_frame, encode_payload, DecodeOutcome, Frame,
    OpPayload, ERR_BAD_SEQUENCE, ERR_FRAME_TOO_LARGE, ERR_INVALID_VALUE, ERR_MALFORMED,
    ERR_PATH_DENIED, ERR_UNKNOWN_OP, KNOWN_OPCODES, OP_BYE, OP_DATA, OP_ERR, OP_FILE_INFO,
    OP_GET_REQ, OP_HELLO, OP_OK, OP_PUT_COMMIT, OP_PUT_REQ,
};
use cft::server::{
    serve, Flaw, FlawSet, ServerConfig, ALL_FLAWS, DEFAULT_MAX_FILE_SIZE, GET_CHUNK,
};
use cft::trace::{decode_trace, load_trace, Direction, TraceLine, TraceSink};

/// Serializes the heavy criteria so wall-clock bounds are not skewed by
/// the test harness running them in parallel.
static HEAVY: Mutex<()> = Mutex::new(());

fn pass(criterion: u8, what: &str, detail: String) {
    println!("[ACCEPTANCE] criterion {criterion} ({what}): PASS ({detail})");
}

// ---------------------------------------------------------------- C1 --

fn random_payload(rng: &mut ChaCha20Rng, opcode: u8) -> OpPayload {
    fn rand_text(rng: &mut ChaCha20Rng, max: usize) -> String {
        let len = rng.gen_range(0..=max);
        (0..len)
            .map(|_| {
                // Bias toward ASCII but keep multi-byte code points in play.
                if rng.gen_bool(0.85) {
                    char::from(rng.gen_range(0x20u8..0x7F))
                } else {
                    char::from_u32(rng.gen_range(0x80u32..0x2FFF)).unwrap_or('□')
                }
            })
            .collect()
    }
    fn rand_bytes(rng: &mut ChaCha20Rng, max: usize) -> Vec<u8> {
        let len = rng.gen_range(0..=max);
        (0..len).map(|_| rng.gen()).collect()
    }
    match opcode {
        OP_HELLO => OpPayload::Hello {
            client_id: rand_text(rng, 120),
        },
        OP_OK => OpPayload::Ok {
            message: rand_text(rng, 200),
        },
        OP_ERR => OpPayload::Err {
            code: rng.gen(),
            message: rand_text(rng, 200),
        },
        OP_PUT_REQ => OpPayload::PutReq {
            filename: rand_text(rng, 150),
            file_size: rng.gen(),
            block_size: rng.gen(),
        },
        OP_DATA => OpPayload::Data {
            block_index: rng.gen(),
            data: rand_bytes(rng, 1024),
        },
        OP_PUT_COMMIT => OpPayload::PutCommit,
        OP_GET_REQ => OpPayload::GetReq {
            filename: rand_text(rng, 150),
        },
        OP_FILE_INFO => OpPayload::FileInfo {
            file_size: rng.gen(),
        },
        OP_BYE => OpPayload::Bye,
        _ => unreachable!(),
    }
}

#[test]
fn criterion_1_codec_soundness() {
    let _guard = HEAVY.lock().unwrap();
    let started = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(0xC0DEC);

    let mut round_trips = 0usize;
    for opcode in KNOWN_OPCODES {
        for _ in 0..1000 {
            let p = random_payload(&mut rng, opcode);
            let body = encode_payload(&p);
            assert_eq!(
                decode_payload(opcode, &body).unwrap(),
                p,
                "opcode {opcode:#04X}"
            );
            let frame_bytes = p.to_frame_bytes();
            let dec = decode_frame_slice(&frame_bytes);
            assert!(dec.report.is_well_formed());
            round_trips += 1;
        }
    }

    let mut fuzzed = 0usize;
    for _ in 0..10_000 {
        let len = rng.gen_range(0..=64);
        let bytes: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
        // Must produce a report, never panic.
        let _ = decode_frame_slice(&bytes);
        let _ = protocol::decode_frame(&mut std::io::Cursor::new(&bytes), Duration::from_millis(2));
        fuzzed += 1;
    }

    let elapsed = started.elapsed();
    assert!(
        elapsed < Duration::from_secs(30),
        "codec soundness took {elapsed:?}, budget is 30 s"
    );
    pass(
        1,
        "codec soundness",
        format!("{round_trips} round trips, {fuzzed} fuzz decodes in {elapsed:?}"),
    );
}

// ---------------------------------------------------------------- C2 --

#[test]
fn criterion_2_differential_suite_self_hosted() {
    let _guard = HEAVY.lock().unwrap();
    let started = Instant::now();
    let scratch = tempfile::tempdir().unwrap();
    let report_path = scratch.path().join("suite-report.jsonl");

    let output = Command::new(env!("CARGO_BIN_EXE_cft"))
        .args(["suite", "--self-hosted", "--report"])
        .arg(&report_path)
        .output()
        .expect("run cft suite");
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(
        output.status.success(),
        "suite must exit 0\nstdout:\n{stdout}\nstderr:\n{}",
        String::from_utf8_lossy(&output.stderr)
    );
    assert!(stdout.contains("suite PASS"), "{stdout}");

    // Per-case records from the machine-readable report.
    let report_text = std::fs::read_to_string(&report_path).unwrap();
    let mut per_case: BTreeMap<String, (String, String)> = BTreeMap::new();
    for line in report_text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        if let Some(id) = v.get("id").and_then(|x| x.as_str()) {
            let fv = v["flawed"]["verdict"]["verdict"]
                .as_str()
                .unwrap()
                .to_string();
            let hv = v["hardened"]["verdict"]["verdict"]
                .as_str()
                .unwrap()
                .to_string();
            per_case.insert(id.to_string(), (fv, hv));
        }
    }
    let cases = builtin_cases();
    assert_eq!(per_case.len(), cases.len());
    let expected_confirmations = cases.iter().filter(|c| c.targets_flaw.is_some()).count();
    let mut confirmations = 0;
    for case in &cases {
        let (flawed, hardened) = &per_case[&case.id];
        assert_eq!(hardened, "SECURE", "case {} vs hardened", case.id);
        if case.targets_flaw.is_some() {
            assert_eq!(flawed, "VULNERABLE_CONFIRMED", "case {} vs flawed", case.id);
            confirmations += 1;
        } else {
            assert_eq!(flawed, "SECURE", "case {} vs flawed", case.id);
        }
    }
    assert_eq!(confirmations, expected_confirmations);
    // The confirmatory transfers succeed on both targets.
    for id in ["C-PUT-OK", "C-BULK"] {
        let (flawed, hardened) = &per_case[id];
        assert_eq!((flawed.as_str(), hardened.as_str()), ("SECURE", "SECURE"));
    }

    let elapsed = started.elapsed();
    assert!(
        elapsed < Duration::from_secs(120),
        "differential suite took {elapsed:?}, budget is 2 min"
    );
    pass(
        2,
        "differential suite",
        format!(
            "{} cases, {confirmations} confirmations, report at {} in {elapsed:?}",
            cases.len(),
            report_path.display()
        ),
    );
}

// ---------------------------------------------------------------- C3 --

#[test]
fn criterion_3_per_flaw_isolation() {
    let _guard = HEAVY.lock().unwrap();
    let started = Instant::now();
    let cases = builtin_cases();
    let opts = SelfHostOptions::fast();

    for flaw in ALL_FLAWS {
        let target = host_target(
            &format!("only-{}", flaw.label()),
            FlawSet::single(flaw),
            &opts,
        )
        .unwrap();
        for case in &cases {
            let outcome = run_case(case, &target.spec, None);
            let expected = if case.targets_flaw == Some(flaw) {
                Verdict::VulnerableConfirmed
            } else {
                Verdict::Secure
            };
            assert_eq!(
                outcome.verdict,
                expected,
                "case {} under single flaw {}\nevidence tail: {:?}",
                case.id,
                flaw.label(),
                outcome.evidence.iter().rev().take(6).collect::<Vec<_>>()
            );
        }
    }

    let elapsed = started.elapsed();
    assert!(
        elapsed < Duration::from_secs(300),
        "per-flaw isolation took {elapsed:?}, budget is 5 min"
    );
    pass(
        3,
        "per-flaw isolation",
        format!(
            "6 single-flaw configs x {} cases in {elapsed:?}",
            cases.len()
        ),
    );
}

// ---------------------------------------------------------------- C4 --

/// Reference walk of the hardened server's consumption of one byte
/// stream: predicts, frame by frame, how many replies must come back and
/// which of them must be errors. Independent of the server code path —
/// it re-derives the state machine from the protocol rules.
struct HardenedMirror<'a> {
    sent: &'a [u8],
    replies: &'a [Frame],
    offset: usize,
    reply_idx: usize,
    phase: MirrorPhase,
    transfer: Option<(u32, u16)>,
}

#[derive(PartialEq, Clone, Copy)]
enum MirrorPhase {
    Start,
    Greeted,
    Transferring,
}

impl<'a> HardenedMirror<'a> {
    fn new(sent: &'a [u8], replies: &'a [Frame]) -> Self {
        HardenedMirror {
            sent,
            replies,
            offset: 0,
            reply_idx: 0,
            phase: MirrorPhase::Start,
            transfer: None,
        }
    }

    fn take_reply(&mut self, context: &str) -> Result<&'a Frame, String> {
        let frame = self
            .replies
            .get(self.reply_idx)
            .ok_or_else(|| format!("missing reply: {context}"))?;
        self.reply_idx += 1;
        Ok(frame)
    }

    fn expect_err(&mut self, code: u8, context: &str) -> Result<(), String> {
        let frame = self.take_reply(context)?;
        if frame.opcode != OP_ERR || frame.payload.first() != Some(&code) {
            return Err(format!(
                "{context}: expected ERR {code:#04X}, got {} {:?}",
                frame.opcode_name(),
                frame.payload.first()
            ));
        }
        Ok(())
    }

    fn expect_ok(&mut self, context: &str) -> Result<(), String> {
        let frame = self.take_reply(context)?;
        if frame.opcode != OP_OK {
            return Err(format!(
                "{context}: expected OK, got {}",
                frame.opcode_name()
            ));
        }
        Ok(())
    }

    fn finish(&self, context: &str) -> Result<(), String> {
        if self.reply_idx != self.replies.len() {
            return Err(format!(
                "{context}: {} extra replies after the stream should have ended",
                self.replies.len() - self.reply_idx
            ));
        }
        Ok(())
    }

    fn filename_denied(name: &str) -> bool {
        let p = Path::new(name);
        p.is_absolute()
            || p.components()
                .any(|c| matches!(c, std::path::Component::ParentDir))
    }

    fn verify(mut self) -> Result<(), String> {
        loop {
            let rem = &self.sent[self.offset..];
            if rem.is_empty() {
                return self.finish("clean end of stream");
            }
            if rem.len() < 8 {
                self.expect_err(ERR_MALFORMED, "truncated header")?;
                return self.finish("after truncated header");
            }
            let declared = u32::from_be_bytes([rem[4], rem[5], rem[6], rem[7]]) as usize;
            // Bound check happens on the header, before the body read.
            if declared > DEFAULT_MAX_FILE_SIZE as usize {
                self.expect_err(ERR_FRAME_TOO_LARGE, "oversize declared length")?;
                return self.finish("after oversize declared length");
            }
            if rem.len() < 8 + declared + 1 {
                self.expect_err(ERR_MALFORMED, "truncated body")?;
                return self.finish("after truncated body");
            }
            let magic = [rem[0], rem[1]];
            let version = rem[2];
            let opcode = rem[3];
            let body = &rem[8..8 + declared];
            let wire_checksum = rem[8 + declared];
            self.offset += 8 + declared + 1;

            if magic != protocol::MAGIC || version != protocol::VERSION {
                self.expect_err(ERR_MALFORMED, "bad magic/version")?;
                return self.finish("after bad magic/version");
            }
            if protocol::checksum(body) != wire_checksum {
                self.expect_err(ERR_MALFORMED, "bad checksum")?;
                return self.finish("after bad checksum");
            }
            if !protocol::is_known_opcode(opcode) {
                self.expect_err(ERR_UNKNOWN_OP, "unknown opcode")?;
                continue;
            }
            let payload = match decode_payload(opcode, body) {
                Ok(p) => p,
                Err(_) => {
                    self.expect_err(ERR_MALFORMED, "malformed payload body")?;
                    continue;
                }
            };
            match payload {
                OpPayload::Hello { .. } => {
                    if self.phase == MirrorPhase::Start {
                        self.expect_ok("HELLO")?;
                        self.phase = MirrorPhase::Greeted;
                    } else {
                        self.expect_err(ERR_BAD_SEQUENCE, "HELLO out of phase")?;
                    }
                }
                OpPayload::Bye => {
                    self.expect_ok("BYE")?;
                    return self.finish("after BYE");
                }
                OpPayload::PutReq {
                    filename,
                    file_size,
                    block_size,
                } => {
                    if self.phase != MirrorPhase::Greeted {
                        self.expect_err(ERR_BAD_SEQUENCE, "PUT_REQ out of phase")?;
                    } else if block_size == 0 {
                        self.expect_err(ERR_INVALID_VALUE, "zero block_size")?;
                    } else if file_size > DEFAULT_MAX_FILE_SIZE {
                        self.expect_err(ERR_FRAME_TOO_LARGE, "oversize file_size")?;
                    } else if Self::filename_denied(&filename) {
                        self.expect_err(ERR_PATH_DENIED, "denied filename")?;
                    } else {
                        self.expect_ok("PUT_REQ")?;
                        self.phase = MirrorPhase::Transferring;
                        self.transfer = Some((file_size, block_size));
                    }
                }
                OpPayload::Data { block_index, data } => match self.transfer {
                    Some((fs, bs)) if self.phase == MirrorPhase::Transferring => {
                        if data.len() > bs as usize {
                            self.expect_err(ERR_FRAME_TOO_LARGE, "oversize DATA")?;
                        } else if u64::from(block_index) >= u64::from(fs).div_ceil(u64::from(bs)) {
                            self.expect_err(ERR_INVALID_VALUE, "DATA index out of range")?;
                        } else {
                            self.expect_ok("DATA")?;
                        }
                    }
                    _ => self.expect_err(ERR_BAD_SEQUENCE, "DATA out of phase")?,
                },
                OpPayload::PutCommit => {
                    if self.phase == MirrorPhase::Transferring {
                        // Filesystem success depends on the (mutated)
                        // name; either an OK or an io-shaped refusal is
                        // in contract.
                        let frame = self.take_reply("PUT_COMMIT")?;
                        let ok = frame.opcode == OP_OK
                            || (frame.opcode == OP_ERR
                                && frame.payload.first() == Some(&ERR_INVALID_VALUE));
                        if !ok {
                            return Err("PUT_COMMIT: expected OK or INVALID_VALUE".into());
                        }
                        self.phase = MirrorPhase::Greeted;
                        self.transfer = None;
                    } else {
                        self.expect_err(ERR_BAD_SEQUENCE, "PUT_COMMIT out of phase")?;
                    }
                }
                OpPayload::GetReq { filename } => {
                    if self.phase != MirrorPhase::Greeted {
                        self.expect_err(ERR_BAD_SEQUENCE, "GET_REQ out of phase")?;
                    } else if Self::filename_denied(&filename) {
                        self.expect_err(ERR_PATH_DENIED, "denied GET filename")?;
                    } else {
                        // Found or not depends on sandbox contents; the
                        // shape is pinned: one error, or FILE_INFO plus
                        // the announced number of DATA frames.
                        let frame = self.take_reply("GET_REQ")?;
                        match frame.opcode {
                            OP_ERR => {}
                            OP_FILE_INFO if frame.payload.len() == 4 => {
                                let size = u32::from_be_bytes([
                                    frame.payload[0],
                                    frame.payload[1],
                                    frame.payload[2],
                                    frame.payload[3],
                                ]) as usize;
                                let chunks = size.div_ceil(GET_CHUNK);
                                for _ in 0..chunks {
                                    let data = self.take_reply("GET DATA run")?;
                                    if data.opcode != OP_DATA {
                                        return Err("GET: expected DATA frame".into());
                                    }
                                }
                            }
                            _ => return Err("GET_REQ: expected ERR or FILE_INFO".into()),
                        }
                    }
                }
                // Reply opcodes from a client are sequence violations.
                OpPayload::Ok { .. } | OpPayload::Err { .. } | OpPayload::FileInfo { .. } => {
                    self.expect_err(ERR_BAD_SEQUENCE, "reply opcode from client")?;
                }
            }
        }
    }
}

/// Build one mutated stream: an honest script with 0..=3 corruptions, or
/// occasionally raw noise.
fn mutated_stream(rng: &mut ChaCha20Rng) -> Vec<u8> {
    fn frame(p: &OpPayload) -> Vec<u8> {
        p.to_frame_bytes()
    }
    let names = [
        "a.bin",
        "dir/inner.bin",
        "../secret.txt",
        "/etc/passwd",
        "x",
        "",
        "weird\u{00}name",
    ];
    let sizes = [
        0u32,
        1,
        7,
        255,
        4096,
        DEFAULT_MAX_FILE_SIZE,
        DEFAULT_MAX_FILE_SIZE + 1,
        0x8000_0000,
    ];
    let blocks = [0u16, 1, 4, 512, 65535];

    let mut stream = Vec::new();
    if rng.gen_bool(0.1) {
        // Raw noise.
        let len = rng.gen_range(0..200);
        stream.extend((0..len).map(|_| rng.gen::<u8>()));
        return stream;
    }
    stream.extend(frame(&OpPayload::Hello {
        client_id: "fuzz".into(),
    }));
    match rng.gen_range(0..5) {
        0 => {
            stream.extend(frame(&OpPayload::Bye));
        }
        1 => {
            let name = names[rng.gen_range(0..names.len())];
            let bs = blocks[rng.gen_range(0..blocks.len())];
            let fs = sizes[rng.gen_range(0..sizes.len())];
            stream.extend(frame(&OpPayload::PutReq {
                filename: name.into(),
                file_size: fs,
                block_size: bs,
            }));
            for i in 0..rng.gen_range(0..6u32) {
                let len = rng.gen_range(0..600);
                stream.extend(frame(&OpPayload::Data {
                    block_index: if rng.gen_bool(0.8) { i } else { rng.gen() },
                    data: (0..len).map(|_| rng.gen()).collect(),
                }));
            }
            stream.extend(frame(&OpPayload::PutCommit));
            stream.extend(frame(&OpPayload::Bye));
        }
        2 => {
            let name = names[rng.gen_range(0..names.len())];
            stream.extend(frame(&OpPayload::GetReq {
                filename: name.into(),
            }));
        }
        3 => {
            for _ in 0..rng.gen_range(1..30) {
                stream.extend(frame(&OpPayload::Hello {
                    client_id: "again".into(),
                }));
            }
        }
        _ => {
            for _ in 0..rng.gen_range(1..10) {
                let op: u8 = rng.gen();
                let len = rng.gen_range(0..40);
                let body: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
                stream.extend(encode_frame(op, &body));
            }
        }
    }

    for _ in 0..rng.gen_range(0..=3u32) {
        if stream.is_empty() {
            break;
        }
        match rng.gen_range(0..5) {
            0 => {
                let at = rng.gen_range(0..stream.len());
                stream[at] ^= 1 << rng.gen_range(0..8);
            }
            1 => {
                let at = rng.gen_range(0..=stream.len());
                stream.truncate(at);
            }
            2 => {
                let at = rng.gen_range(0..=stream.len());
                let extra: Vec<u8> = (0..rng.gen_range(1..16)).map(|_| rng.gen()).collect();
                stream.splice(at..at, extra);
            }
            3 => {
                // Overwrite a plausible declared_length field.
                if stream.len() >= 8 {
                    let at = rng.gen_range(0..stream.len().saturating_sub(7));
                    let v: u32 = if rng.gen_bool(0.5) {
                        rng.gen_range(0..100)
                    } else {
                        rng.gen()
                    };
                    stream[at + 4..at + 8].copy_from_slice(&v.to_be_bytes());
                }
            }
            _ => {
                let at = rng.gen_range(0..stream.len());
                stream[at] = rng.gen();
            }
        }
    }
    stream
}

/// Walk reply bytes into frames (server output is always well-framed).
fn parse_reply_frames(bytes: &[u8]) -> Vec<Frame> {
    let mut frames = Vec::new();
    let mut offset = 0;
    while offset < bytes.len() {
        let dec = decode_frame_slice(&bytes[offset..]);
        match dec.report.outcome {
            DecodeOutcome::Frame(frame) => {
                frames.push(frame);
                offset += dec.consumed;
            }
            _ => panic!(
                "server emitted an unframeable reply stream: {:?} at {offset}",
                dec.report.violations
            ),
        }
    }
    frames
}

#[test]
fn criterion_4_hardened_safety_under_fuzz() {
    let _guard = HEAVY.lock().unwrap();
    let started = Instant::now();
    let scratch = tempfile::tempdir().unwrap();
    let root = scratch.path().join("sandbox");
    std::fs::create_dir(&root).unwrap();
    let config = ServerConfig::new(root).with_read_timeout(Duration::from_millis(250));
    let handle = serve(config).unwrap();
    let canary_probe = &cft::server::DEFAULT_CANARY.as_bytes()[..12];

    let mut rng = ChaCha20Rng::seed_from_u64(0xFA57);
    let streams = 10_000usize;
    let mut total_replies = 0usize;
    for i in 0..streams {
        let stream_bytes = mutated_stream(&mut rng);
        let mut sock = TcpStream::connect(handle.local_addr()).unwrap();
        sock.set_nodelay(true).unwrap();
        sock.write_all(&stream_bytes).unwrap();
        sock.shutdown(std::net::Shutdown::Write).unwrap();
        sock.set_read_timeout(Some(Duration::from_secs(5))).unwrap();
        let mut reply_bytes = Vec::new();
        if let Err(e) = sock.read_to_end(&mut reply_bytes) {
            // Connection reset after the server closed is acceptable only
            // if nothing further was owed; surface everything else.
            panic!("stream {i}: read failed: {e}");
        }

        assert!(
            !reply_bytes
                .windows(canary_probe.len())
                .any(|w| w == canary_probe),
            "stream {i}: canary leaked from the hardened server\nsent: {}",
            hex::encode(&stream_bytes)
        );
        let replies = parse_reply_frames(&reply_bytes);
        total_replies += replies.len();
        if let Err(reason) = HardenedMirror::new(&stream_bytes, &replies).verify() {
            panic!(
                "stream {i}: reply contract violated: {reason}\nsent: {}\nreplies: {}",
                hex::encode(&stream_bytes),
                hex::encode(&reply_bytes)
            );
        }
    }
    assert_eq!(handle.crash_count(), 0, "hardened server must never crash");

    let elapsed = started.elapsed();
    assert!(
        elapsed < Duration::from_secs(120),
        "hardened fuzz took {elapsed:?}, budget is 2 min"
    );
    pass(
        4,
        "hardened safety under fuzz",
        format!("{streams} mutated streams, {total_replies} replies verified, zero leaks/crashes in {elapsed:?}"),
    );
}

// ---------------------------------------------------------------- C5 --

#[test]
fn criterion_5_repeatability() {
    let _guard = HEAVY.lock().unwrap();
    let started = Instant::now();
    let cases = builtin_cases();
    let opts = SelfHostOptions::fast();

    // Two consecutive self-hosted differential runs: identical verdicts.
    let verdict_map = |report: &cft::harness::SuiteReport| -> BTreeMap<String, (String, String)> {
        report
            .cases
            .iter()
            .map(|r| {
                (
                    r.id.clone(),
                    (r.flawed.verdict.to_string(), r.hardened.verdict.to_string()),
                )
            })
            .collect()
    };
    let run_once = || {
        let (flawed, hardened) = host_pair(&opts).unwrap();
        cft::harness::run_suite(&flawed.spec, &hardened.spec, &cases)
    };
    let first = run_once();
    let second = run_once();
    assert!(first.pass && second.pass);
    assert_eq!(
        verdict_map(&first),
        verdict_map(&second),
        "consecutive suite runs disagreed"
    );

    // Twenty hardened-only sweeps: nothing but SECURE.
    let mut sweeps = 0;
    for i in 0..20 {
        let hardened = host_target(&format!("hardened-{i}"), FlawSet::HARDENED, &opts).unwrap();
        for (id, verdict) in run_all_against(&hardened.spec, &cases) {
            assert_eq!(
                verdict,
                Verdict::Secure,
                "sweep {i}: case {id} was not SECURE against hardened"
            );
        }
        sweeps += 1;
    }

    let elapsed = started.elapsed();
    pass(
        5,
        "repeatability",
        format!("2 identical differential runs + {sweeps} clean hardened sweeps in {elapsed:?}"),
    );
}

// ---------------------------------------------------------------- C6 --

#[test]
fn criterion_6_trace_fidelity_for_len_up() {
    let _guard = HEAVY.lock().unwrap();
    let cases = builtin_cases();
    let len_up = cases.iter().find(|c| c.id == "C-LEN-UP").unwrap();
    let opts = SelfHostOptions::fast();
    let hardened = host_target("hardened", FlawSet::HARDENED, &opts).unwrap();

    let scratch = tempfile::tempdir().unwrap();
    let trace_path = scratch.path().join("len-up.trace");
    let sink = Arc::new(TraceSink::create(&trace_path).unwrap());
    let outcome = run_case(len_up, &hardened.spec, Some(sink));
    assert_eq!(outcome.verdict, Verdict::Secure, "{:?}", outcome.evidence);

    // The decoded trace must flag the length mismatch and show residue.
    let listing = decode_trace(&trace_path).unwrap();
    assert!(
        listing.has_violation("length-mismatch"),
        "listing: {}",
        cft::trace::render_listing(&listing)
    );
    assert!(listing.has_residue());

    // Captured client-side bytes equal the subversion layer's resolved
    // frames byte for byte.
    let expected: Vec<u8> = len_up
        .script
        .iter()
        .flat_map(|step| match step {
            Step::Raw { spec, .. } => spec.resolve(),
            _ => panic!("C-LEN-UP script is a single raw frame"),
        })
        .collect();
    let mut captured = Vec::new();
    for line in load_trace(&trace_path).unwrap() {
        if let TraceLine::Record(rec) = line {
            if rec.direction == Direction::ClientToServer {
                captured.extend_from_slice(&rec.bytes);
            }
        }
    }
    assert_eq!(
        captured, expected,
        "captured bytes differ from resolved frames"
    );

    pass(
        6,
        "trace fidelity",
        format!(
            "length-mismatch flagged, residue shown, {} captured bytes exact",
            captured.len()
        ),
    );
}

// ---------------------------------------------------------------- C7 --

#[test]
fn criterion_7_crash_isolation_between_sessions() {
    let _guard = HEAVY.lock().unwrap();
    let scratch = tempfile::tempdir().unwrap();
    let root = scratch.path().join("sandbox");
    std::fs::create_dir(&root).unwrap();
    let config = ServerConfig::new(root).with_flaws(FlawSet::single(Flaw::F2OverrunLeak));
    let handle = serve(config).unwrap();
    let addr = handle.local_addr();

    // Session A: a long honest PUT, running concurrently.
    let content: Vec<u8> = (0..2_000_000u32).map(|i| (i * 31 % 251) as u8).collect();
    let put_content = content.clone();
    let put_thread = std::thread::spawn(move || {
        let mut session = Session::connect(addr, None).unwrap();
        session.hello("long-put").unwrap();
        session.put_file("large.bin", &put_content, 1024)
    });

    // Session B: trigger the crash while A is mid-transfer.
    std::thread::sleep(Duration::from_millis(30));
    let mut victim = Session::connect(addr, None).unwrap();
    victim.hello("crasher").unwrap();
    victim
        .send_payload(&OpPayload::PutReq {
            filename: "crash.bin".into(),
            file_size: 8,
            block_size: 4,
        })
        .unwrap();
    assert_eq!(victim.receive(None).reply_opcode(), Some(OP_OK));
    victim
        .send_payload(&OpPayload::Data {
            block_index: 0,
            data: vec![0xCC; 4 + 300],
        })
        .unwrap();
    assert_eq!(victim.receive(None), cft::client::ServerEvent::Closed);

    let report = put_thread.join().unwrap().unwrap();
    assert!(
        matches!(report.status, TransferStatus::Completed),
        "in-flight honest PUT must complete: {:?}",
        report.status
    );
    assert_eq!(handle.crash_count(), 1);
    let written = std::fs::read(handle.config().sandbox_root.join("large.bin")).unwrap();
    assert_eq!(written, content, "transferred bytes must be intact");

    pass(
        7,
        "crash isolation",
        format!(
            "victim crashed (counter 1), concurrent PUT of {} bytes completed intact",
            content.len()
        ),
    );
}
