//! Per-connection protocol state machine and flaw behaviors.
//!
//! [`handle_frame`] is the rule enforcer: given the session state, one
//! decode report, and the server context it produces reply frames, events,
//! and a connection disposition. It is deterministic for a fixed frame
//! script, flaw set, and sandbox contents, which is what makes every
//! exploit assertable in tests.

use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::PathBuf;

use crate::protocol::{
    self, encode_frame, DecodeOutcome, DecodeReport, OpPayload, Violation, ERR_BAD_SEQUENCE,
    ERR_FRAME_TOO_LARGE, ERR_INVALID_VALUE, ERR_MALFORMED, ERR_PATH_DENIED, ERR_UNKNOWN_OP, OP_OK,
};

use super::paths::{resolve_path, PathResolution};
use super::Shared;

/// Bytes of simulated adjacent memory an overrun may leak per reply.
pub const LEAK_WINDOW: usize = 64;
/// Overrun length past which the session dies instead of leaking.
pub const CRASH_OVERRUN_THRESHOLD: usize = 256;
/// Capacity of the stale buffer pool shared across sessions (F5).
pub const STALE_POOL_CAP: usize = 256;
/// Server-to-client DATA chunk size for GET transfers.
pub const GET_CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Start,
    Greeted,
    Transferring,
    Closed,
}

impl Phase {
    pub fn name(&self) -> &'static str {
        match self {
            Phase::Start => "Start",
            Phase::Greeted => "Greeted",
            Phase::Transferring => "Transferring",
            Phase::Closed => "Closed",
        }
    }
}

/// Transfer bookkeeping while a PUT is open.
#[derive(Debug, Clone)]
pub struct Transfer {
    pub filename: String,
    pub dest: PathBuf,
    pub file_size: u32,
    pub block_size: u16,
    /// Received blocks by index; the key set doubles as the
    /// blocks-received record.
    pub blocks: std::collections::BTreeMap<u32, Vec<u8>>,
}

#[derive(Debug, Clone)]
pub struct SessionState {
    pub serial: u64,
    pub peer: String,
    pub phase: Phase,
    pub transfer: Option<Transfer>,
}

impl SessionState {
    pub fn new(serial: u64, peer: String) -> SessionState {
        SessionState {
            serial,
            peer,
            phase: Phase::Start,
            transfer: None,
        }
    }
}

/// Observable side effects of one frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SessionEvent {
    Leak(Vec<u8>),
    SimulatedCrash,
    SequenceAcceptedIllegally,
}

/// What the connection does after the replies are written.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Disposition {
    Open,
    /// Orderly close (BYE, or an unrecoverable framing error already
    /// answered with MALFORMED).
    Close,
    /// Simulated crash: no reply, connection torn down mid-protocol.
    Abort,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HandleOutcome {
    pub replies: Vec<Vec<u8>>,
    pub events: Vec<SessionEvent>,
    pub disposition: Disposition,
}

impl HandleOutcome {
    fn open() -> HandleOutcome {
        HandleOutcome {
            replies: Vec::new(),
            events: Vec::new(),
            disposition: Disposition::Open,
        }
    }

    fn reply(mut self, frame: Vec<u8>) -> HandleOutcome {
        self.replies.push(frame);
        self
    }

    fn event(mut self, event: SessionEvent) -> HandleOutcome {
        self.events.push(event);
        self
    }

    fn close(mut self) -> HandleOutcome {
        self.disposition = Disposition::Close;
        self
    }
}

fn err_frame(code: u8, message: impl Into<String>) -> Vec<u8> {
    OpPayload::Err {
        code,
        message: message.into(),
    }
    .to_frame_bytes()
}

fn ok_frame(message: impl Into<String>) -> Vec<u8> {
    OpPayload::Ok {
        message: message.into(),
    }
    .to_frame_bytes()
}

/// OK reply whose message body carries raw bytes (leaks are byte runs,
/// not guaranteed UTF-8).
fn ok_raw(prefix: &str, raw: &[u8]) -> Vec<u8> {
    let mut payload = prefix.as_bytes().to_vec();
    payload.extend_from_slice(raw);
    encode_frame(OP_OK, &payload)
}

/// Maximum-size check on a 32-bit size field. Hardened compares unsigned;
/// under F4 the value is reinterpreted as signed 32-bit, so anything with
/// the top bit set tests negative and slips past the bound.
pub fn size_within_limit(value: u32, max: u32, f4_signed: bool) -> bool {
    if f4_signed {
        (value as i32) <= (max as i32)
    } else {
        value <= max
    }
}

/// Simulated adjacent-memory region: the canary repeated.
fn adjacent_region(canary: &str, len: usize) -> Vec<u8> {
    canary
        .as_bytes()
        .iter()
        .copied()
        .cycle()
        .take(len)
        .collect()
}

/// Process one decode report against the session state machine.
pub fn handle_frame(
    state: &mut SessionState,
    report: &DecodeReport,
    ctx: &Shared,
) -> HandleOutcome {
    let flaws = ctx.config.flaws;
    match &report.outcome {
        DecodeOutcome::Idle | DecodeOutcome::Closed => HandleOutcome::open(),
        DecodeOutcome::Truncated { consumed, partial } => {
            // F3 trusts the length field: whatever arrived by the deadline
            // is processed as the payload. Hardened answers MALFORMED and
            // drops the desynced stream.
            if flaws.f3_length_smearing {
                if let Some(p) = partial {
                    if p.magic == protocol::MAGIC && p.version == protocol::VERSION {
                        return dispatch_body(state, p.opcode, &p.payload_so_far, ctx);
                    }
                }
            }
            if *consumed > 0 {
                HandleOutcome::open()
                    .reply(err_frame(
                        ERR_MALFORMED,
                        format!("truncated frame after {consumed} bytes"),
                    ))
                    .close()
            } else {
                HandleOutcome::open().close()
            }
        }
        DecodeOutcome::Frame(frame) => {
            let bad_framing = report
                .violations
                .iter()
                .any(|v| matches!(v, Violation::BadMagic { .. } | Violation::BadVersion { .. }));
            if bad_framing {
                return HandleOutcome::open()
                    .reply(err_frame(ERR_MALFORMED, "bad magic or version"))
                    .close();
            }
            let bad_checksum = report
                .violations
                .iter()
                .any(|v| matches!(v, Violation::BadChecksum { .. }));
            if bad_checksum && !flaws.f3_length_smearing {
                return HandleOutcome::open()
                    .reply(err_frame(ERR_MALFORMED, "checksum mismatch"))
                    .close();
            }
            dispatch_body(state, frame.opcode, &frame.payload, ctx)
        }
    }
}

/// Opcode dispatch once framing has been accepted.
fn dispatch_body(state: &mut SessionState, opcode: u8, body: &[u8], ctx: &Shared) -> HandleOutcome {
    if !protocol::is_known_opcode(opcode) {
        return handle_unknown_opcode(state, opcode, ctx);
    }
    match protocol::decode_payload(opcode, body) {
        Ok(payload) => handle_op(state, payload, ctx),
        Err(e) => HandleOutcome::open().reply(err_frame(ERR_MALFORMED, e.to_string())),
    }
}

fn handle_unknown_opcode(state: &SessionState, opcode: u8, ctx: &Shared) -> HandleOutcome {
    if ctx.config.flaws.f6_debug_disclosure {
        // The mis-keyed command answers with internals instead of an error.
        let table = ctx.session_table_snapshot();
        let dump = format!(
            "debug: unhandled op 0x{:02X}; root={}; flaws={}; sessions=[{}]; this={}:{}",
            opcode,
            ctx.config.sandbox_root.display(),
            ctx.config.flaws,
            table,
            state.serial,
            state.phase.name(),
        );
        HandleOutcome::open().reply(ok_frame(dump))
    } else {
        HandleOutcome::open().reply(err_frame(
            ERR_UNKNOWN_OP,
            format!("unknown opcode 0x{opcode:02X}"),
        ))
    }
}

fn sequence_error(expected: &str, state: &SessionState) -> HandleOutcome {
    HandleOutcome::open().reply(err_frame(
        ERR_BAD_SEQUENCE,
        format!("{expected} not valid in phase {}", state.phase.name()),
    ))
}

fn handle_op(state: &mut SessionState, payload: OpPayload, ctx: &Shared) -> HandleOutcome {
    let flaws = ctx.config.flaws;
    match payload {
        OpPayload::Hello { client_id } => {
            if state.phase == Phase::Start {
                state.phase = Phase::Greeted;
                HandleOutcome::open().reply(ok_frame(format!("hello {client_id}")))
            } else if flaws.f5_sequence_lax {
                state.phase = Phase::Greeted;
                state.transfer = None;
                HandleOutcome::open()
                    .event(SessionEvent::SequenceAcceptedIllegally)
                    .reply(ok_frame(format!("hello again {client_id}")))
            } else {
                sequence_error("HELLO", state)
            }
        }
        OpPayload::Bye => {
            state.phase = Phase::Closed;
            HandleOutcome::open().reply(ok_frame("bye")).close()
        }
        OpPayload::PutReq {
            filename,
            file_size,
            block_size,
        } => {
            if state.phase == Phase::Greeted {
                start_transfer(state, filename, file_size, block_size, ctx)
            } else if flaws.f5_sequence_lax {
                start_transfer(state, filename, file_size, block_size, ctx)
                    .event(SessionEvent::SequenceAcceptedIllegally)
            } else {
                sequence_error("PUT_REQ", state)
            }
        }
        OpPayload::Data { block_index, data } => {
            if state.phase == Phase::Transferring && state.transfer.is_some() {
                write_block(state, block_index, &data, ctx)
            } else if flaws.f5_sequence_lax {
                stale_pool_write(block_index, &data, ctx)
            } else {
                sequence_error("DATA", state)
            }
        }
        OpPayload::PutCommit => {
            if state.phase == Phase::Transferring && state.transfer.is_some() {
                commit_transfer(state)
            } else if flaws.f5_sequence_lax {
                HandleOutcome::open()
                    .event(SessionEvent::SequenceAcceptedIllegally)
                    .reply(ok_frame("commit (no active transfer)"))
            } else {
                sequence_error("PUT_COMMIT", state)
            }
        }
        OpPayload::GetReq { filename } => {
            if state.phase == Phase::Greeted {
                serve_get(&filename, ctx)
            } else if flaws.f5_sequence_lax {
                serve_get(&filename, ctx).event(SessionEvent::SequenceAcceptedIllegally)
            } else {
                sequence_error("GET_REQ", state)
            }
        }
        // Server-to-client opcodes arriving at the server are protocol
        // violations in every phase.
        OpPayload::Ok { .. } | OpPayload::Err { .. } | OpPayload::FileInfo { .. } => {
            if flaws.f5_sequence_lax {
                HandleOutcome::open()
                    .event(SessionEvent::SequenceAcceptedIllegally)
                    .reply(ok_frame("noted"))
            } else {
                sequence_error("reply opcode", state)
            }
        }
    }
}

fn start_transfer(
    state: &mut SessionState,
    filename: String,
    file_size: u32,
    block_size: u16,
    ctx: &Shared,
) -> HandleOutcome {
    let flaws = ctx.config.flaws;
    if block_size == 0 {
        if flaws.f4_signed_confusion {
            // ceil(file_size / block_size) with block_size = 0: the flawed
            // build computes the block count without guarding the divisor.
            return HandleOutcome::open()
                .event(SessionEvent::SimulatedCrash)
                .abort();
        }
        return HandleOutcome::open()
            .reply(err_frame(ERR_INVALID_VALUE, "block_size must be nonzero"));
    }
    if !size_within_limit(
        file_size,
        ctx.config.max_file_size,
        flaws.f4_signed_confusion,
    ) {
        return HandleOutcome::open().reply(err_frame(
            ERR_FRAME_TOO_LARGE,
            format!(
                "file_size {file_size} exceeds limit {}",
                ctx.config.max_file_size
            ),
        ));
    }
    match resolve_path(&ctx.config.sandbox_root, &filename, flaws.f1_path_traversal) {
        PathResolution::Denied { reason } => {
            HandleOutcome::open().reply(err_frame(ERR_PATH_DENIED, reason))
        }
        PathResolution::Resolved(dest) => {
            state.transfer = Some(Transfer {
                filename: filename.clone(),
                dest,
                file_size,
                block_size,
                blocks: Default::default(),
            });
            state.phase = Phase::Transferring;
            HandleOutcome::open().reply(ok_frame(format!("put {filename} accepted")))
        }
    }
}

fn write_block(
    state: &mut SessionState,
    block_index: u32,
    data: &[u8],
    ctx: &Shared,
) -> HandleOutcome {
    let flaws = ctx.config.flaws;
    let transfer = state.transfer.as_mut().expect("transfer checked by caller");
    let block_size = transfer.block_size as usize;
    if data.len() > block_size {
        if flaws.f2_overrun_leak {
            let overrun = data.len() - block_size;
            if overrun > CRASH_OVERRUN_THRESHOLD {
                return HandleOutcome::open()
                    .event(SessionEvent::SimulatedCrash)
                    .abort();
            }
            // The write runs past the block buffer into adjacent memory;
            // the acknowledgment echoes back what it clobbered.
            let leaked = adjacent_region(&ctx.config.canary_secret, overrun.min(LEAK_WINDOW));
            transfer
                .blocks
                .insert(block_index, data[..block_size].to_vec());
            return HandleOutcome::open()
                .event(SessionEvent::Leak(leaked.clone()))
                .reply(ok_raw(
                    &format!("wrote block {block_index} (+{overrun} past buffer); adjacent="),
                    &leaked,
                ));
        }
        return HandleOutcome::open().reply(err_frame(
            ERR_FRAME_TOO_LARGE,
            format!("data length {} exceeds block_size {block_size}", data.len()),
        ));
    }
    let block_count = (u64::from(transfer.file_size)).div_ceil(block_size as u64);
    if u64::from(block_index) >= block_count {
        return HandleOutcome::open().reply(err_frame(
            ERR_INVALID_VALUE,
            format!("block_index {block_index} out of range (blocks: {block_count})"),
        ));
    }
    transfer.blocks.insert(block_index, data.to_vec());
    HandleOutcome::open().reply(ok_frame(format!("block {block_index} ok")))
}

/// F5 path for DATA with no open transfer: the bytes land in a buffer pool
/// retained across sessions, and the acknowledgment echoes the previous
/// occupant's residue.
fn stale_pool_write(block_index: u32, data: &[u8], ctx: &Shared) -> HandleOutcome {
    let mut pool = ctx.stale_pool.lock().expect("stale pool poisoned");
    let residue = pool.clone();
    *pool = data[..data.len().min(STALE_POOL_CAP)].to_vec();
    drop(pool);
    let mut outcome = HandleOutcome::open()
        .event(SessionEvent::SequenceAcceptedIllegally)
        .event(SessionEvent::Leak(residue.clone()));
    outcome = outcome.reply(ok_raw(
        &format!("stale block {block_index} accepted; residue="),
        &residue,
    ));
    outcome
}

fn commit_transfer(state: &mut SessionState) -> HandleOutcome {
    let transfer = state.transfer.take().expect("transfer checked by caller");
    state.phase = Phase::Greeted;
    match write_assembled(&transfer) {
        Ok(bytes_written) => HandleOutcome::open().reply(ok_frame(format!(
            "committed {} ({bytes_written} bytes)",
            transfer.filename
        ))),
        Err(e) => {
            HandleOutcome::open().reply(err_frame(ERR_INVALID_VALUE, format!("commit failed: {e}")))
        }
    }
}

fn write_assembled(transfer: &Transfer) -> std::io::Result<u64> {
    if let Some(parent) = transfer.dest.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut file = OpenOptions::new()
        .write(true)
        .create(true)
        .truncate(true)
        .open(&transfer.dest)?;
    let file_size = u64::from(transfer.file_size);
    for (index, data) in &transfer.blocks {
        let offset = u64::from(*index) * u64::from(transfer.block_size);
        if offset >= file_size {
            continue;
        }
        let allowed = (file_size - offset).min(data.len() as u64) as usize;
        file.seek(SeekFrom::Start(offset))?;
        file.write_all(&data[..allowed])?;
    }
    file.set_len(file_size)?;
    Ok(file_size)
}

fn serve_get(filename: &str, ctx: &Shared) -> HandleOutcome {
    let flaws = ctx.config.flaws;
    let path = match resolve_path(&ctx.config.sandbox_root, filename, flaws.f1_path_traversal) {
        PathResolution::Denied { reason } => {
            return HandleOutcome::open().reply(err_frame(ERR_PATH_DENIED, reason));
        }
        PathResolution::Resolved(p) => p,
    };
    let mut file = match File::open(&path) {
        Ok(f) => f,
        Err(e) => {
            return HandleOutcome::open().reply(err_frame(
                ERR_INVALID_VALUE,
                format!("no such file {filename:?}: {e}"),
            ));
        }
    };
    let mut contents = Vec::new();
    if let Err(e) = file.read_to_end(&mut contents) {
        return HandleOutcome::open()
            .reply(err_frame(ERR_INVALID_VALUE, format!("read failed: {e}")));
    }
    if contents.len() > u32::MAX as usize
        || !size_within_limit(
            contents.len() as u32,
            ctx.config.max_file_size,
            flaws.f4_signed_confusion,
        )
    {
        return HandleOutcome::open().reply(err_frame(
            ERR_FRAME_TOO_LARGE,
            format!("file is {} bytes, over the limit", contents.len()),
        ));
    }
    let mut outcome = HandleOutcome::open().reply(
        OpPayload::FileInfo {
            file_size: contents.len() as u32,
        }
        .to_frame_bytes(),
    );
    for (index, chunk) in contents.chunks(GET_CHUNK).enumerate() {
        outcome = outcome.reply(
            OpPayload::Data {
                block_index: index as u32,
                data: chunk.to_vec(),
            }
            .to_frame_bytes(),
        );
    }
    outcome
}

impl HandleOutcome {
    fn abort(mut self) -> HandleOutcome {
        self.disposition = Disposition::Abort;
        self
    }
}
