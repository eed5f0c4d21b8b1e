//! CFT wire format: frames, opcodes, typed payloads, checksum.
//!
//! A frame on the wire is:
//!
//! ```text
//! magic(2) version(1) opcode(1) declared_length(4, BE) payload(declared_length) checksum(1)
//! ```
//!
//! The checksum is an XOR fold of the payload bytes only. All multi-byte
//! integers are big-endian. Decoding is deliberately lenient: every
//! violation is reported in a [`DecodeReport`] instead of being repaired,
//! so malformed traffic stays observable end to end.

use std::io::{ErrorKind, Read};
use std::time::{Duration, Instant};

use thiserror::Error;

/// Frame magic, `"FT"`.
pub const MAGIC: [u8; 2] = [0x46, 0x54];
/// Protocol version byte.
pub const VERSION: u8 = 0x01;
/// Fixed bytes before the payload: magic + version + opcode + declared_length.
pub const HEADER_LEN: usize = 8;
/// Total framing overhead: header plus the trailing checksum byte.
pub const FRAME_OVERHEAD: usize = HEADER_LEN + 1;

pub const OP_HELLO: u8 = 0x01;
pub const OP_OK: u8 = 0x02;
pub const OP_ERR: u8 = 0x03;
pub const OP_PUT_REQ: u8 = 0x10;
pub const OP_DATA: u8 = 0x11;
pub const OP_PUT_COMMIT: u8 = 0x12;
pub const OP_GET_REQ: u8 = 0x20;
pub const OP_FILE_INFO: u8 = 0x21;
pub const OP_BYE: u8 = 0x7F;

/// All opcodes defined by the protocol, in opcode order.
pub const KNOWN_OPCODES: [u8; 9] = [
    OP_HELLO,
    OP_OK,
    OP_ERR,
    OP_PUT_REQ,
    OP_DATA,
    OP_PUT_COMMIT,
    OP_GET_REQ,
    OP_FILE_INFO,
    OP_BYE,
];

pub fn is_known_opcode(opcode: u8) -> bool {
    KNOWN_OPCODES.contains(&opcode)
}

pub fn opcode_name(opcode: u8) -> Option<&'static str> {
    match opcode {
        OP_HELLO => Some("HELLO"),
        OP_OK => Some("OK"),
        OP_ERR => Some("ERR"),
        OP_PUT_REQ => Some("PUT_REQ"),
        OP_DATA => Some("DATA"),
        OP_PUT_COMMIT => Some("PUT_COMMIT"),
        OP_GET_REQ => Some("GET_REQ"),
        OP_FILE_INFO => Some("FILE_INFO"),
        OP_BYE => Some("BYE"),
        _ => None,
    }
}

/// Error codes carried by `ERR` replies.
pub const ERR_UNKNOWN_OP: u8 = 0x01;
pub const ERR_BAD_SEQUENCE: u8 = 0x02;
pub const ERR_PATH_DENIED: u8 = 0x03;
pub const ERR_INVALID_VALUE: u8 = 0x04;
pub const ERR_FRAME_TOO_LARGE: u8 = 0x05;
pub const ERR_MALFORMED: u8 = 0x06;

pub fn err_code_name(code: u8) -> &'static str {
    match code {
        ERR_UNKNOWN_OP => "UNKNOWN_OP",
        ERR_BAD_SEQUENCE => "BAD_SEQUENCE",
        ERR_PATH_DENIED => "PATH_DENIED",
        ERR_INVALID_VALUE => "INVALID_VALUE",
        ERR_FRAME_TOO_LARGE => "FRAME_TOO_LARGE",
        ERR_MALFORMED => "MALFORMED",
        _ => "UNKNOWN_ERR_CODE",
    }
}

/// XOR fold of the payload bytes; 0x00 for an empty payload.
pub fn checksum(payload: &[u8]) -> u8 {
    payload.iter().fold(0u8, |acc, b| acc ^ b)
}

/// One wire frame as read off the stream. Decoded frames may carry
/// violations (wrong magic, bad checksum, unknown opcode) — the fields
/// hold exactly what was on the wire.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub magic: [u8; 2],
    pub version: u8,
    pub opcode: u8,
    pub declared_length: u32,
    pub payload: Vec<u8>,
    pub checksum: u8,
}

impl Frame {
    /// Well-formed frame for an opcode/payload pair.
    pub fn well_formed(opcode: u8, payload: Vec<u8>) -> Frame {
        let cs = checksum(&payload);
        Frame {
            magic: MAGIC,
            version: VERSION,
            opcode,
            declared_length: payload.len() as u32,
            payload,
            checksum: cs,
        }
    }

    pub fn opcode_name(&self) -> &'static str {
        opcode_name(self.opcode).unwrap_or("UNKNOWN")
    }
}

/// Emit a well-formed frame: magic, version, opcode, declared_length =
/// payload length, payload, checksum. Output length is `9 + payload.len()`.
pub fn encode_frame(opcode: u8, payload: &[u8]) -> Vec<u8> {
    debug_assert!(payload.len() <= u32::MAX as usize);
    let mut out = Vec::with_capacity(FRAME_OVERHEAD + payload.len());
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(opcode);
    out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    out.extend_from_slice(payload);
    out.push(checksum(payload));
    out
}

/// One rule the frame broke. Decoding records every violation it sees
/// rather than silently repairing or aborting on the first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    BadMagic { found: [u8; 2] },
    BadVersion { found: u8 },
    LengthMismatch { declared: u32, actual: u32 },
    BadChecksum { expected: u8, found: u8 },
    UnknownOpcode { opcode: u8 },
    Truncated { consumed: usize },
}

impl Violation {
    pub fn kind(&self) -> &'static str {
        match self {
            Violation::BadMagic { .. } => "bad-magic",
            Violation::BadVersion { .. } => "bad-version",
            Violation::LengthMismatch { .. } => "length-mismatch",
            Violation::BadChecksum { .. } => "bad-checksum",
            Violation::UnknownOpcode { .. } => "unknown-opcode",
            Violation::Truncated { .. } => "truncated",
        }
    }

    /// True for violations that break framing itself (stream position can
    /// no longer be trusted), as opposed to a structurally intact frame
    /// with bad content.
    pub fn breaks_framing(&self) -> bool {
        !matches!(self, Violation::UnknownOpcode { .. })
    }
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::BadMagic { found } => {
                write!(f, "bad-magic: found {:02X} {:02X}", found[0], found[1])
            }
            Violation::BadVersion { found } => write!(f, "bad-version: found {found:02X}"),
            Violation::LengthMismatch { declared, actual } => {
                write!(f, "length-mismatch: declared {declared}, actual {actual}")
            }
            Violation::BadChecksum { expected, found } => {
                write!(
                    f,
                    "bad-checksum: expected {expected:02X}, found {found:02X}"
                )
            }
            Violation::UnknownOpcode { opcode } => write!(f, "unknown-opcode: {opcode:02X}"),
            Violation::Truncated { consumed } => {
                write!(f, "truncated: {consumed} bytes consumed")
            }
        }
    }
}

/// Header fields of a frame whose payload never fully arrived.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartialFrame {
    pub magic: [u8; 2],
    pub version: u8,
    pub opcode: u8,
    pub declared_length: u32,
    pub payload_so_far: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DecodeOutcome {
    /// A complete frame was read (it may still carry violations).
    Frame(Frame),
    /// The stream stalled or closed mid-frame. `partial` is present when
    /// at least the header arrived.
    Truncated {
        consumed: usize,
        partial: Option<PartialFrame>,
    },
    /// Nothing arrived before the timeout; no frame was in progress.
    Idle,
    /// The stream closed cleanly between frames.
    Closed,
}

/// Result of one frame-decode attempt. `violations` is empty iff a
/// well-formed frame was read.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodeReport {
    pub outcome: DecodeOutcome,
    pub violations: Vec<Violation>,
}

impl DecodeReport {
    pub fn frame(&self) -> Option<&Frame> {
        match &self.outcome {
            DecodeOutcome::Frame(frame) => Some(frame),
            _ => None,
        }
    }

    pub fn is_well_formed(&self) -> bool {
        matches!(self.outcome, DecodeOutcome::Frame(_)) && self.violations.is_empty()
    }
}

enum Fill {
    Got,
    Eof,
    TimedOut,
}

/// Incremental frame reader over a byte stream.
///
/// The per-frame timeout starts when the first byte of a frame arrives;
/// before that the same duration acts as an idle timeout. Blocking readers
/// must have a short OS-level read timeout configured so the deadline and
/// the cancel hook are actually polled.
pub struct StreamDecoder<'a, R: Read> {
    reader: &'a mut R,
    timeout: Duration,
    cancel: Option<&'a mut dyn FnMut() -> bool>,
    deadline: Option<Instant>,
    consumed: usize,
}

impl<'a, R: Read> StreamDecoder<'a, R> {
    pub fn new(reader: &'a mut R, timeout: Duration) -> Self {
        StreamDecoder {
            reader,
            timeout,
            cancel: None,
            deadline: None,
            consumed: 0,
        }
    }

    pub fn with_cancel(mut self, cancel: &'a mut dyn FnMut() -> bool) -> Self {
        self.cancel = Some(cancel);
        self
    }

    pub fn consumed(&self) -> usize {
        self.consumed
    }

    /// Read until `buf` holds `need` bytes or the stream stalls/closes.
    fn fill(&mut self, buf: &mut Vec<u8>, need: usize) -> Fill {
        let mut chunk = [0u8; 4096];
        while buf.len() < need {
            if let Some(deadline) = self.deadline {
                if Instant::now() >= deadline {
                    return Fill::TimedOut;
                }
            }
            if let Some(cancel) = self.cancel.as_mut() {
                if cancel() {
                    return Fill::TimedOut;
                }
            }
            let want = (need - buf.len()).min(chunk.len());
            match self.reader.read(&mut chunk[..want]) {
                Ok(0) => return Fill::Eof,
                Ok(n) => {
                    // First byte of the frame starts the per-frame clock.
                    if self.deadline.is_none() {
                        self.deadline = Some(Instant::now() + self.timeout);
                    }
                    buf.extend_from_slice(&chunk[..n]);
                    self.consumed += n;
                }
                Err(e) => match e.kind() {
                    ErrorKind::WouldBlock | ErrorKind::TimedOut => {
                        if self.deadline.is_none() {
                            // Idle timeout: nothing read yet for this frame.
                            self.deadline = Some(Instant::now() + self.timeout);
                        }
                        continue;
                    }
                    ErrorKind::Interrupted => continue,
                    _ => return Fill::Eof,
                },
            }
        }
        Fill::Got
    }

    /// Read the 8-byte fixed header. Distinguishes idle/clean-close from a
    /// mid-header truncation.
    pub fn read_header(&mut self) -> HeaderOutcome {
        let mut buf = Vec::with_capacity(HEADER_LEN);
        match self.fill(&mut buf, HEADER_LEN) {
            Fill::Got => {
                let magic = [buf[0], buf[1]];
                let version = buf[2];
                let opcode = buf[3];
                let declared_length = u32::from_be_bytes([buf[4], buf[5], buf[6], buf[7]]);
                HeaderOutcome::Header(FrameHeader {
                    magic,
                    version,
                    opcode,
                    declared_length,
                })
            }
            Fill::Eof if buf.is_empty() && self.consumed == 0 => HeaderOutcome::Closed,
            Fill::TimedOut if buf.is_empty() && self.consumed == 0 => HeaderOutcome::Idle,
            _ => HeaderOutcome::Truncated {
                consumed: self.consumed,
            },
        }
    }

    /// Read payload and checksum for a parsed header, then validate.
    pub fn read_body(&mut self, header: &FrameHeader) -> DecodeReport {
        let declared = header.declared_length as usize;
        // No up-front allocation of `declared`: a hostile length field must
        // not translate into a giant reserve.
        let mut payload = Vec::with_capacity(declared.min(8 * 1024));
        match self.fill(&mut payload, declared) {
            Fill::Got => {}
            Fill::Eof | Fill::TimedOut => {
                return DecodeReport {
                    violations: vec![Violation::Truncated {
                        consumed: self.consumed,
                    }],
                    outcome: DecodeOutcome::Truncated {
                        consumed: self.consumed,
                        partial: Some(header.partial(payload)),
                    },
                };
            }
        }
        let mut cs_buf = Vec::with_capacity(1);
        match self.fill(&mut cs_buf, 1) {
            Fill::Got => {}
            Fill::Eof | Fill::TimedOut => {
                return DecodeReport {
                    violations: vec![Violation::Truncated {
                        consumed: self.consumed,
                    }],
                    outcome: DecodeOutcome::Truncated {
                        consumed: self.consumed,
                        partial: Some(header.partial(payload)),
                    },
                };
            }
        }
        let frame = Frame {
            magic: header.magic,
            version: header.version,
            opcode: header.opcode,
            declared_length: header.declared_length,
            payload,
            checksum: cs_buf[0],
        };
        DecodeReport {
            violations: frame_violations(&frame),
            outcome: DecodeOutcome::Frame(frame),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameHeader {
    pub magic: [u8; 2],
    pub version: u8,
    pub opcode: u8,
    pub declared_length: u32,
}

impl FrameHeader {
    pub fn is_clean(&self) -> bool {
        self.magic == MAGIC && self.version == VERSION
    }

    fn partial(&self, payload_so_far: Vec<u8>) -> PartialFrame {
        PartialFrame {
            magic: self.magic,
            version: self.version,
            opcode: self.opcode,
            declared_length: self.declared_length,
            payload_so_far,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HeaderOutcome {
    Header(FrameHeader),
    Truncated { consumed: usize },
    Idle,
    Closed,
}

/// Violations of a structurally complete frame, in field order.
pub fn frame_violations(frame: &Frame) -> Vec<Violation> {
    let mut violations = Vec::new();
    if frame.magic != MAGIC {
        violations.push(Violation::BadMagic { found: frame.magic });
    }
    if frame.version != VERSION {
        violations.push(Violation::BadVersion {
            found: frame.version,
        });
    }
    if !is_known_opcode(frame.opcode) {
        violations.push(Violation::UnknownOpcode {
            opcode: frame.opcode,
        });
    }
    let expected = checksum(&frame.payload);
    if expected != frame.checksum {
        violations.push(Violation::BadChecksum {
            expected,
            found: frame.checksum,
        });
    }
    violations
}

/// Decode one frame from a byte stream, waiting at most `timeout` once a
/// frame is in progress. Never panics on garbage; every anomaly lands in
/// the report.
pub fn decode_frame<R: Read>(reader: &mut R, timeout: Duration) -> DecodeReport {
    let mut dec = StreamDecoder::new(reader, timeout);
    match dec.read_header() {
        HeaderOutcome::Header(header) => dec.read_body(&header),
        HeaderOutcome::Closed => DecodeReport {
            outcome: DecodeOutcome::Closed,
            violations: Vec::new(),
        },
        HeaderOutcome::Idle => DecodeReport {
            outcome: DecodeOutcome::Idle,
            violations: Vec::new(),
        },
        HeaderOutcome::Truncated { consumed } => DecodeReport {
            violations: vec![Violation::Truncated { consumed }],
            outcome: DecodeOutcome::Truncated {
                consumed,
                partial: None,
            },
        },
    }
}

/// Result of framing a bounded byte slice (used by the trace reviewer,
/// where the whole capture is known and a declared length can be checked
/// against the bytes actually present).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SliceDecode {
    pub report: DecodeReport,
    pub consumed: usize,
}

/// Decode one frame from the front of `buf`.
///
/// Unlike the stream decoder, a declared length exceeding the bytes
/// available is reported as `length-mismatch` (the capture is complete, so
/// the shortfall is a property of the frame, not of timing).
pub fn decode_frame_slice(buf: &[u8]) -> SliceDecode {
    if buf.is_empty() {
        return SliceDecode {
            report: DecodeReport {
                outcome: DecodeOutcome::Closed,
                violations: Vec::new(),
            },
            consumed: 0,
        };
    }
    if buf.len() < HEADER_LEN {
        return SliceDecode {
            report: DecodeReport {
                violations: vec![Violation::Truncated {
                    consumed: buf.len(),
                }],
                outcome: DecodeOutcome::Truncated {
                    consumed: buf.len(),
                    partial: None,
                },
            },
            consumed: buf.len(),
        };
    }
    let header = FrameHeader {
        magic: [buf[0], buf[1]],
        version: buf[2],
        opcode: buf[3],
        declared_length: u32::from_be_bytes([buf[4], buf[5], buf[6], buf[7]]),
    };
    let declared = header.declared_length as usize;
    let after_header = &buf[HEADER_LEN..];
    if after_header.len() < declared + 1 {
        // Everything left belongs to this frame but cannot complete it.
        let actual = after_header.len().saturating_sub(1) as u32;
        let consumed = buf.len();
        return SliceDecode {
            report: DecodeReport {
                violations: vec![
                    Violation::LengthMismatch {
                        declared: header.declared_length,
                        actual,
                    },
                    Violation::Truncated { consumed },
                ],
                outcome: DecodeOutcome::Truncated {
                    consumed,
                    partial: Some(header.partial(after_header.to_vec())),
                },
            },
            consumed,
        };
    }
    let payload = after_header[..declared].to_vec();
    let frame = Frame {
        magic: header.magic,
        version: header.version,
        opcode: header.opcode,
        declared_length: header.declared_length,
        payload,
        checksum: after_header[declared],
    };
    SliceDecode {
        report: DecodeReport {
            violations: frame_violations(&frame),
            outcome: DecodeOutcome::Frame(frame),
        },
        consumed: HEADER_LEN + declared + 1,
    }
}

/// Typed payload of each opcode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OpPayload {
    Hello {
        client_id: String,
    },
    Ok {
        message: String,
    },
    Err {
        code: u8,
        message: String,
    },
    PutReq {
        filename: String,
        file_size: u32,
        block_size: u16,
    },
    Data {
        block_index: u32,
        data: Vec<u8>,
    },
    PutCommit,
    GetReq {
        filename: String,
    },
    FileInfo {
        file_size: u32,
    },
    Bye,
}

impl OpPayload {
    pub fn opcode(&self) -> u8 {
        match self {
            OpPayload::Hello { .. } => OP_HELLO,
            OpPayload::Ok { .. } => OP_OK,
            OpPayload::Err { .. } => OP_ERR,
            OpPayload::PutReq { .. } => OP_PUT_REQ,
            OpPayload::Data { .. } => OP_DATA,
            OpPayload::PutCommit => OP_PUT_COMMIT,
            OpPayload::GetReq { .. } => OP_GET_REQ,
            OpPayload::FileInfo { .. } => OP_FILE_INFO,
            OpPayload::Bye => OP_BYE,
        }
    }

    /// Complete wire frame for this payload.
    pub fn to_frame_bytes(&self) -> Vec<u8> {
        encode_frame(self.opcode(), &encode_payload(self))
    }
}

/// Structured failure from [`decode_payload`], naming the field at fault.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("payload-malformed at {field}: {reason}")]
pub struct PayloadError {
    pub field: &'static str,
    pub reason: String,
}

fn malformed(field: &'static str, reason: impl Into<String>) -> PayloadError {
    PayloadError {
        field,
        reason: reason.into(),
    }
}

pub fn encode_payload(p: &OpPayload) -> Vec<u8> {
    match p {
        OpPayload::Hello { client_id } => client_id.as_bytes().to_vec(),
        OpPayload::Ok { message } => message.as_bytes().to_vec(),
        OpPayload::Err { code, message } => {
            let mut out = Vec::with_capacity(1 + message.len());
            out.push(*code);
            out.extend_from_slice(message.as_bytes());
            out
        }
        OpPayload::PutReq {
            filename,
            file_size,
            block_size,
        } => {
            let name = filename.as_bytes();
            debug_assert!(name.len() <= u16::MAX as usize);
            let mut out = Vec::with_capacity(2 + name.len() + 6);
            out.extend_from_slice(&(name.len() as u16).to_be_bytes());
            out.extend_from_slice(name);
            out.extend_from_slice(&file_size.to_be_bytes());
            out.extend_from_slice(&block_size.to_be_bytes());
            out
        }
        OpPayload::Data { block_index, data } => {
            let mut out = Vec::with_capacity(4 + data.len());
            out.extend_from_slice(&block_index.to_be_bytes());
            out.extend_from_slice(data);
            out
        }
        OpPayload::PutCommit => Vec::new(),
        OpPayload::GetReq { filename } => {
            let name = filename.as_bytes();
            debug_assert!(name.len() <= u16::MAX as usize);
            let mut out = Vec::with_capacity(2 + name.len());
            out.extend_from_slice(&(name.len() as u16).to_be_bytes());
            out.extend_from_slice(name);
            out
        }
        OpPayload::FileInfo { file_size } => file_size.to_be_bytes().to_vec(),
        OpPayload::Bye => Vec::new(),
    }
}

fn take_u16(buf: &[u8], pos: usize, field: &'static str) -> Result<u16, PayloadError> {
    if buf.len() < pos + 2 {
        return Err(malformed(
            field,
            format!(
                "need 2 bytes at offset {pos}, have {}",
                buf.len().saturating_sub(pos)
            ),
        ));
    }
    Ok(u16::from_be_bytes([buf[pos], buf[pos + 1]]))
}

fn take_u32(buf: &[u8], pos: usize, field: &'static str) -> Result<u32, PayloadError> {
    if buf.len() < pos + 4 {
        return Err(malformed(
            field,
            format!(
                "need 4 bytes at offset {pos}, have {}",
                buf.len().saturating_sub(pos)
            ),
        ));
    }
    Ok(u32::from_be_bytes([
        buf[pos],
        buf[pos + 1],
        buf[pos + 2],
        buf[pos + 3],
    ]))
}

fn utf8(bytes: &[u8], field: &'static str) -> Result<String, PayloadError> {
    String::from_utf8(bytes.to_vec()).map_err(|_| malformed(field, "invalid UTF-8"))
}

fn expect_end(buf: &[u8], pos: usize) -> Result<(), PayloadError> {
    if buf.len() > pos {
        return Err(malformed(
            "trailing",
            format!("{} unexpected trailing bytes", buf.len() - pos),
        ));
    }
    Ok(())
}

/// Decode the payload body of a known opcode. Short and overlong bodies
/// fail with the field that broke.
pub fn decode_payload(opcode: u8, buf: &[u8]) -> Result<OpPayload, PayloadError> {
    match opcode {
        OP_HELLO => Ok(OpPayload::Hello {
            client_id: utf8(buf, "client_id")?,
        }),
        OP_OK => Ok(OpPayload::Ok {
            message: utf8(buf, "message")?,
        }),
        OP_ERR => {
            if buf.is_empty() {
                return Err(malformed("code", "empty ERR payload"));
            }
            Ok(OpPayload::Err {
                code: buf[0],
                message: utf8(&buf[1..], "message")?,
            })
        }
        OP_PUT_REQ => {
            let name_len = take_u16(buf, 0, "filename_length")? as usize;
            if buf.len() < 2 + name_len {
                return Err(malformed(
                    "filename",
                    format!("declared {name_len} bytes, {} present", buf.len() - 2),
                ));
            }
            let filename = utf8(&buf[2..2 + name_len], "filename")?;
            let file_size = take_u32(buf, 2 + name_len, "file_size")?;
            let block_size = take_u16(buf, 2 + name_len + 4, "block_size")?;
            expect_end(buf, 2 + name_len + 6)?;
            Ok(OpPayload::PutReq {
                filename,
                file_size,
                block_size,
            })
        }
        OP_DATA => {
            let block_index = take_u32(buf, 0, "block_index")?;
            Ok(OpPayload::Data {
                block_index,
                data: buf[4..].to_vec(),
            })
        }
        OP_PUT_COMMIT => {
            expect_end(buf, 0)?;
            Ok(OpPayload::PutCommit)
        }
        OP_GET_REQ => {
            let name_len = take_u16(buf, 0, "filename_length")? as usize;
            if buf.len() < 2 + name_len {
                return Err(malformed(
                    "filename",
                    format!("declared {name_len} bytes, {} present", buf.len() - 2),
                ));
            }
            let filename = utf8(&buf[2..2 + name_len], "filename")?;
            expect_end(buf, 2 + name_len)?;
            Ok(OpPayload::GetReq { filename })
        }
        OP_FILE_INFO => {
            let file_size = take_u32(buf, 0, "file_size")?;
            expect_end(buf, 4)?;
            Ok(OpPayload::FileInfo { file_size })
        }
        OP_BYE => {
            expect_end(buf, 0)?;
            Ok(OpPayload::Bye)
        }
        other => Err(malformed("opcode", format!("unknown opcode {other:#04X}"))),
    }
}

/// Decode a complete frame's payload, shorthand for server/tooling paths.
pub fn decode_frame_payload(frame: &Frame) -> Result<OpPayload, PayloadError> {
    decode_payload(frame.opcode, &frame.payload)
}
