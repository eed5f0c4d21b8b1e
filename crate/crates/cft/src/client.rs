//! CFT client with two layers.
//!
//! The honest layer ([`Session::hello`], [`Session::put_file`],
//! [`Session::get_file`]) mirrors the protocol state machine client-side
//! and only emits well-formed traffic. The subversion layer
//! ([`Session::send_raw`]) takes a [`RawFrameSpec`] and puts exactly those
//! bytes on the wire — any field may be forced to a value the encoder
//! would never produce, which is what security test cases need and what
//! an API built purely for functional testing cannot do.
//!
//! With every override left on auto a raw spec is byte-identical to the
//! honest encoder's output; the two layers differ only in what they are
//! allowed to say.

use std::io::{self, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpStream};
use std::sync::Arc;
use std::time::Duration;

use thiserror::Error;

use crate::protocol::{
    checksum, decode_frame, DecodeOutcome, DecodeReport, OpPayload, MAGIC, VERSION,
};
use crate::trace::{Direction, TraceSink};

/// Poll interval for blocking socket reads; keeps decode deadlines and
/// cancellation responsive.
const READ_POLL: Duration = Duration::from_millis(25);

/// Default receive timeout. Deliberately longer than the server's default
/// per-frame read timeout so Err-on-timeout replies are observable.
pub const DEFAULT_RECV_TIMEOUT: Duration = Duration::from_millis(3000);

/// A frame to forge. Every field can be forced; `None` means "compute the
/// honest value". `trailing_garbage` is appended verbatim after the frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawFrameSpec {
    pub magic: [u8; 2],
    pub version: u8,
    pub opcode: u8,
    pub declared_length: Option<u32>,
    pub payload: Vec<u8>,
    pub checksum: Option<u8>,
    pub trailing_garbage: Vec<u8>,
}

impl RawFrameSpec {
    /// All-auto spec: resolves to exactly what the honest encoder emits.
    pub fn honest(opcode: u8, payload: impl Into<Vec<u8>>) -> RawFrameSpec {
        RawFrameSpec {
            magic: MAGIC,
            version: VERSION,
            opcode,
            declared_length: None,
            payload: payload.into(),
            checksum: None,
            trailing_garbage: Vec::new(),
        }
    }

    pub fn for_payload(p: &OpPayload) -> RawFrameSpec {
        RawFrameSpec::honest(p.opcode(), crate::protocol::encode_payload(p))
    }

    pub fn with_declared(mut self, declared: u32) -> Self {
        self.declared_length = Some(declared);
        self
    }

    pub fn with_checksum(mut self, cs: u8) -> Self {
        self.checksum = Some(cs);
        self
    }

    pub fn with_magic(mut self, magic: [u8; 2]) -> Self {
        self.magic = magic;
        self
    }

    pub fn with_version(mut self, version: u8) -> Self {
        self.version = version;
        self
    }

    pub fn with_garbage(mut self, garbage: impl Into<Vec<u8>>) -> Self {
        self.trailing_garbage = garbage.into();
        self
    }

    /// Exact wire bytes for this spec. No normalization: inconsistent
    /// length or checksum values go out as written.
    pub fn resolve(&self) -> Vec<u8> {
        let declared = self.declared_length.unwrap_or(self.payload.len() as u32);
        let cs = self.checksum.unwrap_or_else(|| checksum(&self.payload));
        let mut out = Vec::with_capacity(9 + self.payload.len() + self.trailing_garbage.len());
        out.extend_from_slice(&self.magic);
        out.push(self.version);
        out.push(self.opcode);
        out.extend_from_slice(&declared.to_be_bytes());
        out.extend_from_slice(&self.payload);
        out.push(cs);
        out.extend_from_slice(&self.trailing_garbage);
        out
    }
}

/// What one receive call observed. Exactly one per call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ServerEvent {
    Reply(DecodeReport),
    Closed,
    Timeout,
}

impl ServerEvent {
    /// Reply payload bytes, if any frame data arrived.
    pub fn reply_payload(&self) -> Option<&[u8]> {
        match self {
            ServerEvent::Reply(report) => report.frame().map(|f| f.payload.as_slice()),
            _ => None,
        }
    }

    pub fn reply_opcode(&self) -> Option<u8> {
        match self {
            ServerEvent::Reply(report) => report.frame().map(|f| f.opcode),
            _ => None,
        }
    }

    /// `(code, message)` when the reply is an ERR frame.
    pub fn err_code(&self) -> Option<u8> {
        match self {
            ServerEvent::Reply(report) => {
                let frame = report.frame()?;
                if frame.opcode == crate::protocol::OP_ERR {
                    frame.payload.first().copied()
                } else {
                    None
                }
            }
            _ => None,
        }
    }

    pub fn summary(&self) -> String {
        match self {
            ServerEvent::Reply(report) => match &report.outcome {
                DecodeOutcome::Frame(frame) => {
                    let mut s = format!("reply {}", frame.opcode_name());
                    if frame.opcode == crate::protocol::OP_ERR {
                        if let Some(code) = frame.payload.first() {
                            s.push_str(&format!(" {}", crate::protocol::err_code_name(*code)));
                        }
                    }
                    if !report.violations.is_empty() {
                        s.push_str(&format!(" ({} violations)", report.violations.len()));
                    }
                    s
                }
                DecodeOutcome::Truncated { consumed, .. } => {
                    format!("reply truncated after {consumed} bytes")
                }
                DecodeOutcome::Idle => "timeout".into(),
                DecodeOutcome::Closed => "closed".into(),
            },
            ServerEvent::Closed => "closed".into(),
            ServerEvent::Timeout => "timeout".into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("connect to {addr} failed: {source}")]
    Connect {
        addr: String,
        #[source]
        source: io::Error,
    },
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("session is in phase {actual}, operation needs {expected}")]
    BadPhase {
        expected: &'static str,
        actual: &'static str,
    },
    #[error("block_size must be at least 1")]
    ZeroBlockSize,
}

/// Client-side mirror of the session state machine (honest layer only).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClientPhase {
    Start,
    Greeted,
    Transferring,
    Closed,
}

impl ClientPhase {
    fn name(&self) -> &'static str {
        match self {
            ClientPhase::Start => "Start",
            ClientPhase::Greeted => "Greeted",
            ClientPhase::Transferring => "Transferring",
            ClientPhase::Closed => "Closed",
        }
    }
}

/// Outcome of an honest PUT.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransferReport {
    pub replies: Vec<ServerEvent>,
    pub status: TransferStatus,
    pub data_frames_sent: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransferStatus {
    Completed,
    Refused { code: u8, at_frame: usize },
    Aborted { reason: String },
}

/// Outcome of an honest GET.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GetOutcome {
    pub replies: Vec<ServerEvent>,
    pub status: GetStatus,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GetStatus {
    Completed { data: Vec<u8> },
    Refused { code: u8 },
    Aborted { reason: String },
}

/// One CFT connection. Single-threaded: sequential request/response.
pub struct Session {
    stream: TcpStream,
    trace: Option<Arc<TraceSink>>,
    phase: ClientPhase,
    recv_timeout: Duration,
}

/// Mirrors every byte read from the server into the trace sink.
struct TeeReader<'a> {
    stream: &'a TcpStream,
    trace: Option<&'a TraceSink>,
}

impl Read for TeeReader<'_> {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        let n = Read::read(&mut self.stream, buf)?;
        if n > 0 {
            if let Some(sink) = self.trace {
                sink.record(Direction::ServerToClient, &buf[..n])
                    .map_err(|e| io::Error::new(e.kind(), format!("trace sink: {e}")))?;
            }
        }
        Ok(n)
    }
}

impl Session {
    /// Connect to a server. When a trace sink is given, every byte in
    /// either direction is mirrored to it.
    pub fn connect(
        addr: SocketAddr,
        trace: Option<Arc<TraceSink>>,
    ) -> Result<Session, ClientError> {
        let stream =
            TcpStream::connect_timeout(&addr, Duration::from_millis(2000)).map_err(|source| {
                ClientError::Connect {
                    addr: addr.to_string(),
                    source,
                }
            })?;
        stream.set_nodelay(true)?;
        stream.set_read_timeout(Some(READ_POLL))?;
        Ok(Session {
            stream,
            trace,
            phase: ClientPhase::Start,
            recv_timeout: DEFAULT_RECV_TIMEOUT,
        })
    }

    pub fn set_recv_timeout(&mut self, timeout: Duration) {
        self.recv_timeout = timeout;
    }

    pub fn phase(&self) -> ClientPhase {
        self.phase
    }

    /// Send exactly the forged bytes of `spec`. Stateless: no phase checks
    /// or updates. Returns the resolved bytes for evidence logging.
    pub fn send_raw(&mut self, spec: &RawFrameSpec) -> Result<Vec<u8>, ClientError> {
        let bytes = spec.resolve();
        self.send_bytes(&bytes)?;
        Ok(bytes)
    }

    /// Send a well-formed frame for a typed payload (no phase tracking).
    pub fn send_payload(&mut self, p: &OpPayload) -> Result<Vec<u8>, ClientError> {
        self.send_raw(&RawFrameSpec::for_payload(p))
    }

    pub fn send_bytes(&mut self, bytes: &[u8]) -> Result<(), ClientError> {
        self.stream.write_all(bytes)?;
        if let Some(sink) = &self.trace {
            sink.record(Direction::ClientToServer, bytes)?;
        }
        Ok(())
    }

    /// Half-close the write side; the server sees EOF instead of a stalled
    /// frame. Replies can still be read.
    pub fn shutdown_write(&mut self) -> Result<(), ClientError> {
        self.stream.shutdown(Shutdown::Write)?;
        Ok(())
    }

    /// Wait for one server event: a decoded reply, a closed connection, or
    /// nothing within the timeout.
    pub fn receive(&mut self, timeout: Option<Duration>) -> ServerEvent {
        let timeout = timeout.unwrap_or(self.recv_timeout);
        let mut tee = TeeReader {
            stream: &self.stream,
            trace: self.trace.as_deref(),
        };
        let report = decode_frame(&mut tee, timeout);
        match report.outcome {
            DecodeOutcome::Closed => ServerEvent::Closed,
            DecodeOutcome::Idle => ServerEvent::Timeout,
            _ => ServerEvent::Reply(report),
        }
    }

    /// Honest HELLO. Advances to Greeted on an OK reply.
    pub fn hello(&mut self, client_id: &str) -> Result<ServerEvent, ClientError> {
        if self.phase != ClientPhase::Start {
            return Err(ClientError::BadPhase {
                expected: "Start",
                actual: self.phase.name(),
            });
        }
        self.send_payload(&OpPayload::Hello {
            client_id: client_id.to_string(),
        })?;
        let event = self.receive(None);
        if event.reply_opcode() == Some(crate::protocol::OP_OK) {
            self.phase = ClientPhase::Greeted;
        }
        Ok(event)
    }

    /// Honest PUT: PutReq, then ceil(len / block_size) Data frames with
    /// ascending indices, then PutCommit, each awaiting its reply.
    pub fn put_file(
        &mut self,
        filename: &str,
        content: &[u8],
        block_size: u16,
    ) -> Result<TransferReport, ClientError> {
        if self.phase != ClientPhase::Greeted {
            return Err(ClientError::BadPhase {
                expected: "Greeted",
                actual: self.phase.name(),
            });
        }
        if block_size == 0 {
            return Err(ClientError::ZeroBlockSize);
        }
        let mut replies = Vec::new();
        let mut data_frames_sent = 0usize;

        self.send_payload(&OpPayload::PutReq {
            filename: filename.to_string(),
            file_size: content.len() as u32,
            block_size,
        })?;
        match self.expect_ok(&mut replies) {
            StepResult::Continue => self.phase = ClientPhase::Transferring,
            StepResult::Stop(status) => {
                return Ok(TransferReport {
                    replies,
                    status,
                    data_frames_sent,
                })
            }
        }

        for (index, chunk) in content.chunks(block_size as usize).enumerate() {
            self.send_payload(&OpPayload::Data {
                block_index: index as u32,
                data: chunk.to_vec(),
            })?;
            data_frames_sent += 1;
            if let StepResult::Stop(status) = self.expect_ok(&mut replies) {
                return Ok(TransferReport {
                    replies,
                    status,
                    data_frames_sent,
                });
            }
        }

        self.send_payload(&OpPayload::PutCommit)?;
        let status = match self.expect_ok(&mut replies) {
            StepResult::Continue => {
                self.phase = ClientPhase::Greeted;
                TransferStatus::Completed
            }
            StepResult::Stop(status) => status,
        };
        Ok(TransferReport {
            replies,
            status,
            data_frames_sent,
        })
    }

    fn expect_ok(&mut self, replies: &mut Vec<ServerEvent>) -> StepResult {
        let event = self.receive(None);
        let result = match &event {
            ServerEvent::Reply(report) => match report.frame() {
                Some(frame) if frame.opcode == crate::protocol::OP_OK => StepResult::Continue,
                Some(frame) if frame.opcode == crate::protocol::OP_ERR => {
                    StepResult::Stop(TransferStatus::Refused {
                        code: frame.payload.first().copied().unwrap_or(0),
                        at_frame: replies.len(),
                    })
                }
                _ => StepResult::Stop(TransferStatus::Aborted {
                    reason: format!("unexpected {}", event.summary()),
                }),
            },
            ServerEvent::Closed => StepResult::Stop(TransferStatus::Aborted {
                reason: "connection closed".into(),
            }),
            ServerEvent::Timeout => StepResult::Stop(TransferStatus::Aborted {
                reason: "timeout".into(),
            }),
        };
        replies.push(event);
        result
    }

    /// Honest GET: GetReq, then FileInfo and Data frames until the
    /// announced size is collected.
    pub fn get_file(&mut self, filename: &str) -> Result<GetOutcome, ClientError> {
        if self.phase != ClientPhase::Greeted {
            return Err(ClientError::BadPhase {
                expected: "Greeted",
                actual: self.phase.name(),
            });
        }
        let mut replies = Vec::new();
        self.send_payload(&OpPayload::GetReq {
            filename: filename.to_string(),
        })?;
        let first = self.receive(None);
        replies.push(first.clone());
        let announced = match &first {
            ServerEvent::Reply(report) => match report.frame() {
                Some(frame)
                    if frame.opcode == crate::protocol::OP_FILE_INFO
                        && frame.payload.len() == 4 =>
                {
                    u32::from_be_bytes([
                        frame.payload[0],
                        frame.payload[1],
                        frame.payload[2],
                        frame.payload[3],
                    ]) as usize
                }
                Some(frame) if frame.opcode == crate::protocol::OP_ERR => {
                    return Ok(GetOutcome {
                        status: GetStatus::Refused {
                            code: frame.payload.first().copied().unwrap_or(0),
                        },
                        replies,
                    });
                }
                _ => {
                    return Ok(GetOutcome {
                        status: GetStatus::Aborted {
                            reason: format!("unexpected {}", first.summary()),
                        },
                        replies,
                    });
                }
            },
            other => {
                return Ok(GetOutcome {
                    status: GetStatus::Aborted {
                        reason: format!("unexpected {}", other.summary()),
                    },
                    replies,
                });
            }
        };
        let mut data = Vec::with_capacity(announced);
        while data.len() < announced {
            let event = self.receive(None);
            replies.push(event.clone());
            match &event {
                ServerEvent::Reply(report) => match report.frame() {
                    Some(frame)
                        if frame.opcode == crate::protocol::OP_DATA && frame.payload.len() >= 4 =>
                    {
                        data.extend_from_slice(&frame.payload[4..]);
                    }
                    _ => {
                        return Ok(GetOutcome {
                            status: GetStatus::Aborted {
                                reason: format!("unexpected {}", event.summary()),
                            },
                            replies,
                        });
                    }
                },
                other => {
                    return Ok(GetOutcome {
                        status: GetStatus::Aborted {
                            reason: format!("unexpected {}", other.summary()),
                        },
                        replies,
                    });
                }
            }
        }
        Ok(GetOutcome {
            status: GetStatus::Completed { data },
            replies,
        })
    }

    /// Honest BYE; the server acknowledges with OK and closes.
    pub fn bye(&mut self) -> Result<ServerEvent, ClientError> {
        self.send_payload(&OpPayload::Bye)?;
        let event = self.receive(None);
        self.phase = ClientPhase::Closed;
        Ok(event)
    }
}

enum StepResult {
    Continue,
    Stop(TransferStatus),
}
