//! Wire traffic capture and offline review.
//!
//! A trace is line-delimited text, one record per append:
//!
//! ```text
//! <timestamp_ms> <C2S|S2C> <hex>
//! ```
//!
//! `timestamp_ms` counts from sink creation. Records are flushed on every
//! write so a trace survives the session that produced it being aborted
//! mid-protocol. The reviewer ([`decode_trace`]) re-frames each
//! direction's byte stream independently and annotates every frame;
//! bytes that fit no frame are flagged as residue — that is how
//! length-smearing attacks are diagnosed after the fact.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;
use std::time::Instant;

use crate::protocol::{self, decode_frame_slice, DecodeOutcome, Frame, Violation, MAGIC};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    ClientToServer,
    ServerToClient,
}

impl Direction {
    pub fn as_str(&self) -> &'static str {
        match self {
            Direction::ClientToServer => "C2S",
            Direction::ServerToClient => "S2C",
        }
    }

    pub fn parse(s: &str) -> Option<Direction> {
        match s {
            "C2S" => Some(Direction::ClientToServer),
            "S2C" => Some(Direction::ServerToClient),
            _ => None,
        }
    }
}

impl std::fmt::Display for Direction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One captured record: some bytes seen in one direction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRecord {
    pub timestamp_ms: u64,
    pub direction: Direction,
    pub bytes: Vec<u8>,
}

struct SinkInner {
    out: BufWriter<File>,
    start: Instant,
    last_ms: u64,
}

/// Append-only trace writer. One sink per session; appends are serialized.
pub struct TraceSink {
    inner: Mutex<SinkInner>,
}

impl TraceSink {
    pub fn create(path: impl AsRef<Path>) -> io::Result<TraceSink> {
        let file = File::create(path)?;
        Ok(TraceSink {
            inner: Mutex::new(SinkInner {
                out: BufWriter::new(file),
                start: Instant::now(),
                last_ms: 0,
            }),
        })
    }

    /// Append one record and flush. Empty byte runs are a caller bug and
    /// are rejected rather than silently written.
    pub fn record(&self, direction: Direction, bytes: &[u8]) -> io::Result<()> {
        if bytes.is_empty() {
            return Err(io::Error::new(
                io::ErrorKind::InvalidInput,
                "trace record must carry at least one byte",
            ));
        }
        let mut inner = self.inner.lock().expect("trace sink poisoned");
        // Clamp to monotone non-decreasing timestamps.
        let ms = (inner.start.elapsed().as_millis() as u64).max(inner.last_ms);
        inner.last_ms = ms;
        let line = format!("{} {} {}\n", ms, direction.as_str(), hex::encode(bytes));
        inner.out.write_all(line.as_bytes())?;
        inner.out.flush()
    }
}

/// A parsed trace line, or the reason it could not be parsed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceLine {
    Record(TraceRecord),
    Corrupt {
        line_no: usize,
        raw: String,
        reason: String,
    },
}

pub fn parse_trace_line(line: &str) -> Result<TraceRecord, String> {
    let mut parts = line.split_whitespace();
    let ts = parts
        .next()
        .ok_or("missing timestamp")?
        .parse::<u64>()
        .map_err(|e| format!("bad timestamp: {e}"))?;
    let direction = parts
        .next()
        .and_then(Direction::parse)
        .ok_or("bad direction (want C2S or S2C)")?;
    let hex_str = parts.next().ok_or("missing hex payload")?;
    if parts.next().is_some() {
        return Err("trailing fields".into());
    }
    let bytes = hex::decode(hex_str).map_err(|e| format!("bad hex: {e}"))?;
    if bytes.is_empty() {
        return Err("empty byte run".into());
    }
    Ok(TraceRecord {
        timestamp_ms: ts,
        direction,
        bytes,
    })
}

/// Load a trace file. Corrupt lines are flagged and the remainder still
/// parses.
pub fn load_trace(path: impl AsRef<Path>) -> io::Result<Vec<TraceLine>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        match parse_trace_line(raw) {
            Ok(rec) => lines.push(TraceLine::Record(rec)),
            Err(reason) => lines.push(TraceLine::Corrupt {
                line_no: idx + 1,
                raw: raw.to_string(),
                reason,
            }),
        }
    }
    Ok(lines)
}

/// One annotated item in the reviewed listing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ListingEntry {
    /// A complete frame (possibly with violations).
    Frame(FrameEntry),
    /// A frame whose header arrived but whose declared payload did not
    /// fit in the remaining capture. The unconsumable tail is residue.
    Partial {
        direction: Direction,
        timestamp_ms: u64,
        opcode: u8,
        declared: u32,
        actual: u32,
        violations: Vec<Violation>,
        residue: Vec<u8>,
    },
    /// Bytes that fit no frame at all.
    Residue {
        direction: Direction,
        timestamp_ms: u64,
        bytes: Vec<u8>,
        note: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameEntry {
    pub direction: Direction,
    pub timestamp_ms: u64,
    pub index: usize,
    pub opcode: u8,
    pub declared: u32,
    pub actual: u32,
    pub checksum_ok: bool,
    pub summary: String,
    pub violations: Vec<Violation>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TraceListing {
    pub entries: Vec<ListingEntry>,
    pub warnings: Vec<String>,
}

impl TraceListing {
    pub fn frames(&self) -> impl Iterator<Item = &FrameEntry> {
        self.entries.iter().filter_map(|e| match e {
            ListingEntry::Frame(f) => Some(f),
            _ => None,
        })
    }

    pub fn has_residue(&self) -> bool {
        self.entries.iter().any(|e| {
            matches!(e, ListingEntry::Residue { .. })
                || matches!(e, ListingEntry::Partial { residue, .. } if !residue.is_empty())
        })
    }

    pub fn has_violation(&self, kind: &str) -> bool {
        self.entries.iter().any(|e| match e {
            ListingEntry::Frame(f) => f.violations.iter().any(|v| v.kind() == kind),
            ListingEntry::Partial { violations, .. } => violations.iter().any(|v| v.kind() == kind),
            ListingEntry::Residue { .. } => false,
        })
    }
}

fn payload_summary(frame: &Frame) -> String {
    use crate::protocol::OpPayload::*;
    match protocol::decode_frame_payload(frame) {
        Result::Ok(p) => match p {
            Hello { client_id } => format!("client_id={client_id:?}"),
            Ok { message } => format!("message={message:?}"),
            Err { code, message } => format!(
                "code={:#04X} ({}) message={message:?}",
                code,
                protocol::err_code_name(code)
            ),
            PutReq {
                filename,
                file_size,
                block_size,
            } => format!("filename={filename:?} file_size={file_size} block_size={block_size}"),
            Data { block_index, data } => {
                format!("block_index={block_index} data_len={}", data.len())
            }
            PutCommit | Bye => String::new(),
            GetReq { filename } => format!("filename={filename:?}"),
            FileInfo { file_size } => format!("file_size={file_size}"),
        },
        Result::Err(e) if protocol::is_known_opcode(frame.opcode) => format!("<{e}>"),
        Result::Err(_) => format!("payload {} bytes", frame.payload.len()),
    }
}

/// Timestamp of the record that contributed the byte at `offset`.
fn ts_at(index: &[(usize, u64)], offset: usize) -> u64 {
    index
        .iter()
        .rev()
        .find(|(start, _)| *start <= offset)
        .map(|(_, ts)| *ts)
        .unwrap_or(0)
}

fn reframe_direction(
    direction: Direction,
    bytes: &[u8],
    ts_index: &[(usize, u64)],
    entries: &mut Vec<ListingEntry>,
) {
    let mut offset = 0usize;
    let mut frame_index = 0usize;
    while offset < bytes.len() {
        let rem = &bytes[offset..];
        let ts = ts_at(ts_index, offset);
        // Without the magic pair at the cursor the stream has lost frame
        // alignment; everything left is residue.
        if rem.len() >= 2 && [rem[0], rem[1]] != MAGIC {
            entries.push(ListingEntry::Residue {
                direction,
                timestamp_ms: ts,
                bytes: rem.to_vec(),
                note: "no frame boundary (bad magic)".into(),
            });
            return;
        }
        let dec = decode_frame_slice(rem);
        match dec.report.outcome {
            DecodeOutcome::Frame(frame) => {
                let checksum_ok = protocol::checksum(&frame.payload) == frame.checksum;
                entries.push(ListingEntry::Frame(FrameEntry {
                    direction,
                    timestamp_ms: ts,
                    index: frame_index,
                    opcode: frame.opcode,
                    declared: frame.declared_length,
                    actual: frame.payload.len() as u32,
                    checksum_ok,
                    summary: payload_summary(&frame),
                    violations: dec.report.violations,
                }));
                frame_index += 1;
                offset += dec.consumed;
            }
            DecodeOutcome::Truncated { partial, .. } => {
                match partial {
                    Some(p) => entries.push(ListingEntry::Partial {
                        direction,
                        timestamp_ms: ts,
                        opcode: p.opcode,
                        declared: p.declared_length,
                        actual: p.payload_so_far.len() as u32,
                        violations: dec.report.violations,
                        residue: p.payload_so_far,
                    }),
                    None => entries.push(ListingEntry::Residue {
                        direction,
                        timestamp_ms: ts,
                        bytes: rem.to_vec(),
                        note: format!("{} bytes, too short for a frame header", rem.len()),
                    }),
                }
                return;
            }
            DecodeOutcome::Idle | DecodeOutcome::Closed => return,
        }
    }
}

struct DirectionStream {
    direction: Direction,
    bytes: Vec<u8>,
    // (byte offset of each record's start, record timestamp)
    ts_index: Vec<(usize, u64)>,
}

/// Re-frame and annotate parsed trace lines. Pure; the trace is never
/// mutated.
pub fn decode_records(lines: &[TraceLine]) -> TraceListing {
    let mut listing = TraceListing::default();
    let mut streams = [
        DirectionStream {
            direction: Direction::ClientToServer,
            bytes: Vec::new(),
            ts_index: Vec::new(),
        },
        DirectionStream {
            direction: Direction::ServerToClient,
            bytes: Vec::new(),
            ts_index: Vec::new(),
        },
    ];
    for line in lines {
        match line {
            TraceLine::Record(rec) => {
                let slot = streams
                    .iter_mut()
                    .find(|s| s.direction == rec.direction)
                    .expect("both directions present");
                slot.ts_index.push((slot.bytes.len(), rec.timestamp_ms));
                slot.bytes.extend_from_slice(&rec.bytes);
            }
            TraceLine::Corrupt {
                line_no, reason, ..
            } => listing
                .warnings
                .push(format!("line {line_no}: {reason} (skipped)")),
        }
    }
    for stream in &streams {
        reframe_direction(
            stream.direction,
            &stream.bytes,
            &stream.ts_index,
            &mut listing.entries,
        );
    }
    listing
}

pub fn decode_trace(path: impl AsRef<Path>) -> io::Result<TraceListing> {
    let lines = load_trace(path)?;
    Ok(decode_records(&lines))
}

/// Human-readable listing, one line per entry.
pub fn render_listing(listing: &TraceListing) -> String {
    let mut out = String::new();
    for warning in &listing.warnings {
        let _ = writeln!(out, "! {warning}");
    }
    for entry in &listing.entries {
        match entry {
            ListingEntry::Frame(f) => {
                let name = protocol::opcode_name(f.opcode).unwrap_or("UNKNOWN");
                let _ = write!(
                    out,
                    "[{:>6}ms] {} #{:<3} {:<16} declared={} actual={} checksum={}",
                    f.timestamp_ms,
                    f.direction,
                    f.index,
                    format!("{name}(0x{:02X})", f.opcode),
                    f.declared,
                    f.actual,
                    if f.checksum_ok { "ok" } else { "BAD" },
                );
                if !f.summary.is_empty() {
                    let _ = write!(out, " {}", f.summary);
                }
                for v in &f.violations {
                    let _ = write!(out, " [{v}]");
                }
                out.push('\n');
            }
            ListingEntry::Partial {
                direction,
                timestamp_ms,
                opcode,
                declared,
                actual,
                violations,
                residue,
            } => {
                let name = protocol::opcode_name(*opcode).unwrap_or("UNKNOWN");
                let _ = write!(
                    out,
                    "[{timestamp_ms:>6}ms] {direction} PARTIAL {name}(0x{opcode:02X}) declared={declared} actual={actual}"
                );
                for v in violations {
                    let _ = write!(out, " [{v}]");
                }
                let _ = writeln!(
                    out,
                    "\n           {direction} residue: {}",
                    hex::encode(residue)
                );
            }
            ListingEntry::Residue {
                direction,
                timestamp_ms,
                bytes,
                note,
            } => {
                let _ = writeln!(
                    out,
                    "[{timestamp_ms:>6}ms] {direction} RESIDUE ({note}): {}",
                    hex::encode(bytes)
                );
            }
        }
    }
    if listing.entries.is_empty() && listing.warnings.is_empty() {
        out.push_str("(empty trace)\n");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{encode_frame, OP_HELLO, OP_OK};

    #[test]
    fn record_then_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.trace");
        let sink = TraceSink::create(&path).unwrap();
        sink.record(Direction::ClientToServer, &[0xDE, 0xAD])
            .unwrap();
        let lines = load_trace(&path).unwrap();
        assert_eq!(lines.len(), 1);
        match &lines[0] {
            TraceLine::Record(rec) => {
                assert_eq!(rec.direction, Direction::ClientToServer);
                assert_eq!(rec.bytes, vec![0xDE, 0xAD]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ordering_preserved_and_timestamps_monotone() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.trace");
        let sink = TraceSink::create(&path).unwrap();
        sink.record(Direction::ClientToServer, b"one").unwrap();
        std::thread::sleep(std::time::Duration::from_millis(5));
        sink.record(Direction::ServerToClient, b"two").unwrap();
        let lines = load_trace(&path).unwrap();
        let ts: Vec<u64> = lines
            .iter()
            .map(|l| match l {
                TraceLine::Record(r) => r.timestamp_ms,
                _ => panic!("corrupt"),
            })
            .collect();
        assert_eq!(ts.len(), 2);
        assert!(ts[0] <= ts[1]);
    }

    #[test]
    fn empty_record_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let sink = TraceSink::create(dir.path().join("t.trace")).unwrap();
        let err = sink.record(Direction::ClientToServer, &[]).unwrap_err();
        assert_eq!(err.kind(), io::ErrorKind::InvalidInput);
    }

    #[test]
    fn corrupt_line_flagged_remainder_decoded() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.trace");
        let hello = hex::encode(encode_frame(OP_HELLO, b"cli"));
        std::fs::write(&path, format!("0 C2S {hello}\nthis is not a record\n")).unwrap();
        let listing = decode_trace(&path).unwrap();
        assert_eq!(listing.warnings.len(), 1);
        assert_eq!(listing.frames().count(), 1);
    }

    #[test]
    fn honest_exchange_decodes_clean() {
        let lines = vec![
            TraceLine::Record(TraceRecord {
                timestamp_ms: 0,
                direction: Direction::ClientToServer,
                bytes: encode_frame(OP_HELLO, b"cli"),
            }),
            TraceLine::Record(TraceRecord {
                timestamp_ms: 3,
                direction: Direction::ServerToClient,
                bytes: encode_frame(OP_OK, b"hello cli"),
            }),
        ];
        let listing = decode_records(&lines);
        assert_eq!(listing.frames().count(), 2);
        assert!(listing
            .frames()
            .all(|f| f.violations.is_empty() && f.checksum_ok));
        assert!(!listing.has_residue());
    }

    #[test]
    fn over_declared_frame_flags_length_mismatch_with_residue() {
        // declared = actual + 5, nothing after: the reviewer must call out
        // the length mismatch and show the unconsumable bytes.
        let mut bytes = vec![0x46, 0x54, 0x01, 0x01, 0x00, 0x00, 0x00, 0x09];
        bytes.extend_from_slice(b"AAAA");
        bytes.push(0x00); // checksum of AAAA
        let lines = vec![TraceLine::Record(TraceRecord {
            timestamp_ms: 7,
            direction: Direction::ClientToServer,
            bytes,
        })];
        let listing = decode_records(&lines);
        assert!(listing.has_violation("length-mismatch"));
        assert!(listing.has_residue());
        let rendered = render_listing(&listing);
        assert!(rendered.contains("length-mismatch"));
        assert!(rendered.contains("residue"));
    }

    #[test]
    fn frame_spanning_multiple_records_reassembles() {
        let frame = encode_frame(OP_OK, b"split across records");
        let (a, b) = frame.split_at(5);
        let lines = vec![
            TraceLine::Record(TraceRecord {
                timestamp_ms: 1,
                direction: Direction::ServerToClient,
                bytes: a.to_vec(),
            }),
            TraceLine::Record(TraceRecord {
                timestamp_ms: 2,
                direction: Direction::ServerToClient,
                bytes: b.to_vec(),
            }),
        ];
        let listing = decode_records(&lines);
        assert_eq!(listing.frames().count(), 1);
        assert_eq!(listing.frames().next().unwrap().timestamp_ms, 1);
    }

    #[test]
    fn empty_trace_is_empty_listing() {
        let listing = decode_records(&[]);
        assert!(listing.entries.is_empty());
        assert!(listing.warnings.is_empty());
        assert_eq!(render_listing(&listing), "(empty trace)\n");
    }

    #[test]
    fn garbage_direction_is_residue() {
        let lines = vec![TraceLine::Record(TraceRecord {
            timestamp_ms: 0,
            direction: Direction::ClientToServer,
            bytes: vec![0x00, 0x01, 0x02, 0x03, 0x04, 0x05, 0x06, 0x07, 0x08],
        })];
        let listing = decode_records(&lines);
        assert!(matches!(
            listing.entries.as_slice(),
            [ListingEntry::Residue { .. }]
        ));
    }
}
