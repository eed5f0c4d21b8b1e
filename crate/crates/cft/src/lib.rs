//! Security-testing workbench for CFT, a compact binary file transfer
//! protocol.
//!
//! The crate has five parts:
//!
//! - [`protocol`] — the wire format: frames, opcodes, typed payloads,
//!   checksum, and lenient decoders that report violations instead of
//!   repairing them.
//! - [`server`] — a reference server with six individually toggleable
//!   seeded flaws; all flaws on models a legacy, vulnerable build, all
//!   flaws off the hardened release.
//! - [`client`] — a two-layer client: an honest session API for
//!   well-formed transfers, and a subversion API that puts arbitrary
//!   forged frames on the wire.
//! - [`harness`] — the categorized attack suite with a differential
//!   runner that proves each case fails the flawed server and passes the
//!   hardened one.
//! - [`trace`] — capture of raw per-direction traffic and an offline
//!   decoder that re-frames and annotates it.

pub mod client;
pub mod harness;
pub mod protocol;
pub mod server;
pub mod trace;

pub use protocol::{decode_frame, decode_payload, encode_frame, encode_payload, Frame, OpPayload};
