//! The built-in attack case catalog.
//!
//! Every case carries the frame script to play, the vulnerability
//! signature that decides the verdict, and the single flaw it targets
//! (confirmatory probes target none and must stay SECURE everywhere).

use serde::{Deserialize, Serialize};

use crate::client::RawFrameSpec;
use crate::protocol::{
    OpPayload, ERR_BAD_SEQUENCE, ERR_FRAME_TOO_LARGE, ERR_MALFORMED, ERR_UNKNOWN_OP, KNOWN_OPCODES,
    OP_HELLO, OP_PUT_REQ,
};
use crate::server::{Flaw, DEFAULT_MAX_FILE_SIZE};

use super::bva::{bva_values, BvaField};

/// Filename placeholder resolved at run time to the absolute path of the
/// target's planted secret file. The absolute-path directory attack cannot
/// be written down statically without knowing the target's layout.
pub const SECRET_ABS_TOKEN: &str = "@SECRET_ABS@";

/// Marker planted by the stale-residue case's first session.
pub const STALE_MARKER: &[u8] = b"STALE-RESIDUE-9c51-SESSION-MARKER";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Category {
    Bva,
    MissingValues,
    ExtremeNumerics,
    LongStrings,
    MalformedSequence,
    DirectoryAttack,
    ConfirmatoryPut,
}

pub const ALL_CATEGORIES: [Category; 7] = [
    Category::Bva,
    Category::MissingValues,
    Category::ExtremeNumerics,
    Category::LongStrings,
    Category::MalformedSequence,
    Category::DirectoryAttack,
    Category::ConfirmatoryPut,
];

impl Category {
    pub fn name(&self) -> &'static str {
        match self {
            Category::Bva => "BVA",
            Category::MissingValues => "MissingValues",
            Category::ExtremeNumerics => "ExtremeNumerics",
            Category::LongStrings => "LongStrings",
            Category::MalformedSequence => "MalformedSequence",
            Category::DirectoryAttack => "DirectoryAttack",
            Category::ConfirmatoryPut => "ConfirmatoryPut",
        }
    }
}

impl std::fmt::Display for Category {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// How a case decides it has witnessed its vulnerability. Each signature
/// is decidable from the observed server events plus the crash counter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VulnSignature {
    /// Any reply carries the target's canary (or a leading chunk of it —
    /// small overruns leak fewer bytes than the full string).
    CanaryInReply,
    /// The connection died mid-protocol and the crash counter moved.
    SimulatedCrash,
    /// A decisive frame was answered OK where hardened must answer the
    /// given error code.
    IllegalAccept { expected_err_code: u8 },
    /// A length-corrupt frame was processed and answered like a valid one.
    SmearReply,
    /// A reply echoed bytes planted by an earlier session.
    StaleResidue { marker: Vec<u8> },
}

impl VulnSignature {
    pub fn name(&self) -> &'static str {
        match self {
            VulnSignature::CanaryInReply => "CanaryInReply",
            VulnSignature::SimulatedCrash => "SimulatedCrash",
            VulnSignature::IllegalAccept { .. } => "IllegalAccept",
            VulnSignature::SmearReply => "SmearReply",
            VulnSignature::StaleResidue { .. } => "StaleResidue",
        }
    }
}

/// One scripted action. `await_reply` steps read exactly one server event;
/// `decisive` marks the replies a verdict signature inspects.
#[derive(Debug, Clone, PartialEq)]
pub enum Step {
    /// Forged frame via the subversion layer.
    Raw {
        spec: RawFrameSpec,
        await_reply: bool,
        decisive: bool,
    },
    /// Well-formed frame for a typed payload, no client-side state checks.
    Payload {
        payload: OpPayload,
        await_reply: bool,
        decisive: bool,
    },
    /// Honest HELLO.
    Hello { client_id: String },
    /// Honest PUT (PutReq, Data blocks, PutCommit).
    PutFile {
        filename: String,
        content: Vec<u8>,
        block_size: u16,
    },
    /// Honest GET, collecting FileInfo and Data replies.
    Get { filename: String },
    /// Honest BYE.
    Bye,
    /// Drop the connection and open a fresh one.
    Reconnect,
}

#[derive(Debug, Clone)]
pub struct AttackCase {
    pub id: String,
    pub category: Category,
    pub description: String,
    pub script: Vec<Step>,
    pub signature: VulnSignature,
    pub targets_flaw: Option<Flaw>,
    /// Confirmatory cases must complete without a single ERR reply.
    pub expect_clean: bool,
}

fn payload_step(payload: OpPayload) -> Step {
    Step::Payload {
        payload,
        await_reply: true,
        decisive: false,
    }
}

fn decisive_payload(payload: OpPayload) -> Step {
    Step::Payload {
        payload,
        await_reply: true,
        decisive: true,
    }
}

fn hello() -> Step {
    Step::Hello {
        client_id: "cft-harness".into(),
    }
}

fn case(
    id: &str,
    category: Category,
    description: &str,
    script: Vec<Step>,
    signature: VulnSignature,
    targets_flaw: Option<Flaw>,
) -> AttackCase {
    AttackCase {
        id: id.into(),
        category,
        description: description.into(),
        script,
        signature,
        targets_flaw,
        expect_clean: false,
    }
}

fn confirmatory(id: &str, description: &str, script: Vec<Step>) -> AttackCase {
    AttackCase {
        id: id.into(),
        category: Category::ConfirmatoryPut,
        description: description.into(),
        script,
        signature: VulnSignature::SimulatedCrash,
        targets_flaw: None,
        expect_clean: true,
    }
}

fn dir_case(id: &str, description: &str, filename: &str) -> AttackCase {
    case(
        id,
        Category::DirectoryAttack,
        description,
        vec![
            hello(),
            Step::Get {
                filename: filename.into(),
            },
        ],
        VulnSignature::CanaryInReply,
        Some(Flaw::F1PathTraversal),
    )
}

/// Overrun case: PUT with block_size 4, then one DATA frame `excess` bytes
/// past the block.
fn overrun_case(id: &str, excess: usize, signature: VulnSignature) -> AttackCase {
    case(
        id,
        Category::Bva,
        &format!("DATA {excess} bytes past the negotiated block size"),
        vec![
            hello(),
            payload_step(OpPayload::PutReq {
                filename: format!("{}.bin", id.to_ascii_lowercase()),
                file_size: 8,
                block_size: 4,
            }),
            decisive_payload(OpPayload::Data {
                block_index: 0,
                data: vec![0x41; 4 + excess],
            }),
        ],
        signature,
        Some(Flaw::F2OverrunLeak),
    )
}

/// The full built-in suite. Every attack category has at least one case;
/// ids are unique.
pub fn builtin_cases() -> Vec<AttackCase> {
    // Confirmatory transfers first: they must succeed on flawed and
    // hardened alike.
    let mut cases = vec![
        confirmatory(
            "C-PUT-OK",
            "correctly formatted PUT of a small file",
            vec![
                hello(),
                Step::PutFile {
                    filename: "hello.txt".into(),
                    content: b"hello from the honest client\n".to_vec(),
                    block_size: 8,
                },
                Step::Bye,
            ],
        ),
        confirmatory(
            "C-BULK",
            "bulk PUT: 5001 one-byte DATA frames in a single session",
            vec![
                hello(),
                Step::PutFile {
                    filename: "bulk.bin".into(),
                    content: (0..5001u32).map(|i| (i % 251) as u8).collect(),
                    block_size: 1,
                },
                Step::Bye,
            ],
        ),
    ];

    // Directory attacks, confirmed by the canary coming back over GET.
    cases.push(dir_case(
        "C-DIR-1",
        "GET a parent-relative path to the planted secret",
        "../secret.txt",
    ));
    cases.push(dir_case(
        "C-DIR-2",
        "GET the secret by absolute path (layout learned at run time)",
        SECRET_ABS_TOKEN,
    ));
    cases.push(dir_case(
        "C-DIR-3",
        "GET a nested path that folds back out of the sandbox",
        "a/../../secret.txt",
    ));

    // Buffer overruns at three magnitudes.
    cases.push(overrun_case("C-OVR-S", 16, VulnSignature::CanaryInReply));
    cases.push(overrun_case("C-OVR-M", 128, VulnSignature::CanaryInReply));
    cases.push(overrun_case("C-OVR-L", 300, VulnSignature::SimulatedCrash));

    // Length-field subversion.
    cases.push(case(
        "C-LEN-UP",
        Category::MissingValues,
        "declared_length five bytes past the payload actually sent",
        vec![Step::Raw {
            spec: RawFrameSpec::honest(OP_HELLO, b"AAAA".to_vec()).with_declared(4 + 5),
            await_reply: true,
            decisive: true,
        }],
        VulnSignature::SmearReply,
        Some(Flaw::F3LengthSmearing),
    ));
    cases.push(case(
        "C-LEN-DOWN",
        Category::MalformedSequence,
        "declared_length five bytes short; the tail bytes become garbage frames",
        vec![Step::Raw {
            // 16-byte payload declared as 11. The byte consumed as the
            // checksum is 'Z' (0x5A); the true fold of the first 11 bytes
            // is 0x41, so integrity-checking builds must refuse it.
            spec: RawFrameSpec::honest(OP_HELLO, b"AAAAAAAAAAAZXXXX".to_vec()).with_declared(11),
            await_reply: true,
            decisive: true,
        }],
        VulnSignature::SmearReply,
        Some(Flaw::F3LengthSmearing),
    ));

    // Boundary values on block_size (16-bit field).
    let bs_field = BvaField {
        width: 16,
        min: 1,
        max: 4096,
        nominal: 512,
    };
    for v in bva_values(&bs_field) {
        cases.push(case(
            &format!("C-NUM-BS-{v}"),
            Category::Bva,
            &format!("PUT_REQ with boundary block_size {v}"),
            vec![
                hello(),
                decisive_payload(OpPayload::PutReq {
                    filename: format!("bva-bs-{v}.bin"),
                    file_size: 1024,
                    block_size: v as u16,
                }),
            ],
            VulnSignature::SimulatedCrash,
            // Zero divides the block count in the flawed build.
            (v == 0).then_some(Flaw::F4SignedConfusion),
        ));
    }

    // Extreme values on file_size (32-bit field).
    let fs_field = BvaField {
        width: 32,
        min: 0,
        max: DEFAULT_MAX_FILE_SIZE,
        nominal: 4096,
    };
    for v in bva_values(&fs_field) {
        let oversize = v > DEFAULT_MAX_FILE_SIZE;
        let signed_negative = v >= 0x8000_0000;
        let signature = if oversize {
            VulnSignature::IllegalAccept {
                expected_err_code: ERR_FRAME_TOO_LARGE,
            }
        } else {
            VulnSignature::SimulatedCrash
        };
        cases.push(case(
            &format!("C-NUM-FS-{v}"),
            Category::ExtremeNumerics,
            &format!("PUT_REQ with extreme file_size {v}"),
            vec![
                hello(),
                decisive_payload(OpPayload::PutReq {
                    filename: format!("bva-fs-{v}.bin"),
                    file_size: v,
                    block_size: 512,
                }),
            ],
            signature,
            (oversize && signed_negative).then_some(Flaw::F4SignedConfusion),
        ));
    }

    // Malformed sequences.
    cases.push(case(
        "C-SEQ-1",
        Category::MalformedSequence,
        "DATA before HELLO",
        vec![decisive_payload(OpPayload::Data {
            block_index: 0,
            data: b"out-of-order".to_vec(),
        })],
        VulnSignature::IllegalAccept {
            expected_err_code: ERR_BAD_SEQUENCE,
        },
        Some(Flaw::F5SequenceLax),
    ));
    cases.push(case(
        "C-SEQ-2",
        Category::MalformedSequence,
        "DATA before PUT_REQ",
        vec![
            hello(),
            decisive_payload(OpPayload::Data {
                block_index: 0,
                data: b"no transfer open".to_vec(),
            }),
        ],
        VulnSignature::IllegalAccept {
            expected_err_code: ERR_BAD_SEQUENCE,
        },
        Some(Flaw::F5SequenceLax),
    ));
    cases.push(case(
        "C-SEQ-3",
        Category::MalformedSequence,
        "double PUT_COMMIT",
        vec![
            hello(),
            payload_step(OpPayload::PutReq {
                filename: "seq3.bin".into(),
                file_size: 0,
                block_size: 4,
            }),
            payload_step(OpPayload::PutCommit),
            decisive_payload(OpPayload::PutCommit),
        ],
        VulnSignature::IllegalAccept {
            expected_err_code: ERR_BAD_SEQUENCE,
        },
        Some(Flaw::F5SequenceLax),
    ));
    cases.push(case(
        "C-SEQ-4",
        Category::MalformedSequence,
        "PUT_REQ while a transfer is already open",
        vec![
            hello(),
            payload_step(OpPayload::PutReq {
                filename: "seq4-a.bin".into(),
                file_size: 64,
                block_size: 16,
            }),
            decisive_payload(OpPayload::PutReq {
                filename: "seq4-b.bin".into(),
                file_size: 64,
                block_size: 16,
            }),
        ],
        VulnSignature::IllegalAccept {
            expected_err_code: ERR_BAD_SEQUENCE,
        },
        Some(Flaw::F5SequenceLax),
    ));
    cases.push(case(
        "C-SEQ-STALE",
        Category::MalformedSequence,
        "out-of-order DATA in two back-to-back sessions; the second echoes the first session's residue",
        vec![
            hello(),
            payload_step(OpPayload::Data {
                block_index: 0,
                data: STALE_MARKER.to_vec(),
            }),
            Step::Bye,
            Step::Reconnect,
            hello(),
            decisive_payload(OpPayload::Data {
                block_index: 0,
                data: b"probe".to_vec(),
            }),
        ],
        VulnSignature::StaleResidue {
            marker: STALE_MARKER.to_vec(),
        },
        Some(Flaw::F5SequenceLax),
    ));

    // Unknown-opcode sweep over every value the protocol does not define.
    let sweep: Vec<Step> = (0u8..=255)
        .filter(|op| !KNOWN_OPCODES.contains(op))
        .map(|op| Step::Raw {
            spec: RawFrameSpec::honest(op, Vec::new()),
            await_reply: true,
            decisive: true,
        })
        .collect();
    cases.push(case(
        "C-OPC-UNKNOWN",
        Category::MalformedSequence,
        "sweep of all undefined opcodes; hardened must refuse each one",
        sweep,
        VulnSignature::IllegalAccept {
            expected_err_code: ERR_UNKNOWN_OP,
        },
        Some(Flaw::F6DebugDisclosure),
    ));

    // Missing values.
    cases.push(case(
        "C-MISSING-1",
        Category::MissingValues,
        "PUT_REQ body cut off before file_size",
        vec![Step::Raw {
            // Declares a 5-byte filename, supplies one byte, stops.
            spec: RawFrameSpec::honest(OP_PUT_REQ, vec![0x00, 0x05, 0x61]),
            await_reply: true,
            decisive: true,
        }],
        VulnSignature::IllegalAccept {
            expected_err_code: ERR_MALFORMED,
        },
        None,
    ));
    cases.push(case(
        "C-MISSING-2",
        Category::MissingValues,
        "DATA frame carrying zero bytes of data",
        vec![
            hello(),
            payload_step(OpPayload::PutReq {
                filename: "m2.bin".into(),
                file_size: 8,
                block_size: 4,
            }),
            decisive_payload(OpPayload::Data {
                block_index: 0,
                data: Vec::new(),
            }),
        ],
        VulnSignature::SimulatedCrash,
        None,
    ));

    // Long strings.
    cases.push(case(
        "C-LONG-1",
        Category::LongStrings,
        "PUT_REQ with a 60000-byte filename",
        vec![
            hello(),
            decisive_payload(OpPayload::PutReq {
                filename: "A".repeat(60_000),
                file_size: 16,
                block_size: 4,
            }),
        ],
        VulnSignature::SimulatedCrash,
        None,
    ));

    cases
}
