//! Property tests over the codec invariants.

use proptest::prelude::*;

use cft::protocol::{
    checksum, decode_frame, decode_frame_slice, decode_payload, encode_frame, encode_payload,
    OpPayload, KNOWN_OPCODES,
};

fn text(max: usize) -> impl Strategy<Value = String> {
    proptest::string::string_regex(&format!(".{{0,{max}}}")).unwrap()
}

fn filename() -> impl Strategy<Value = String> {
    // Length-prefixed with u16; keep within that and vary widely.
    text(200)
}

prop_compose! {
    fn arb_payload()(variant in 0u8..9u8)(p in match variant {
        0 => text(300).prop_map(|client_id| OpPayload::Hello { client_id }).boxed(),
        1 => text(300).prop_map(|message| OpPayload::Ok { message }).boxed(),
        2 => (any::<u8>(), text(300))
            .prop_map(|(code, message)| OpPayload::Err { code, message })
            .boxed(),
        3 => (filename(), any::<u32>(), any::<u16>())
            .prop_map(|(filename, file_size, block_size)| OpPayload::PutReq {
                filename,
                file_size,
                block_size,
            })
            .boxed(),
        4 => (any::<u32>(), proptest::collection::vec(any::<u8>(), 0..2048))
            .prop_map(|(block_index, data)| OpPayload::Data { block_index, data })
            .boxed(),
        5 => Just(OpPayload::PutCommit).boxed(),
        6 => filename().prop_map(|filename| OpPayload::GetReq { filename }).boxed(),
        7 => any::<u32>().prop_map(|file_size| OpPayload::FileInfo { file_size }).boxed(),
        _ => Just(OpPayload::Bye).boxed(),
    }) -> OpPayload {
        p
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1024))]

    #[test]
    fn payload_round_trip(p in arb_payload()) {
        let body = encode_payload(&p);
        prop_assert_eq!(decode_payload(p.opcode(), &body).unwrap(), p);
    }

    #[test]
    fn frame_round_trip_via_slice(p in arb_payload()) {
        let bytes = p.to_frame_bytes();
        let dec = decode_frame_slice(&bytes);
        prop_assert!(dec.report.is_well_formed(), "{:?}", dec.report.violations);
        prop_assert_eq!(dec.consumed, bytes.len());
        let frame = dec.report.frame().unwrap();
        prop_assert_eq!(decode_payload(frame.opcode, &frame.payload).unwrap(), p);
    }

    #[test]
    fn encode_length_discipline(opcode in any::<u8>(), payload in proptest::collection::vec(any::<u8>(), 0..4096)) {
        prop_assert_eq!(encode_frame(opcode, &payload).len(), 9 + payload.len());
    }

    #[test]
    fn checksum_is_linear_under_concat(a in proptest::collection::vec(any::<u8>(), 0..512),
                                       b in proptest::collection::vec(any::<u8>(), 0..512)) {
        let mut joined = a.clone();
        joined.extend_from_slice(&b);
        prop_assert_eq!(checksum(&joined), checksum(&a) ^ checksum(&b));
    }

    #[test]
    fn decode_never_panics_on_garbage(bytes in proptest::collection::vec(any::<u8>(), 0..96)) {
        // Both decoders must return a report for arbitrary bytes.
        let _ = decode_frame_slice(&bytes);
        let _ = decode_frame(
            &mut std::io::Cursor::new(&bytes),
            std::time::Duration::from_millis(5),
        );
    }

    #[test]
    fn well_formed_iff_no_violations(p in arb_payload(), flip in any::<u8>()) {
        // Flipping the checksum byte always surfaces as a violation; the
        // untouched frame never has one.
        let mut bytes = p.to_frame_bytes();
        prop_assert!(decode_frame_slice(&bytes).report.is_well_formed());
        let last = bytes.len() - 1;
        bytes[last] ^= flip;
        let report = decode_frame_slice(&bytes).report;
        prop_assert_eq!(report.violations.is_empty(), flip == 0);
    }
}

#[test]
fn every_known_opcode_has_a_round_trippable_empty_or_minimal_body() {
    for op in KNOWN_OPCODES {
        let minimal: &[u8] = match op {
            0x01 | 0x02 => b"",
            0x03 => &[0x00],
            0x10 => &[0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00],
            0x11 => &[0x00, 0x00, 0x00, 0x00],
            0x20 => &[0x00, 0x00],
            0x21 => &[0x00, 0x00, 0x00, 0x00],
            _ => b"",
        };
        let decoded = decode_payload(op, minimal).unwrap();
        assert_eq!(decoded.opcode(), op);
        assert_eq!(encode_payload(&decoded), minimal);
    }
}
