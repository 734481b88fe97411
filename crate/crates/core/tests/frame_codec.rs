use audexp_core::testing::trigger_message;
use audexp_core::trigger::frame::{Frame, FrameError, FrameType, HEADER_LEN, MAGIC};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn event_frames_round_trip(msg in trigger_message()) {
        let bytes = Frame::event(&msg).encode();
        prop_assert_eq!(bytes.len(), HEADER_LEN + 20);
        let (frame, used) = Frame::decode(&bytes).unwrap();
        prop_assert_eq!(used, bytes.len());
        prop_assert_eq!(frame.kind, FrameType::Event);
        prop_assert_eq!(frame.to_event().unwrap(), msg);
    }

    #[test]
    fn every_strict_prefix_is_incomplete(msg in trigger_message(), cut in 0usize..28) {
        let bytes = Frame::event(&msg).encode();
        let short = &bytes[..cut];
        match Frame::decode(short) {
            Err(FrameError::Incomplete(n)) => prop_assert!(n > 0 && cut + n <= bytes.len()),
            other => prop_assert!(false, "unexpected {:?}", other),
        }
    }

    #[test]
    fn stream_of_frames_decodes_in_order(msgs in proptest::collection::vec(trigger_message(), 0..20)) {
        let mut stream = Vec::new();
        for m in &msgs {
            stream.extend(Frame::event(m).encode());
        }
        let mut cursor = std::io::Cursor::new(stream);
        for m in &msgs {
            let f = Frame::read_from(&mut cursor).unwrap();
            prop_assert_eq!(&f.to_event().unwrap(), m);
        }
    }

    #[test]
    fn arbitrary_bytes_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..64)) {
        if let Ok((frame, used)) = Frame::decode(&bytes) {
            prop_assert!(used <= bytes.len());
            prop_assert_eq!(&bytes[..2], &MAGIC[..]);
            let _ = frame.to_event();
        }
    }
}

#[test]
fn known_event_bytes() {
    let msg = audexp_core::trigger::TriggerMessage {
        code: audexp_core::trigger::TriggerCode::parse("S001").unwrap(),
        onset_us: 1_000_000,
        duration_us: 250,
    };
    let expected: Vec<u8> = [
        &[0x41, 0x58, 0x01, 0x04, 0, 0, 0, 20][..],
        b"S001",
        &1_000_000u64.to_be_bytes(),
        &250u64.to_be_bytes(),
    ]
    .concat();
    assert_eq!(Frame::event(&msg).encode(), expected);
}
