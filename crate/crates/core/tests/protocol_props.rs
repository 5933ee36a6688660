use std::io::Cursor;

use proptest::prelude::*;

use neurofarm_core::evalmod::{FitnessRecord, Status, Termination};
use neurofarm_core::farm::protocol::*;

fn termination() -> impl Strategy<Value = Termination> {
    prop_oneof![Just(Termination::Dead), Just(Termination::Timeout), Just(Termination::Stopped)]
}

fn status() -> impl Strategy<Value = Status> {
    (0u32..=5).prop_map(|s| Status::from_u32(s).unwrap())
}

fn record() -> impl Strategy<Value = FitnessRecord> {
    (any::<u64>(), any::<i32>(), any::<u32>(), termination(), any::<u64>()).prop_map(
        |(genome_id, score, frames, termination, eval_seed)| FitnessRecord {
            genome_id,
            score,
            frames,
            termination,
            eval_seed,
        },
    )
}

fn target() -> impl Strategy<Value = BulkTarget> {
    prop_oneof![Just(BulkTarget::Param), Just(BulkTarget::Rom), Just(BulkTarget::GenomeCache)]
}

fn message() -> impl Strategy<Value = Message> {
    prop_oneof![
        (any::<u32>(), any::<u16>()).prop_map(|(flags, module_count)| Message::Hello { flags, module_count }),
        (any::<u16>(), any::<u32>()).prop_map(|(module, addr)| Message::RegRead { module, addr }),
        (any::<u16>(), any::<u32>(), any::<u64>()).prop_map(|(module, addr, value)| Message::RegWrite { module, addr, value }),
        (any::<u16>(), target(), any::<u64>(), any::<u32>(), prop::collection::vec(any::<u8>(), 0..600)).prop_map(
            |(module, target, key, offset, data)| Message::BulkWrite { module, target, key, offset, data }
        ),
        (any::<u16>(), any::<u64>(), any::<u32>(), any::<u32>(), any::<u64>()).prop_map(
            |(module, genome_id, game_id, frame_cap, seed)| Message::StartJob { module, genome_id, game_id, frame_cap, seed }
        ),
        any::<u16>().prop_map(|module| Message::Poll { module }),
        (any::<u16>(), record()).prop_map(|(module, record)| Message::Result { module, record }),
        (any::<u16>(), ".{0,40}").prop_map(|(code, message)| Message::Error { code, message }),
        Just(Message::Ack),
        any::<u64>().prop_map(|value| Message::RegValue { value }),
        (any::<u16>(), status(), any::<i32>(), any::<u32>(), any::<u64>(), any::<u64>(), any::<u64>()).prop_map(
            |(module, status, score, frame_count, clock_count, genome_id, eval_seed)| {
                Message::Status(ModuleStatus { module, status, score, frame_count, clock_count, genome_id, eval_seed })
            }
        ),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn encode_decode_roundtrip(m in message()) {
        let frame = m.encode();
        prop_assert_eq!(&frame[..4], &MAGIC[..]);
        prop_assert_eq!(Message::decode(&frame).unwrap(), m.clone());
        let mut buf = Vec::new();
        let n = write_message(&mut buf, &m).unwrap();
        prop_assert_eq!(n, frame.len());
        let (back, read) = read_message(&mut Cursor::new(buf)).unwrap();
        prop_assert_eq!(back, m);
        prop_assert_eq!(read, n);
    }

    #[test]
    fn truncated_frames_are_rejected(m in message(), cut in any::<prop::sample::Index>()) {
        let frame = m.encode();
        let at = cut.index(frame.len());
        prop_assert!(Message::decode(&frame[..at]).is_err());
    }

    #[test]
    fn garbage_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..64)) {
        let _ = Message::decode(&bytes);
        let _ = read_message(&mut Cursor::new(bytes));
    }
}

#[test]
fn header_checks() {
    let mut frame = Message::Ack.encode();
    assert_eq!(frame.len(), HEADER_LEN);
    frame[0] = b'X';
    assert!(matches!(Message::decode(&frame), Err(ProtocolError::BadMagic(_))));
    let mut frame = Message::Ack.encode();
    frame[4] = VERSION + 1;
    assert!(matches!(Message::decode(&frame), Err(ProtocolError::BadVersion(_))));
    let mut frame = Message::Ack.encode();
    frame[5] = 200;
    assert!(matches!(Message::decode(&frame), Err(ProtocolError::UnknownType(200))));
    let mut frame = Message::Ack.encode();
    frame[6..10].copy_from_slice(&(MAX_PAYLOAD + 1).to_le_bytes());
    assert!(read_message(&mut Cursor::new(frame)).is_err());
}
