use std::io::Cursor;

use audexp_core::wav::{probe_bytes, probe_reader, probe_wav, write_pcm_wav, WavError};
use proptest::prelude::*;

/// Builds a RIFF file with extra chunks around `fmt ` and `data`, as
/// editors commonly write them.
fn with_extra_chunks(channels: u16, rate: u32, bits: u16, frames: usize, junk: &[u8]) -> Vec<u8> {
    let block = usize::from(channels) * usize::from(bits / 8);
    let mut body = Vec::new();
    body.extend_from_slice(b"WAVE");
    body.extend_from_slice(b"LIST");
    body.extend_from_slice(&(junk.len() as u32).to_le_bytes());
    body.extend_from_slice(junk);
    if junk.len() % 2 == 1 {
        body.push(0);
    }
    body.extend_from_slice(b"fmt ");
    body.extend_from_slice(&16u32.to_le_bytes());
    body.extend_from_slice(&1u16.to_le_bytes());
    body.extend_from_slice(&channels.to_le_bytes());
    body.extend_from_slice(&rate.to_le_bytes());
    body.extend_from_slice(&(rate * block as u32).to_le_bytes());
    body.extend_from_slice(&(block as u16).to_le_bytes());
    body.extend_from_slice(&bits.to_le_bytes());
    body.extend_from_slice(b"data");
    body.extend_from_slice(&((frames * block) as u32).to_le_bytes());
    body.resize(body.len() + frames * block, 0);
    let mut out = b"RIFF".to_vec();
    out.extend_from_slice(&(body.len() as u32).to_le_bytes());
    out.extend(body);
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn header_fields_are_recovered(
        channels in 1u16..=8,
        rate in prop_oneof![Just(8000u32), Just(22_050), Just(44_100), Just(48_000), 1u32..200_000],
        bits in prop_oneof![Just(16u16), Just(24), Just(32)],
        frames in 0usize..2000,
        junk in proptest::collection::vec(any::<u8>(), 0..9),
    ) {
        let bytes = with_extra_chunks(channels, rate, bits, frames, &junk);
        let info = probe_bytes(&bytes).unwrap();
        prop_assert_eq!(info.channels, channels);
        prop_assert_eq!(info.sample_rate_hz, rate);
        prop_assert_eq!(info.bits_per_sample, bits);
        prop_assert_eq!(info.n_frames, frames as u64);
        // Ceiling of frames / rate in microseconds.
        let exact = frames as u128 * 1_000_000;
        let expected = exact.div_ceil(u128::from(rate)) as u64;
        prop_assert_eq!(info.duration_us(), expected);
        prop_assert_eq!(probe_reader(Cursor::new(&bytes)).unwrap(), info);
    }

    #[test]
    fn truncation_is_detected(frames in 2usize..500, cut in 1usize..100) {
        let mut bytes = Vec::new();
        write_pcm_wav(&mut bytes, 1, 8000, 16, &vec![0; frames]).unwrap();
        let cut = cut.min(frames * 2 - 1);
        bytes.truncate(bytes.len() - cut);
        let truncated = matches!(probe_bytes(&bytes), Err(WavError::TruncatedData { .. }));
        prop_assert!(truncated);
    }

    #[test]
    fn arbitrary_bytes_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..128)) {
        let _ = probe_bytes(&bytes);
    }

    #[test]
    fn mutated_headers_never_panic(pos in 0usize..44, byte in any::<u8>()) {
        let mut bytes = Vec::new();
        write_pcm_wav(&mut bytes, 2, 44_100, 16, &[0; 64]).unwrap();
        bytes[pos] = byte;
        let _ = probe_bytes(&bytes);
    }
}

#[test]
fn probing_leaves_the_file_untouched() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tone.wav");
    audexp_core::wav::write_tone(&path, 44_100, 44_100, 440.0).unwrap();
    let before = std::fs::read(&path).unwrap();
    let meta = std::fs::metadata(&path).unwrap().modified().unwrap();
    let info = probe_wav(&path).unwrap();
    assert_eq!(info.duration_us(), 1_000_000);
    assert_eq!(std::fs::read(&path).unwrap(), before);
    assert_eq!(std::fs::metadata(&path).unwrap().modified().unwrap(), meta);
}
