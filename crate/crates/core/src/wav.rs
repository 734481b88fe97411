//! RIFF/WAVE probing and the playback abstraction.
//!
//! Only uncompressed PCM (format tag 1) at 16, 24 or 32 bits is accepted.
//! Chunks other than `fmt ` and `data` are skipped; odd-sized chunks are
//! followed by one pad byte.

use std::fs::File;
use std::io::{self, BufReader, Read, Seek, SeekFrom, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::ClockHandle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WavInfo {
    pub channels: u16,
    pub sample_rate_hz: u32,
    pub bits_per_sample: u16,
    pub n_frames: u64,
}

impl WavInfo {
    pub fn duration_s(&self) -> f64 {
        self.n_frames as f64 / f64::from(self.sample_rate_hz)
    }

    /// Duration rounded up to whole microseconds, so that `t >= onset +
    /// duration_us()` holds exactly when the clip has finished.
    pub fn duration_us(&self) -> u64 {
        let num = u128::from(self.n_frames) * 1_000_000;
        let den = u128::from(self.sample_rate_hz);
        num.div_ceil(den) as u64
    }

    pub fn block_align(&self) -> u64 {
        u64::from(self.channels) * u64::from(self.bits_per_sample / 8)
    }

    pub fn data_len(&self) -> u64 {
        self.n_frames * self.block_align()
    }
}

#[derive(Debug, Error)]
pub enum WavError {
    #[error("not a RIFF file")]
    NotRiff,
    #[error("RIFF file is not WAVE")]
    NotWave,
    #[error("unsupported encoding (format tag {0:#06x}); only PCM is accepted")]
    UnsupportedEncoding(u16),
    #[error("unsupported bit depth {0}; expected 16, 24 or 32")]
    UnsupportedBitDepth(u16),
    #[error("malformed fmt chunk: {0}")]
    InvalidFormat(&'static str),
    #[error("data chunk declares {declared} bytes but only {available} are present")]
    TruncatedData { declared: u64, available: u64 },
    #[error("missing fmt chunk")]
    MissingFmtChunk,
    #[error("missing data chunk")]
    MissingDataChunk,
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn probe_wav(path: impl AsRef<Path>) -> Result<WavInfo, WavError> {
    let file = File::open(path)?;
    probe_reader(BufReader::new(file))
}

pub fn probe_bytes(bytes: &[u8]) -> Result<WavInfo, WavError> {
    probe_reader(io::Cursor::new(bytes))
}

struct Fmt {
    channels: u16,
    sample_rate_hz: u32,
    bits_per_sample: u16,
}

pub fn probe_reader<R: Read + Seek>(mut r: R) -> Result<WavInfo, WavError> {
    let total = r.seek(SeekFrom::End(0))?;
    r.seek(SeekFrom::Start(0))?;

    let mut header = [0u8; 12];
    if total < 12 {
        return Err(WavError::NotRiff);
    }
    r.read_exact(&mut header)?;
    if &header[0..4] != b"RIFF" {
        return Err(WavError::NotRiff);
    }
    if &header[8..12] != b"WAVE" {
        return Err(WavError::NotWave);
    }

    let mut fmt: Option<Fmt> = None;
    let mut data_len: Option<u64> = None;
    let mut pos = 12u64;
    while pos + 8 <= total {
        let mut chunk = [0u8; 8];
        r.read_exact(&mut chunk)?;
        let id = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let size = u64::from(u32::from_le_bytes([chunk[4], chunk[5], chunk[6], chunk[7]]));
        let body = pos + 8;
        let available = total - body;
        match &id {
            b"fmt " => {
                if size < 16 || available < 16 {
                    return Err(WavError::InvalidFormat("fmt chunk shorter than 16 bytes"));
                }
                let mut f = [0u8; 16];
                r.read_exact(&mut f)?;
                fmt = Some(parse_fmt(&f)?);
            }
            b"data" => {
                if size > available {
                    return Err(WavError::TruncatedData {
                        declared: size,
                        available,
                    });
                }
                data_len = Some(size);
            }
            _ => {}
        }
        pos = body + size + (size & 1);
        if data_len.is_some() && fmt.is_some() {
            break;
        }
        r.seek(SeekFrom::Start(pos.min(total)))?;
    }

    let fmt = fmt.ok_or(WavError::MissingFmtChunk)?;
    let data_len = data_len.ok_or(WavError::MissingDataChunk)?;
    let block = u64::from(fmt.channels) * u64::from(fmt.bits_per_sample / 8);
    if data_len % block != 0 {
        return Err(WavError::InvalidFormat(
            "data length is not a whole number of frames",
        ));
    }
    Ok(WavInfo {
        channels: fmt.channels,
        sample_rate_hz: fmt.sample_rate_hz,
        bits_per_sample: fmt.bits_per_sample,
        n_frames: data_len / block,
    })
}

fn parse_fmt(f: &[u8; 16]) -> Result<Fmt, WavError> {
    let u16_at = |i: usize| u16::from_le_bytes([f[i], f[i + 1]]);
    let u32_at = |i: usize| u32::from_le_bytes([f[i], f[i + 1], f[i + 2], f[i + 3]]);
    let tag = u16_at(0);
    if tag != 1 {
        return Err(WavError::UnsupportedEncoding(tag));
    }
    let channels = u16_at(2);
    let sample_rate_hz = u32_at(4);
    let byte_rate = u32_at(8);
    let block_align = u16_at(12);
    let bits_per_sample = u16_at(14);
    if !matches!(bits_per_sample, 16 | 24 | 32) {
        return Err(WavError::UnsupportedBitDepth(bits_per_sample));
    }
    if channels == 0 {
        return Err(WavError::InvalidFormat("zero channels"));
    }
    if sample_rate_hz == 0 {
        return Err(WavError::InvalidFormat("zero sample rate"));
    }
    let expected_align = u32::from(channels) * u32::from(bits_per_sample / 8);
    if u32::from(block_align) != expected_align {
        return Err(WavError::InvalidFormat(
            "block align disagrees with channels and bit depth",
        ));
    }
    if u64::from(byte_rate) != u64::from(sample_rate_hz) * u64::from(expected_align) {
        return Err(WavError::InvalidFormat(
            "byte rate disagrees with sample rate",
        ));
    }
    Ok(Fmt {
        channels,
        sample_rate_hz,
        bits_per_sample,
    })
}

/// Writes a canonical 44-byte-header PCM file. Used for fixtures and demo
/// stimuli; `samples` are interleaved and truncated to `bits_per_sample`.
pub fn write_pcm_wav<W: Write>(
    mut w: W,
    channels: u16,
    sample_rate_hz: u32,
    bits_per_sample: u16,
    samples: &[i32],
) -> io::Result<()> {
    let bytes_per_sample = usize::from(bits_per_sample / 8);
    let data_len = (samples.len() * bytes_per_sample) as u32;
    let block_align = channels * (bits_per_sample / 8);
    w.write_all(b"RIFF")?;
    w.write_all(&(36 + data_len + (data_len & 1)).to_le_bytes())?;
    w.write_all(b"WAVEfmt ")?;
    w.write_all(&16u32.to_le_bytes())?;
    w.write_all(&1u16.to_le_bytes())?;
    w.write_all(&channels.to_le_bytes())?;
    w.write_all(&sample_rate_hz.to_le_bytes())?;
    w.write_all(&(sample_rate_hz * u32::from(block_align)).to_le_bytes())?;
    w.write_all(&block_align.to_le_bytes())?;
    w.write_all(&bits_per_sample.to_le_bytes())?;
    w.write_all(b"data")?;
    w.write_all(&data_len.to_le_bytes())?;
    for s in samples {
        w.write_all(&s.to_le_bytes()[..bytes_per_sample])?;
    }
    if data_len & 1 == 1 {
        w.write_all(&[0])?;
    }
    Ok(())
}

/// Writes a mono 16-bit sine tone.
pub fn write_tone(
    path: impl AsRef<Path>,
    sample_rate_hz: u32,
    n_frames: usize,
    freq_hz: f64,
) -> io::Result<()> {
    let samples: Vec<i32> = (0..n_frames)
        .map(|i| {
            let t = i as f64 / f64::from(sample_rate_hz);
            ((2.0 * std::f64::consts::PI * freq_hz * t).sin() * 8000.0) as i32
        })
        .collect();
    let file = io::BufWriter::new(File::create(path)?);
    write_pcm_wav(file, 1, sample_rate_hz, 16, &samples)
}

/// A stimulus ready to play.
#[derive(Debug, Clone, PartialEq)]
pub struct Clip {
    pub index: usize,
    pub info: WavInfo,
    /// Shown next to the playing stimulus in comparison trials.
    pub label: Option<String>,
}

#[derive(Debug, Error)]
pub enum PlaybackError {
    #[error("playback device failed: {0}")]
    Device(String),
    #[error("playback interface closed")]
    Closed,
}

/// Where stimuli are played. Onsets returned by `start` are never earlier
/// than the requested time and never earlier than a previous onset.
pub trait PlaybackPort {
    /// Starts `clip`; returns the actual onset timestamp.
    fn start(&mut self, clip: &Clip, requested_us: u64) -> Result<u64, PlaybackError>;

    fn is_done(&mut self, clip: &Clip) -> Result<bool, PlaybackError>;

    /// Blocks until `clip` has finished; returns the offset timestamp.
    fn wait_done(&mut self, clip: &Clip) -> Result<u64, PlaybackError>;
}

/// Headless playback: a clip occupies exactly its duration on the clock.
#[derive(Debug)]
pub struct SimulatedPlayback {
    clock: ClockHandle,
    current: Option<(usize, u64, u64)>,
    last_onset: u64,
}

impl SimulatedPlayback {
    pub fn new(clock: ClockHandle) -> Self {
        Self {
            clock,
            current: None,
            last_onset: 0,
        }
    }

    fn end_of(&self, clip: &Clip) -> u64 {
        match self.current {
            Some((index, _, end)) if index == clip.index => end,
            // A clip that was never started counts as finished.
            _ => 0,
        }
    }
}

impl PlaybackPort for SimulatedPlayback {
    fn start(&mut self, clip: &Clip, requested_us: u64) -> Result<u64, PlaybackError> {
        self.clock.wait_until(requested_us.max(self.last_onset));
        let onset = self.clock.now_us();
        self.last_onset = onset;
        self.current = Some((clip.index, onset, onset + clip.info.duration_us()));
        Ok(onset)
    }

    fn is_done(&mut self, clip: &Clip) -> Result<bool, PlaybackError> {
        Ok(self.clock.now_us() >= self.end_of(clip))
    }

    fn wait_done(&mut self, clip: &Clip) -> Result<u64, PlaybackError> {
        self.clock.wait_until(self.end_of(clip));
        Ok(self.clock.now_us())
    }
}
