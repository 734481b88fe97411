//! Acquisition-link frames.
//!
//! ```text
//! +------+------+---------+------+----------------+-----------+
//! | 0x41 | 0x58 | version | type | length (u32 BE) | payload   |
//! +------+------+---------+------+----------------+-----------+
//! ```
//!
//! `EVENT` payloads are the 4 code bytes, `onset_us` (u64 BE) and
//! `duration_us` (u64 BE). `ACK` carries the acknowledged frame type.
//! `HELLO` may carry a UTF-8 client name; the other types are empty.

use std::io::{self, Read, Write};

use thiserror::Error;

use super::{TriggerCode, TriggerMessage};

pub const MAGIC: [u8; 2] = [0x41, 0x58];
pub const PROTOCOL_VERSION: u8 = 0x01;
pub const HEADER_LEN: usize = 8;
pub const EVENT_PAYLOAD_LEN: usize = 20;
/// Frames larger than this are treated as corrupt.
pub const MAX_PAYLOAD_LEN: u32 = 64 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum FrameType {
    Hello = 0x01,
    Ack = 0x02,
    Begin = 0x03,
    Event = 0x04,
    End = 0x05,
    Bye = 0x06,
}

impl FrameType {
    pub fn from_byte(b: u8) -> Option<Self> {
        Some(match b {
            0x01 => FrameType::Hello,
            0x02 => FrameType::Ack,
            0x03 => FrameType::Begin,
            0x04 => FrameType::Event,
            0x05 => FrameType::End,
            0x06 => FrameType::Bye,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub version: u8,
    pub kind: FrameType,
    pub payload: Vec<u8>,
}

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("bad magic {0:#04x} {1:#04x}")]
    BadMagic(u8, u8),
    #[error("unknown frame type {0:#04x}")]
    UnknownType(u8),
    #[error("payload of {0} bytes exceeds the frame limit")]
    TooLarge(u32),
    #[error("{kind:?} payload has {len} bytes")]
    BadPayload { kind: FrameType, len: usize },
    #[error("trigger code is not 4 printable ASCII bytes")]
    BadCode,
    #[error("need {0} more bytes")]
    Incomplete(usize),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Frame {
    pub fn new(kind: FrameType, payload: Vec<u8>) -> Self {
        Self {
            version: PROTOCOL_VERSION,
            kind,
            payload,
        }
    }

    pub fn empty(kind: FrameType) -> Self {
        Self::new(kind, Vec::new())
    }

    pub fn ack(of: FrameType) -> Self {
        Self::new(FrameType::Ack, vec![of as u8])
    }

    pub fn event(msg: &TriggerMessage) -> Self {
        let mut payload = Vec::with_capacity(EVENT_PAYLOAD_LEN);
        payload.extend_from_slice(msg.code.as_bytes());
        payload.extend_from_slice(&msg.onset_us.to_be_bytes());
        payload.extend_from_slice(&msg.duration_us.to_be_bytes());
        Self::new(FrameType::Event, payload)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.len());
        out.extend_from_slice(&MAGIC);
        out.push(self.version);
        out.push(self.kind as u8);
        out.extend_from_slice(&(self.payload.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    /// Decodes one frame from the front of `buf`, returning it and the
    /// number of bytes consumed.
    pub fn decode(buf: &[u8]) -> Result<(Frame, usize), FrameError> {
        if buf.len() < HEADER_LEN {
            return Err(FrameError::Incomplete(HEADER_LEN - buf.len()));
        }
        let header: [u8; HEADER_LEN] = buf[..HEADER_LEN].try_into().expect("length checked");
        let (version, kind, len) = parse_header(&header)?;
        let total = HEADER_LEN + len as usize;
        if buf.len() < total {
            return Err(FrameError::Incomplete(total - buf.len()));
        }
        Ok((
            Frame {
                version,
                kind,
                payload: buf[HEADER_LEN..total].to_vec(),
            },
            total,
        ))
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Frame, FrameError> {
        let mut header = [0u8; HEADER_LEN];
        r.read_exact(&mut header)?;
        let (version, kind, len) = parse_header(&header)?;
        let mut payload = vec![0u8; len as usize];
        r.read_exact(&mut payload)?;
        Ok(Frame {
            version,
            kind,
            payload,
        })
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> io::Result<()> {
        w.write_all(&self.encode())?;
        w.flush()
    }

    pub fn to_event(&self) -> Result<TriggerMessage, FrameError> {
        if self.kind != FrameType::Event || self.payload.len() != EVENT_PAYLOAD_LEN {
            return Err(FrameError::BadPayload {
                kind: self.kind,
                len: self.payload.len(),
            });
        }
        let p = &self.payload;
        let code =
            TriggerCode::from_bytes([p[0], p[1], p[2], p[3]]).map_err(|_| FrameError::BadCode)?;
        Ok(TriggerMessage {
            code,
            onset_us: u64::from_be_bytes(p[4..12].try_into().expect("fixed slice")),
            duration_us: u64::from_be_bytes(p[12..20].try_into().expect("fixed slice")),
        })
    }

    /// The frame type an `ACK` acknowledges.
    pub fn acked_type(&self) -> Option<FrameType> {
        match (self.kind, self.payload.as_slice()) {
            (FrameType::Ack, [b]) => FrameType::from_byte(*b),
            _ => None,
        }
    }
}

fn parse_header(h: &[u8; HEADER_LEN]) -> Result<(u8, FrameType, u32), FrameError> {
    if h[0..2] != MAGIC {
        return Err(FrameError::BadMagic(h[0], h[1]));
    }
    let kind = FrameType::from_byte(h[3]).ok_or(FrameError::UnknownType(h[3]))?;
    let len = u32::from_be_bytes([h[4], h[5], h[6], h[7]]);
    if len > MAX_PAYLOAD_LEN {
        return Err(FrameError::TooLarge(len));
    }
    Ok((h[2], kind, len))
}
