//! Event triggers for acquisition systems: a framed TCP link, a simulated
//! TTL register, and a simulated acquisition server for verification.

pub mod frame;
mod link;
mod server;
mod ttl;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use link::{LinkState, TriggerLink, ACK_TIMEOUT, HANDSHAKE_TIMEOUT};
pub use server::{
    run_sim_server, AcquisitionTimeline, ServerError, ServerOptions, SimServer, TimelineEntry,
};
pub use ttl::{TtlRegister, TtlWrite};

/// Four printable ASCII bytes.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TriggerCode([u8; 4]);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("trigger code {0:?} is not exactly 4 printable ASCII characters")]
pub struct CodeInvalid(pub String);

impl TriggerCode {
    pub fn parse(s: &str) -> Result<Self, CodeInvalid> {
        let bytes: [u8; 4] = s
            .as_bytes()
            .try_into()
            .map_err(|_| CodeInvalid(s.to_string()))?;
        Self::from_bytes(bytes).map_err(|_| CodeInvalid(s.to_string()))
    }

    pub fn from_bytes(bytes: [u8; 4]) -> Result<Self, CodeInvalid> {
        if bytes.iter().all(|b| (0x20..=0x7E).contains(b)) {
            Ok(Self(bytes))
        } else {
            Err(CodeInvalid(String::from_utf8_lossy(&bytes).into_owned()))
        }
    }

    pub fn as_bytes(&self) -> &[u8; 4] {
        &self.0
    }

    pub fn as_str(&self) -> &str {
        std::str::from_utf8(&self.0).expect("printable ASCII")
    }
}

impl fmt::Display for TriggerCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Debug for TriggerCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TriggerCode({:?})", self.as_str())
    }
}

impl Serialize for TriggerCode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for TriggerCode {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        TriggerCode::parse(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TriggerMessage {
    pub code: TriggerCode,
    pub onset_us: u64,
    /// Zero for instantaneous events.
    pub duration_us: u64,
}

#[derive(Debug, Error)]
pub enum TriggerError {
    #[error("connection refused by {0}")]
    ConnectionRefused(String),
    #[error("acquisition server speaks protocol version {server:#04x}, expected {expected:#04x}")]
    HandshakeVersionMismatch { server: u8, expected: u8 },
    #[error("no handshake reply within 2 s")]
    HandshakeTimeout,
    #[error("trigger link closed")]
    LinkClosed,
    #[error("no acknowledgement within 500 ms")]
    AckTimeout,
    #[error(transparent)]
    CodeInvalid(#[from] CodeInvalid),
    #[error("onset {onset_us} µs precedes previous onset {previous_us} µs")]
    OnsetNotMonotone { onset_us: u64, previous_us: u64 },
    #[error("TTL register supports at most 255 distinct codes")]
    TtlCodeSpaceExhausted,
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("trigger I/O failed: {0}")]
    Io(#[from] std::io::Error),
}
