use std::io::{self, BufReader, BufWriter};
use std::net::{TcpStream, ToSocketAddrs};
use std::time::Duration;

use super::frame::{Frame, FrameError, FrameType, PROTOCOL_VERSION};
use super::{TriggerCode, TriggerError, TriggerMessage, TtlRegister};
use crate::clock::ClockHandle;
use crate::spec::{TriggerConfig, TriggerMode};

pub const HANDSHAKE_TIMEOUT: Duration = Duration::from_secs(2);
pub const ACK_TIMEOUT: Duration = Duration::from_millis(500);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkState {
    Connected,
    Closed,
}

#[derive(Debug)]
enum Transport {
    Tcp {
        reader: BufReader<TcpStream>,
        writer: BufWriter<TcpStream>,
    },
    Ttl(TtlRegister),
}

/// One session's connection to the acquisition side. Sends are
/// stop-and-wait: each TCP frame returns only after its ACK.
#[derive(Debug)]
pub struct TriggerLink {
    transport: Transport,
    clock: ClockHandle,
    state: LinkState,
    last_onset_us: Option<u64>,
    sent: usize,
}

impl TriggerLink {
    pub fn connect(config: &TriggerConfig, clock: ClockHandle) -> Result<Self, TriggerError> {
        match config.mode {
            TriggerMode::Tcp => Self::connect_tcp(&config.endpoint(), clock),
            TriggerMode::SimulatedTtl => Ok(Self::ttl(config.pulse_width_ms, clock)),
        }
    }

    pub fn ttl(pulse_width_ms: u32, clock: ClockHandle) -> Self {
        Self {
            transport: Transport::Ttl(TtlRegister::new(pulse_width_ms)),
            clock,
            state: LinkState::Connected,
            last_onset_us: None,
            sent: 0,
        }
    }

    pub fn connect_tcp(endpoint: &str, clock: ClockHandle) -> Result<Self, TriggerError> {
        let addrs: Vec<_> = endpoint
            .to_socket_addrs()
            .map_err(|_| TriggerError::ConnectionRefused(endpoint.to_string()))?
            .collect();
        let stream = addrs
            .iter()
            .find_map(|a| TcpStream::connect_timeout(a, HANDSHAKE_TIMEOUT).ok())
            .ok_or_else(|| TriggerError::ConnectionRefused(endpoint.to_string()))?;
        stream.set_nodelay(true)?;
        stream.set_read_timeout(Some(HANDSHAKE_TIMEOUT))?;
        let mut link = Self {
            transport: Transport::Tcp {
                reader: BufReader::new(stream.try_clone()?),
                writer: BufWriter::new(stream),
            },
            clock,
            state: LinkState::Connected,
            last_onset_us: None,
            sent: 0,
        };
        link.write(&Frame::new(FrameType::Hello, b"audexp".to_vec()))?;
        let reply = link.read_reply().map_err(|e| match e {
            TriggerError::AckTimeout => TriggerError::HandshakeTimeout,
            other => other,
        })?;
        if reply.version != PROTOCOL_VERSION {
            link.state = LinkState::Closed;
            return Err(TriggerError::HandshakeVersionMismatch {
                server: reply.version,
                expected: PROTOCOL_VERSION,
            });
        }
        if reply.acked_type() != Some(FrameType::Hello) {
            return Err(TriggerError::Protocol("expected ACK of HELLO".into()));
        }
        if let Transport::Tcp { reader, .. } = &link.transport {
            reader.get_ref().set_read_timeout(Some(ACK_TIMEOUT))?;
        }
        Ok(link)
    }

    pub fn state(&self) -> LinkState {
        self.state
    }

    /// Number of events delivered so far.
    pub fn sent(&self) -> usize {
        self.sent
    }

    pub fn ttl_register(&self) -> Option<&TtlRegister> {
        match &self.transport {
            Transport::Ttl(reg) => Some(reg),
            Transport::Tcp { .. } => None,
        }
    }

    pub fn begin(&mut self) -> Result<(), TriggerError> {
        self.control(FrameType::Begin)
    }

    pub fn end(&mut self) -> Result<(), TriggerError> {
        self.control(FrameType::End)
    }

    /// Sends `BYE` and closes. Safe to call on a closed link.
    pub fn close(&mut self) -> Result<(), TriggerError> {
        if self.state == LinkState::Closed {
            return Ok(());
        }
        let result = self.control(FrameType::Bye);
        self.state = LinkState::Closed;
        if let Transport::Tcp { writer, .. } = &self.transport {
            let _ = writer.get_ref().shutdown(std::net::Shutdown::Both);
        }
        result
    }

    pub fn send_code(
        &mut self,
        code: &str,
        onset_us: u64,
        duration_us: u64,
    ) -> Result<TriggerMessage, TriggerError> {
        let msg = TriggerMessage {
            code: TriggerCode::parse(code)?,
            onset_us,
            duration_us,
        };
        self.send_event(&msg)?;
        Ok(msg)
    }

    pub fn send_event(&mut self, msg: &TriggerMessage) -> Result<(), TriggerError> {
        if self.state == LinkState::Closed {
            return Err(TriggerError::LinkClosed);
        }
        if let Some(prev) = self.last_onset_us {
            if msg.onset_us < prev {
                return Err(TriggerError::OnsetNotMonotone {
                    onset_us: msg.onset_us,
                    previous_us: prev,
                });
            }
        }
        match &mut self.transport {
            Transport::Ttl(reg) => {
                // Pulses never overlap: wait for the line to return to zero.
                self.clock.wait_until(reg.idle_at_us());
                reg.pulse(msg.code, self.clock.now_us())?;
            }
            Transport::Tcp { .. } => {
                self.write(&Frame::event(msg))?;
                self.expect_ack(FrameType::Event)?;
            }
        }
        self.last_onset_us = Some(msg.onset_us);
        self.sent += 1;
        Ok(())
    }

    fn control(&mut self, kind: FrameType) -> Result<(), TriggerError> {
        if self.state == LinkState::Closed {
            return Err(TriggerError::LinkClosed);
        }
        if let Transport::Tcp { .. } = self.transport {
            self.write(&Frame::empty(kind))?;
            self.expect_ack(kind)?;
        }
        Ok(())
    }

    fn write(&mut self, frame: &Frame) -> Result<(), TriggerError> {
        let Transport::Tcp { writer, .. } = &mut self.transport else {
            return Ok(());
        };
        frame.write_to(writer).map_err(|e| {
            self.state = LinkState::Closed;
            map_io(e)
        })
    }

    fn read_reply(&mut self) -> Result<Frame, TriggerError> {
        let Transport::Tcp { reader, .. } = &mut self.transport else {
            return Err(TriggerError::Protocol("no reply channel on TTL".into()));
        };
        Frame::read_from(reader).map_err(|e| {
            let err = match e {
                FrameError::Io(io) => map_io(io),
                other => TriggerError::Protocol(other.to_string()),
            };
            if !matches!(err, TriggerError::AckTimeout) {
                self.state = LinkState::Closed;
            }
            err
        })
    }

    fn expect_ack(&mut self, of: FrameType) -> Result<(), TriggerError> {
        let reply = self.read_reply()?;
        if reply.acked_type() == Some(of) {
            Ok(())
        } else {
            self.state = LinkState::Closed;
            Err(TriggerError::Protocol(format!(
                "expected ACK of {of:?}, got {:?}",
                reply.kind
            )))
        }
    }
}

fn map_io(e: io::Error) -> TriggerError {
    match e.kind() {
        io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut => TriggerError::AckTimeout,
        io::ErrorKind::UnexpectedEof
        | io::ErrorKind::ConnectionReset
        | io::ErrorKind::ConnectionAborted
        | io::ErrorKind::BrokenPipe => TriggerError::LinkClosed,
        _ => TriggerError::Io(e),
    }
}

impl Drop for TriggerLink {
    fn drop(&mut self) {
        let _ = self.close();
    }
}
