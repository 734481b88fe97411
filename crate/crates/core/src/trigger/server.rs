use std::io::{self, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::frame::{Frame, FrameError, FrameType, PROTOCOL_VERSION};
use super::TriggerCode;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimelineEntry {
    SessionOpen {
        server_receive_us: u64,
        client: String,
    },
    Begin {
        server_receive_us: u64,
    },
    Event {
        code: TriggerCode,
        onset_us: u64,
        duration_us: u64,
        server_receive_us: u64,
    },
    End {
        server_receive_us: u64,
    },
    /// `clean` is false when the client vanished or sent a bad frame.
    SessionClose {
        server_receive_us: u64,
        clean: bool,
    },
}

/// Everything the simulated acquisition system received, in arrival order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcquisitionTimeline {
    pub entries: Vec<TimelineEntry>,
}

impl AcquisitionTimeline {
    /// `(code, onset_us)` of every event record.
    pub fn events(&self) -> Vec<(TriggerCode, u64)> {
        self.entries
            .iter()
            .filter_map(|e| match e {
                TimelineEntry::Event { code, onset_us, .. } => Some((*code, *onset_us)),
                _ => None,
            })
            .collect()
    }

    /// Events of each BEGIN..END span, one list per span.
    pub fn sessions(&self) -> Vec<Vec<(TriggerCode, u64)>> {
        let mut out = Vec::new();
        let mut current: Option<Vec<(TriggerCode, u64)>> = None;
        for e in &self.entries {
            match e {
                TimelineEntry::Begin { .. } => current = Some(Vec::new()),
                TimelineEntry::Event { code, onset_us, .. } => {
                    if let Some(span) = current.as_mut() {
                        span.push((*code, *onset_us));
                    }
                }
                TimelineEntry::End { .. } => out.extend(current.take()),
                _ => {}
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct ServerOptions {
    pub bind_host: String,
    /// Delay before every ACK.
    pub ack_latency: Duration,
    /// Version byte the server stamps on its frames.
    pub version: u8,
}

impl Default for ServerOptions {
    fn default() -> Self {
        Self {
            bind_host: "127.0.0.1".into(),
            ack_latency: Duration::ZERO,
            version: PROTOCOL_VERSION,
        }
    }
}

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("port {0} is already in use")]
    PortInUse(u16),
    #[error("server I/O failed: {0}")]
    Io(#[from] io::Error),
}

/// A running simulated acquisition server. Serves one client at a time.
#[derive(Debug)]
pub struct SimServer {
    addr: SocketAddr,
    timeline: Arc<Mutex<AcquisitionTimeline>>,
    stop: Arc<AtomicBool>,
    closed_sessions: Arc<AtomicUsize>,
    thread: Option<JoinHandle<()>>,
}

pub fn run_sim_server(port: u16) -> Result<SimServer, ServerError> {
    SimServer::start(port, ServerOptions::default())
}

impl SimServer {
    pub fn start(port: u16, options: ServerOptions) -> Result<Self, ServerError> {
        let listener = TcpListener::bind((options.bind_host.as_str(), port)).map_err(|e| {
            if e.kind() == io::ErrorKind::AddrInUse {
                ServerError::PortInUse(port)
            } else {
                ServerError::Io(e)
            }
        })?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let timeline = Arc::new(Mutex::new(AcquisitionTimeline::default()));
        let stop = Arc::new(AtomicBool::new(false));
        let closed_sessions = Arc::new(AtomicUsize::new(0));
        let worker = Worker {
            listener,
            options,
            timeline: timeline.clone(),
            stop: stop.clone(),
            closed_sessions: closed_sessions.clone(),
            start: Instant::now(),
        };
        let thread = std::thread::Builder::new()
            .name("acq-sim".into())
            .spawn(move || worker.run())?;
        Ok(Self {
            addr,
            timeline,
            stop,
            closed_sessions,
            thread: Some(thread),
        })
    }

    pub fn port(&self) -> u16 {
        self.addr.port()
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn endpoint(&self) -> String {
        self.addr.to_string()
    }

    pub fn dump(&self) -> AcquisitionTimeline {
        self.timeline.lock().expect("timeline lock").clone()
    }

    /// Client connections that have ended so far.
    pub fn closed_sessions(&self) -> usize {
        self.closed_sessions.load(Ordering::Acquire)
    }

    /// Blocks until `n` client connections have ended or `timeout` passes.
    pub fn wait_for_sessions(&self, n: usize, timeout: Duration) -> bool {
        let deadline = Instant::now() + timeout;
        while self.closed_sessions() < n {
            if Instant::now() >= deadline {
                return false;
            }
            std::thread::sleep(Duration::from_millis(5));
        }
        true
    }

    pub fn shutdown(mut self) -> AcquisitionTimeline {
        self.stop_thread();
        self.dump()
    }

    fn stop_thread(&mut self) {
        self.stop.store(true, Ordering::Release);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for SimServer {
    fn drop(&mut self) {
        self.stop_thread();
    }
}

struct Worker {
    listener: TcpListener,
    options: ServerOptions,
    timeline: Arc<Mutex<AcquisitionTimeline>>,
    stop: Arc<AtomicBool>,
    closed_sessions: Arc<AtomicUsize>,
    start: Instant,
}

const POLL: Duration = Duration::from_millis(5);

impl Worker {
    fn run(self) {
        while !self.stop.load(Ordering::Acquire) {
            match self.listener.accept() {
                Ok((stream, _)) => {
                    let clean = self.serve(stream).unwrap_or(false);
                    self.record(TimelineEntry::SessionClose {
                        server_receive_us: self.now_us(),
                        clean,
                    });
                    self.closed_sessions.fetch_add(1, Ordering::AcqRel);
                }
                Err(e) if e.kind() == io::ErrorKind::WouldBlock => std::thread::sleep(POLL),
                Err(_) => std::thread::sleep(POLL),
            }
        }
    }

    fn now_us(&self) -> u64 {
        self.start.elapsed().as_micros() as u64
    }

    fn record(&self, entry: TimelineEntry) {
        self.timeline
            .lock()
            .expect("timeline lock")
            .entries
            .push(entry);
    }

    /// Handles one client until BYE, disconnect, a bad frame, or shutdown.
    /// Returns whether the client said BYE.
    fn serve(&self, mut stream: TcpStream) -> io::Result<bool> {
        stream.set_nonblocking(false)?;
        stream.set_nodelay(true)?;
        stream.set_read_timeout(Some(Duration::from_millis(50)))?;
        let mut buf: Vec<u8> = Vec::new();
        let mut chunk = [0u8; 1024];
        loop {
            // Drain every complete frame already buffered.
            loop {
                match Frame::decode(&buf) {
                    Ok((frame, used)) => {
                        buf.drain(..used);
                        let received = self.now_us();
                        match self.handle(&frame, received) {
                            Some(true) => {
                                self.ack(&mut stream, frame.kind)?;
                                if frame.kind == FrameType::Bye {
                                    return Ok(true);
                                }
                            }
                            Some(false) => {}
                            None => return Ok(false),
                        }
                    }
                    Err(FrameError::Incomplete(_)) => break,
                    Err(_) => {
                        let _ = stream.shutdown(std::net::Shutdown::Both);
                        return Ok(false);
                    }
                }
            }
            if self.stop.load(Ordering::Acquire) {
                return Ok(false);
            }
            match stream.read(&mut chunk) {
                Ok(0) => return Ok(false),
                Ok(n) => buf.extend_from_slice(&chunk[..n]),
                Err(e)
                    if matches!(
                        e.kind(),
                        io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut
                    ) => {}
                Err(_) => return Ok(false),
            }
        }
    }

    /// Records a frame. `Some(true)` means acknowledge it, `None` means
    /// drop the client.
    fn handle(&self, frame: &Frame, received: u64) -> Option<bool> {
        let entry = match frame.kind {
            FrameType::Hello => TimelineEntry::SessionOpen {
                server_receive_us: received,
                client: String::from_utf8_lossy(&frame.payload).into_owned(),
            },
            FrameType::Begin => TimelineEntry::Begin {
                server_receive_us: received,
            },
            FrameType::End => TimelineEntry::End {
                server_receive_us: received,
            },
            FrameType::Event => {
                let msg = frame.to_event().ok()?;
                TimelineEntry::Event {
                    code: msg.code,
                    onset_us: msg.onset_us,
                    duration_us: msg.duration_us,
                    server_receive_us: received,
                }
            }
            FrameType::Bye => return Some(true),
            FrameType::Ack => return Some(false),
        };
        self.record(entry);
        Some(true)
    }

    fn ack(&self, stream: &mut TcpStream, of: FrameType) -> io::Result<()> {
        if !self.options.ack_latency.is_zero() {
            std::thread::sleep(self.options.ack_latency);
        }
        let mut frame = Frame::ack(of);
        frame.version = self.options.version;
        stream.write_all(&frame.encode())?;
        stream.flush()
    }
}
