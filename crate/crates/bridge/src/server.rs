use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use audexp_core::clock::ClockHandle;
use audexp_core::engine::SessionPlan;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use futures_util::{SinkExt, StreamExt};
use thiserror::Error;
use tokio::sync::{mpsc, oneshot};

use crate::hub::{BridgeOptions, BridgePlayback, BridgeSubject, Hub};
use crate::protocol::{decode, UiMessage};

const SHELL: &str = include_str!("shell.html");

#[derive(Debug, Error)]
pub enum BridgeError {
    #[error("cannot listen on {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        source: std::io::Error,
    },
    #[error("stimulus {file} is unreadable: {source}")]
    StimulusUnreadable {
        file: String,
        source: std::io::Error,
    },
    #[error("stimulus {0} changed since the plan was compiled")]
    StimulusChanged(String),
    #[error("session token must be non-empty ASCII letters and digits")]
    BadToken,
    #[error("runtime: {0}")]
    Runtime(#[from] std::io::Error),
}

#[derive(Clone)]
struct AppState {
    hub: Arc<Hub>,
    stimuli: Arc<Vec<Vec<u8>>>,
}

/// A running bridge: serves the app shell, the session's stimuli and the
/// WebSocket endpoint on its own runtime.
pub struct Bridge {
    hub: Arc<Hub>,
    addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    runtime: Option<tokio::runtime::Runtime>,
}

impl Bridge {
    /// Loads and verifies the plan's stimuli, then starts listening.
    pub fn start(
        plan: &SessionPlan,
        stim_root: &Path,
        clock: ClockHandle,
        bind: SocketAddr,
        token: &str,
        options: BridgeOptions,
    ) -> Result<Self, BridgeError> {
        if token.is_empty() || !token.chars().all(|c| c.is_ascii_alphanumeric()) {
            return Err(BridgeError::BadToken);
        }
        let mut stimuli = Vec::with_capacity(plan.stimuli.len());
        for stim in &plan.stimuli {
            let bytes = std::fs::read(stim_root.join(&stim.file)).map_err(|source| {
                BridgeError::StimulusUnreadable {
                    file: stim.file.clone(),
                    source,
                }
            })?;
            if audexp_core::sha256_hex(&bytes) != stim.sha256 {
                return Err(BridgeError::StimulusChanged(stim.file.clone()));
            }
            stimuli.push(bytes);
        }

        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .thread_name("bridge")
            .enable_all()
            .build()?;
        let listener = runtime
            .block_on(tokio::net::TcpListener::bind(bind))
            .map_err(|source| BridgeError::Bind { addr: bind, source })?;
        let addr = listener.local_addr()?;

        let hub = Hub::new(clock, token.to_string(), options);
        let app = router(AppState {
            hub: hub.clone(),
            stimuli: Arc::new(stimuli),
        });
        let (stop, stopped) = oneshot::channel::<()>();
        runtime.spawn(async move {
            let _ = axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = stopped.await;
                })
                .await;
        });
        Ok(Self {
            hub,
            addr,
            stop: Some(stop),
            runtime: Some(runtime),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn token(&self) -> &str {
        self.hub.token()
    }

    /// The address a subject's browser should open.
    pub fn subject_url(&self) -> String {
        format!("http://{}/?token={}", self.addr, self.hub.token())
    }

    pub fn hub(&self) -> Arc<Hub> {
        self.hub.clone()
    }

    pub fn subject(&self) -> BridgeSubject {
        BridgeSubject {
            hub: self.hub.clone(),
        }
    }

    pub fn playback(&self) -> BridgePlayback {
        BridgePlayback::new(self.hub.clone())
    }

    pub fn wait_for_subject(&self, timeout: Duration) -> bool {
        self.hub.wait_for_subject(timeout)
    }

    pub fn shutdown(mut self) {
        self.stop_now();
    }

    fn stop_now(&mut self) {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        if let Some(rt) = self.runtime.take() {
            rt.shutdown_timeout(Duration::from_secs(1));
        }
    }
}

impl Drop for Bridge {
    fn drop(&mut self) {
        self.stop_now();
    }
}

fn router(state: AppState) -> Router {
    Router::new()
        .route("/", get(|| async { Html(SHELL) }))
        .route("/session/{token}/stim/{index}", get(stimulus))
        .route("/session/{token}/ws", get(socket))
        .with_state(state)
}

async fn stimulus(
    State(state): State<AppState>,
    UrlPath((token, index)): UrlPath<(String, usize)>,
) -> Response {
    if token != state.hub.token() {
        return StatusCode::NOT_FOUND.into_response();
    }
    match state.stimuli.get(index) {
        Some(bytes) => ([(header::CONTENT_TYPE, "audio/wav")], bytes.clone()).into_response(),
        None => StatusCode::NOT_FOUND.into_response(),
    }
}

async fn socket(
    State(state): State<AppState>,
    UrlPath(token): UrlPath<String>,
    upgrade: WebSocketUpgrade,
) -> Response {
    if token != state.hub.token() {
        return StatusCode::NOT_FOUND.into_response();
    }
    upgrade.on_upgrade(move |ws| serve_socket(ws, state.hub))
}

async fn serve_socket(ws: WebSocket, hub: Arc<Hub>) {
    let (mut sink, mut stream) = ws.split();
    let (tx, mut rx) = mpsc::unbounded_channel::<String>();
    let id = hub.attach(tx);
    loop {
        tokio::select! {
            out = rx.recv() => match out {
                Some(text) => {
                    if sink.send(Message::Text(text.into())).await.is_err() {
                        break;
                    }
                }
                // Replaced by a newer connection.
                None => {
                    let _ = sink.send(Message::Close(None)).await;
                    break;
                }
            },
            incoming = stream.next() => match incoming {
                Some(Ok(Message::Text(text))) => match decode::<UiMessage>(text.as_str()) {
                    Ok(msg) => hub.on_message(id, msg),
                    Err(e) => hub.reject(id, e.to_string()),
                },
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                Some(Ok(_)) => {}
            },
        }
    }
    hub.detach(id);
}
