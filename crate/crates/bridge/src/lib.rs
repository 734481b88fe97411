//! Live sessions in the browser: serves stimulus audio and the subject app
//! over HTTP, and carries [`protocol`] messages over a WebSocket. The
//! [`BridgeSubject`] and [`BridgePlayback`] ports plug into the session
//! engine in place of the headless ones.

mod hub;
pub mod protocol;
mod server;

pub use hub::{BridgeOptions, BridgePlayback, BridgeSubject, Hub};
pub use server::{Bridge, BridgeError};
