//! JSON-lines wire protocol for out-of-process models and oracles.

use thiserror::Error;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum AdapterError {
    #[error("protocol version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("malformed handshake: {0}")]
    MalformedHandshake(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("response length {found} does not match expected {expected}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("could not connect to {endpoint}: {reason}")]
    Connect { endpoint: String, reason: String },
    #[error("timed out waiting for {0}")]
    Timeout(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

mod client;
mod stub;
mod transport;

pub use client::RemoteModel;
pub use stub::{serve_lines, serve_model, serve_oracle};
pub use transport::{Endpoint, Session, DEFAULT_TIMEOUT};
