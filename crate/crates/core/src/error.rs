use thiserror::Error;

use crate::cipher::CipherError;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FrameError {
    #[error("payload length {0} exceeds the 2^24 byte limit")]
    Oversized(usize),
    #[error("unknown protocol id {0:#04x}")]
    UnknownProtocol(u8),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TransportError {
    #[error("i/o error: {0}")]
    Io(String),
    #[error("peer {0} is unreachable")]
    Unreachable(String),
    #[error("timed out waiting for peer {0}")]
    Timeout(usize),
    #[error("peer {0} disconnected")]
    Disconnected(usize),
    #[error("no link to peer {0}")]
    NoSuchPeer(usize),
    #[error("framing error: {0}")]
    Frame(#[from] FrameError),
}

impl From<std::io::Error> for TransportError {
    fn from(err: std::io::Error) -> Self {
        TransportError::Io(err.to_string())
    }
}

/// Why a protocol session stopped. Every variant aborts the session; none of
/// them carries private inputs.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("transport: {0}")]
    Transport(#[from] TransportError),
    #[error("handshake mismatch: {0}")]
    HandshakeMismatch(String),
    #[error("handshake rejected by peer {peer}: {reason}")]
    Rejected { peer: usize, reason: String },
    #[error("unexpected message from peer {peer}: protocol {protocol:#04x} type {msg_type:#04x}")]
    UnexpectedMessage { peer: usize, protocol: u8, msg_type: u8 },
    #[error("frame carries a foreign session id")]
    ForeignSession,
    #[error("malformed payload: {0}")]
    Malformed(String),
    #[error("expected {expected} elements, got {actual}")]
    BadCount { expected: usize, actual: usize },
    #[error("channel authentication failed")]
    Authentication,
    #[error("integrity failure: {0}")]
    Integrity(String),
    #[error("missing submission from party {0}")]
    MissingParty(String),
    #[error("invalid parameters: {0}")]
    Parameters(String),
    #[error(transparent)]
    Cipher(#[from] CipherError),
}

impl ProtocolError {
    /// True when the failure came from the network rather than the protocol.
    pub fn is_network(&self) -> bool {
        matches!(self, ProtocolError::Transport(_))
    }
}
