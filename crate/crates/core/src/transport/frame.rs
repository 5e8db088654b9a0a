//! Length-prefixed frames.
//!
//! ```text
//! [length: u32 BE][protocol_id: u8][msg_type: u8][session_id: 16 bytes][payload]
//! ```
//!
//! `length` counts payload bytes only, so a frame is always `22 + length`
//! bytes long.

use std::fmt;

use crate::error::FrameError;

pub const HEADER_LEN: usize = 22;
pub const MAX_PAYLOAD: usize = 1 << 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum ProtocolId {
    Handshake = 0x00,
    Linkage = 0x01,
    Negotiation = 0x02,
    Sum = 0x03,
}

impl TryFrom<u8> for ProtocolId {
    type Error = FrameError;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        match value {
            0x00 => Ok(ProtocolId::Handshake),
            0x01 => Ok(ProtocolId::Linkage),
            0x02 => Ok(ProtocolId::Negotiation),
            0x03 => Ok(ProtocolId::Sum),
            other => Err(FrameError::UnknownProtocol(other)),
        }
    }
}

#[derive(Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct SessionId(pub [u8; 16]);

impl fmt::Debug for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SessionId({})", hex::encode(self.0))
    }
}

impl fmt::Display for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WireMessage {
    pub protocol: ProtocolId,
    pub msg_type: u8,
    pub session_id: SessionId,
    pub payload: Vec<u8>,
}

impl WireMessage {
    pub fn new(protocol: ProtocolId, msg_type: u8, session_id: SessionId, payload: Vec<u8>) -> Self {
        WireMessage {
            protocol,
            msg_type,
            session_id,
            payload,
        }
    }

    /// The bytes that authenticated encryption binds the payload to.
    pub fn header_aad(&self) -> [u8; 18] {
        let mut aad = [0u8; 18];
        aad[0] = self.protocol as u8;
        aad[1] = self.msg_type;
        aad[2..].copy_from_slice(&self.session_id.0);
        aad
    }

    pub fn frame(&self) -> Result<Vec<u8>, FrameError> {
        if self.payload.len() > MAX_PAYLOAD {
            return Err(FrameError::Oversized(self.payload.len()));
        }
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.len());
        out.extend_from_slice(&(self.payload.len() as u32).to_be_bytes());
        out.push(self.protocol as u8);
        out.push(self.msg_type);
        out.extend_from_slice(&self.session_id.0);
        out.extend_from_slice(&self.payload);
        Ok(out)
    }

    /// Parses one frame from the front of `buf`. `Ok(None)` means more bytes
    /// are needed; on success the number of bytes consumed is returned too.
    pub fn deframe(buf: &[u8]) -> Result<Option<(WireMessage, usize)>, FrameError> {
        if buf.len() < 4 {
            return Ok(None);
        }
        let len = u32::from_be_bytes(buf[..4].try_into().expect("4 bytes")) as usize;
        if len > MAX_PAYLOAD {
            return Err(FrameError::Oversized(len));
        }
        if buf.len() >= 5 {
            ProtocolId::try_from(buf[4])?;
        }
        if buf.len() < HEADER_LEN + len {
            return Ok(None);
        }
        let protocol = ProtocolId::try_from(buf[4])?;
        let mut session = [0u8; 16];
        session.copy_from_slice(&buf[6..22]);
        let msg = WireMessage {
            protocol,
            msg_type: buf[5],
            session_id: SessionId(session),
            payload: buf[HEADER_LEN..HEADER_LEN + len].to_vec(),
        };
        Ok(Some((msg, HEADER_LEN + len)))
    }
}

/// Accumulates stream bytes and yields complete frames.
#[derive(Debug, Default)]
pub struct Deframer {
    buf: Vec<u8>,
}

impl Deframer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    pub fn next_message(&mut self) -> Result<Option<WireMessage>, FrameError> {
        match WireMessage::deframe(&self.buf)? {
            Some((msg, used)) => {
                self.buf.drain(..used);
                Ok(Some(msg))
            }
            None => Ok(None),
        }
    }

    pub fn buffered(&self) -> usize {
        self.buf.len()
    }
}
