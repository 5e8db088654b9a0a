//! Channel-security providers.
//!
//! Protocols talk to a [`Session`](super::Session) and never see which
//! provider protects the frames underneath. Two providers exist:
//!
//! * `null`: payloads travel in the clear (simulation and research runs).
//! * `psk`: ChaCha20-Poly1305 over the payload, keyed from a pre-shared
//!   secret and the session id. Headers stay in clear and are bound as
//!   associated data. The 96-bit nonce is `sender (u16 BE) || receiver
//!   (u16 BE) || per-direction counter (u64 BE)`, so each direction of each
//!   pair has its own nonce space.
//!
//! Any other source of a shared key (for example one agreed out of band by
//! quantum key distribution) fits behind the same `psk` shape.

use std::fmt;

use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use sha2::{Digest, Sha256};

use crate::error::ProtocolError;
use crate::transport::frame::SessionId;

#[derive(Clone, PartialEq, Eq)]
pub enum ChannelProvider {
    Null,
    Psk(Vec<u8>),
}

impl fmt::Debug for ChannelProvider {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl ChannelProvider {
    pub fn name(&self) -> &'static str {
        match self {
            ChannelProvider::Null => "null",
            ChannelProvider::Psk(_) => "psk",
        }
    }

    /// Value the initiator advertises so a responder holding a different
    /// pre-shared key aborts during the handshake. Empty for `null`.
    pub fn confirmation(&self, session: &SessionId) -> Vec<u8> {
        match self {
            ChannelProvider::Null => Vec::new(),
            ChannelProvider::Psk(secret) => {
                let mut hasher = Sha256::new();
                hasher.update(b"overlap/psk-confirm/v1");
                hasher.update((secret.len() as u32).to_be_bytes());
                hasher.update(secret);
                hasher.update(session.0);
                hasher.finalize().to_vec()
            }
        }
    }

    /// Binds the provider to one session.
    pub fn keyed(&self, session: &SessionId) -> SessionCipher {
        match self {
            ChannelProvider::Null => SessionCipher { aead: None },
            ChannelProvider::Psk(secret) => {
                let mut hasher = Sha256::new();
                hasher.update(b"overlap/psk-key/v1");
                hasher.update((secret.len() as u32).to_be_bytes());
                hasher.update(secret);
                hasher.update(session.0);
                let key: [u8; 32] = hasher.finalize().into();
                SessionCipher {
                    aead: Some(ChaCha20Poly1305::new(Key::from_slice(&key))),
                }
            }
        }
    }
}

pub struct SessionCipher {
    aead: Option<ChaCha20Poly1305>,
}

fn nonce(sender: usize, receiver: usize, counter: u64) -> [u8; 12] {
    let mut out = [0u8; 12];
    out[..2].copy_from_slice(&(sender as u16).to_be_bytes());
    out[2..4].copy_from_slice(&(receiver as u16).to_be_bytes());
    out[4..].copy_from_slice(&counter.to_be_bytes());
    out
}

impl SessionCipher {
    pub fn seal(
        &self,
        sender: usize,
        receiver: usize,
        counter: u64,
        aad: &[u8],
        payload: &[u8],
    ) -> Result<Vec<u8>, ProtocolError> {
        match &self.aead {
            None => Ok(payload.to_vec()),
            Some(aead) => aead
                .encrypt(
                    Nonce::from_slice(&nonce(sender, receiver, counter)),
                    Payload { msg: payload, aad },
                )
                .map_err(|_| ProtocolError::Authentication),
        }
    }

    pub fn open(
        &self,
        sender: usize,
        receiver: usize,
        counter: u64,
        aad: &[u8],
        payload: &[u8],
    ) -> Result<Vec<u8>, ProtocolError> {
        match &self.aead {
            None => Ok(payload.to_vec()),
            Some(aead) => aead
                .decrypt(
                    Nonce::from_slice(&nonce(sender, receiver, counter)),
                    Payload { msg: payload, aad },
                )
                .map_err(|_| ProtocolError::Authentication),
        }
    }
}
