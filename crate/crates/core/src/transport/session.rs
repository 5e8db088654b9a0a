//! Session layer: handshake, channel provider, transcript recording.

use std::collections::BTreeMap;
use std::time::Duration;

use rand::Rng;

use crate::error::ProtocolError;
use crate::group::GroupParams;
use crate::transport::frame::{ProtocolId, SessionId, WireMessage};
use crate::transport::link::Link;
use crate::transport::provider::{ChannelProvider, SessionCipher};
use crate::transport::transcript::{Direction, Transcript};

pub const HANDSHAKE_VERSION: u8 = 1;

pub const MSG_HELLO: u8 = 0x01;
pub const MSG_ACCEPT: u8 = 0x02;
pub const MSG_REJECT: u8 = 0x03;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

/// What the initiator proposes. Everything except `extras` must match the
/// responder's own configuration byte for byte; `extras` carries values only
/// the initiator chooses, such as a fresh salt.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Hello {
    pub version: u8,
    pub protocol: u8,
    pub params_name: String,
    pub fingerprint: [u8; 32],
    pub provider: String,
    pub confirmation: Vec<u8>,
    pub config: Vec<u8>,
    pub extras: Vec<u8>,
}

impl Hello {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = vec![self.version, self.protocol];
        out.extend_from_slice(&(self.params_name.len() as u16).to_be_bytes());
        out.extend_from_slice(self.params_name.as_bytes());
        out.extend_from_slice(&self.fingerprint);
        out.push(self.provider.len() as u8);
        out.extend_from_slice(self.provider.as_bytes());
        out.push(self.confirmation.len() as u8);
        out.extend_from_slice(&self.confirmation);
        out.extend_from_slice(&(self.config.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.config);
        out.extend_from_slice(&(self.extras.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.extras);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, ProtocolError> {
        let mut r = Reader::new(bytes);
        let version = r.u8()?;
        let protocol = r.u8()?;
        let name_len = r.u16()? as usize;
        let params_name = String::from_utf8(r.take(name_len)?.to_vec())
            .map_err(|_| ProtocolError::Malformed("parameter name is not utf-8".into()))?;
        let fingerprint: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
        let provider_len = r.u8()? as usize;
        let provider = String::from_utf8(r.take(provider_len)?.to_vec())
            .map_err(|_| ProtocolError::Malformed("provider name is not utf-8".into()))?;
        let confirm_len = r.u8()? as usize;
        let confirmation = r.take(confirm_len)?.to_vec();
        let config_len = r.u32()? as usize;
        let config = r.take(config_len)?.to_vec();
        let extras_len = r.u32()? as usize;
        let extras = r.take(extras_len)?.to_vec();
        r.finish()?;
        Ok(Hello {
            version,
            protocol,
            params_name,
            fingerprint,
            provider,
            confirmation,
            config,
            extras,
        })
    }
}

/// Cursor over a payload that turns short reads into protocol errors.
pub struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, pos: 0 }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], ProtocolError> {
        if self.bytes.len() - self.pos < n {
            return Err(ProtocolError::Malformed("payload truncated".into()));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8, ProtocolError> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16, ProtocolError> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    pub fn u32(&mut self) -> Result<u32, ProtocolError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub fn u64(&mut self) -> Result<u64, ProtocolError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn rest(&mut self) -> &'a [u8] {
        let out = &self.bytes[self.pos..];
        self.pos = self.bytes.len();
        out
    }

    pub fn finish(&self) -> Result<(), ProtocolError> {
        if self.pos != self.bytes.len() {
            return Err(ProtocolError::Malformed("trailing bytes in payload".into()));
        }
        Ok(())
    }
}

/// One party's end of a protocol session.
pub struct Session<L: Link> {
    link: L,
    params: GroupParams,
    provider: ChannelProvider,
    cipher: Option<SessionCipher>,
    session_id: SessionId,
    transcript: Transcript,
    sent: BTreeMap<usize, u64>,
    received: BTreeMap<usize, u64>,
    timeout: Duration,
}

impl<L: Link> Session<L> {
    pub fn new(link: L, params: GroupParams, provider: ChannelProvider) -> Self {
        Session {
            link,
            params,
            provider,
            cipher: None,
            session_id: SessionId::default(),
            transcript: Transcript::new(),
            sent: BTreeMap::new(),
            received: BTreeMap::new(),
            timeout: DEFAULT_TIMEOUT,
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn self_index(&self) -> usize {
        self.link.self_index()
    }

    pub fn params(&self) -> &GroupParams {
        &self.params
    }

    pub fn session_id(&self) -> SessionId {
        self.session_id
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn into_transcript(self) -> Transcript {
        self.transcript
    }

    fn hello(&self, protocol: ProtocolId, config: &[u8], extras: &[u8]) -> Hello {
        Hello {
            version: HANDSHAKE_VERSION,
            protocol: protocol as u8,
            params_name: self.params.name().to_string(),
            fingerprint: self.params.fingerprint(),
            provider: self.provider.name().to_string(),
            confirmation: self.provider.confirmation(&self.session_id),
            config: config.to_vec(),
            extras: extras.to_vec(),
        }
    }

    /// Picks a fresh session id and runs the handshake with every peer in
    /// `peers`. Any rejection aborts the whole session, and peers that had
    /// already accepted are told so.
    pub fn initiate<R: Rng + ?Sized>(
        &mut self,
        peers: &[usize],
        protocol: ProtocolId,
        config: &[u8],
        extras: &[u8],
        rng: &mut R,
    ) -> Result<(), ProtocolError> {
        let mut id = [0u8; 16];
        rng.fill(&mut id);
        self.session_id = SessionId(id);
        let hello = self.hello(protocol, config, extras).encode();
        for &peer in peers {
            self.send_raw(peer, ProtocolId::Handshake, MSG_HELLO, hello.clone())?;
        }
        let mut failure = None;
        for &peer in peers {
            let reply = self.recv_raw(peer)?;
            match (reply.protocol, reply.msg_type) {
                (ProtocolId::Handshake, MSG_ACCEPT) => {}
                (ProtocolId::Handshake, MSG_REJECT) => {
                    failure.get_or_insert(ProtocolError::Rejected {
                        peer,
                        reason: String::from_utf8_lossy(&reply.payload).into_owned(),
                    });
                }
                (protocol, msg_type) => {
                    failure.get_or_insert(ProtocolError::UnexpectedMessage {
                        peer,
                        protocol: protocol as u8,
                        msg_type,
                    });
                }
            }
        }
        if let Some(err) = failure {
            for &peer in peers {
                let _ = self.send_raw(peer, ProtocolId::Handshake, MSG_REJECT, b"session aborted".to_vec());
            }
            return Err(err);
        }
        self.cipher = Some(self.provider.keyed(&self.session_id));
        Ok(())
    }

    /// Waits for the initiator's hello and checks it against the local
    /// configuration. Returns the initiator's extras on success.
    pub fn respond(
        &mut self,
        initiator: usize,
        protocol: ProtocolId,
        config: &[u8],
    ) -> Result<Vec<u8>, ProtocolError> {
        let msg = self.recv_raw(initiator)?;
        if msg.protocol != ProtocolId::Handshake || msg.msg_type != MSG_HELLO {
            return Err(ProtocolError::UnexpectedMessage {
                peer: initiator,
                protocol: msg.protocol as u8,
                msg_type: msg.msg_type,
            });
        }
        self.session_id = msg.session_id;
        let theirs = Hello::decode(&msg.payload)?;
        let ours = self.hello(protocol, config, &theirs.extras);
        let mismatch = if theirs.version != ours.version {
            Some("handshake version")
        } else if theirs.protocol != ours.protocol {
            Some("protocol")
        } else if theirs.fingerprint != ours.fingerprint {
            Some("group parameters")
        } else if theirs.provider != ours.provider {
            Some("channel provider")
        } else if theirs.confirmation != ours.confirmation {
            Some("pre-shared key")
        } else if theirs.config != ours.config {
            Some("protocol configuration")
        } else {
            None
        };
        if let Some(what) = mismatch {
            let _ = self.send_raw(initiator, ProtocolId::Handshake, MSG_REJECT, what.as_bytes().to_vec());
            return Err(ProtocolError::HandshakeMismatch(what.to_string()));
        }
        self.send_raw(initiator, ProtocolId::Handshake, MSG_ACCEPT, Vec::new())?;
        self.cipher = Some(self.provider.keyed(&self.session_id));
        Ok(theirs.extras)
    }

    fn send_raw(
        &mut self,
        to: usize,
        protocol: ProtocolId,
        msg_type: u8,
        payload: Vec<u8>,
    ) -> Result<(), ProtocolError> {
        let msg = WireMessage::new(protocol, msg_type, self.session_id, payload);
        self.transcript.record(Direction::Sent, to, &msg);
        self.link.send(to, &msg)?;
        Ok(())
    }

    fn recv_raw(&mut self, from: usize) -> Result<WireMessage, ProtocolError> {
        let msg = self.link.recv(from, self.timeout)?;
        self.transcript.record(Direction::Received, from, &msg);
        Ok(msg)
    }

    /// Sends a protocol message through the session's channel provider.
    pub fn send(
        &mut self,
        to: usize,
        protocol: ProtocolId,
        msg_type: u8,
        payload: Vec<u8>,
    ) -> Result<(), ProtocolError> {
        let cipher = self
            .cipher
            .as_ref()
            .ok_or_else(|| ProtocolError::Parameters("send before handshake".into()))?;
        let plain = WireMessage::new(protocol, msg_type, self.session_id, payload);
        let counter = self.sent.entry(to).or_insert(0);
        let sealed = cipher.seal(self.link.self_index(), to, *counter, &plain.header_aad(), &plain.payload)?;
        *counter += 1;
        self.transcript.record(Direction::Sent, to, &plain);
        self.link.send(to, &WireMessage { payload: sealed, ..plain })?;
        Ok(())
    }

    /// Receives the next message from `from`, which must be of the given
    /// protocol and type.
    pub fn recv(
        &mut self,
        from: usize,
        protocol: ProtocolId,
        msg_type: u8,
    ) -> Result<Vec<u8>, ProtocolError> {
        let msg = self.link.recv(from, self.timeout)?;
        if msg.session_id != self.session_id {
            return Err(ProtocolError::ForeignSession);
        }
        if msg.protocol == ProtocolId::Handshake && msg.msg_type == MSG_REJECT {
            self.transcript.record(Direction::Received, from, &msg);
            return Err(ProtocolError::Rejected {
                peer: from,
                reason: String::from_utf8_lossy(&msg.payload).into_owned(),
            });
        }
        let cipher = self
            .cipher
            .as_ref()
            .ok_or_else(|| ProtocolError::Parameters("receive before handshake".into()))?;
        let counter = self.received.entry(from).or_insert(0);
        let payload = cipher.open(from, self.link.self_index(), *counter, &msg.header_aad(), &msg.payload)?;
        *counter += 1;
        let plain = WireMessage { payload, ..msg };
        self.transcript.record(Direction::Received, from, &plain);
        if plain.protocol != protocol || plain.msg_type != msg_type {
            return Err(ProtocolError::UnexpectedMessage {
                peer: from,
                protocol: plain.protocol as u8,
                msg_type: plain.msg_type,
            });
        }
        Ok(plain.payload)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::link::{run_parties, simulated_network, Topology};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn params() -> GroupParams {
        GroupParams::named("toy-64").unwrap()
    }

    fn two_party(
        initiator_config: &'static [u8],
        responder_config: &'static [u8],
        initiator_provider: ChannelProvider,
        responder_provider: ChannelProvider,
    ) -> Vec<(Result<Vec<u8>, ProtocolError>, Transcript, SessionId)> {
        let links = simulated_network(2, &Topology::FullMesh);
        run_parties(links, |i, link| {
            let provider = if i == 0 {
                initiator_provider.clone()
            } else {
                responder_provider.clone()
            };
            let mut session = Session::new(link, params(), provider)
                .with_timeout(Duration::from_secs(5));
            let result = if i == 0 {
                let mut rng = ChaCha20Rng::seed_from_u64(3);
                session
                    .initiate(&[1], ProtocolId::Negotiation, initiator_config, b"salt", &mut rng)
                    .and_then(|_| session.send(1, ProtocolId::Negotiation, 0x01, b"hi".to_vec()))
                    .map(|_| Vec::new())
            } else {
                session
                    .respond(0, ProtocolId::Negotiation, responder_config)
                    .and_then(|extras| {
                        let got = session.recv(0, ProtocolId::Negotiation, 0x01)?;
                        assert_eq!(got, b"hi");
                        Ok(extras)
                    })
            };
            let id = session.session_id();
            (result, session.into_transcript(), id)
        })
    }

    #[test]
    fn hello_round_trip() {
        let hello = Hello {
            version: 1,
            protocol: 2,
            params_name: "toy-64".into(),
            fingerprint: [5; 32],
            provider: "psk".into(),
            confirmation: vec![1; 32],
            config: vec![9, 9],
            extras: vec![7; 16],
        };
        assert_eq!(Hello::decode(&hello.encode()).unwrap(), hello);
        assert!(Hello::decode(&hello.encode()[..10]).is_err());
    }

    #[test]
    fn matching_configs_share_a_session_id() {
        let out = two_party(b"grid", b"grid", ChannelProvider::Null, ChannelProvider::Null);
        assert!(out[0].0.is_ok());
        assert_eq!(out[1].0.as_ref().unwrap(), b"salt");
        assert_eq!(out[0].2, out[1].2);
        assert_ne!(out[0].2, SessionId::default());
        assert_eq!(out[0].1, {
            // both ends record the same frames, mirrored
            let mut t = Transcript::new();
            for r in out[1].1.records() {
                let dir = match r.direction {
                    Direction::Sent => Direction::Received,
                    Direction::Received => Direction::Sent,
                };
                t.record(dir, 1, &r.message());
            }
            t
        });
    }

    #[test]
    fn config_mismatch_aborts_before_any_protocol_payload() {
        let out = two_party(b"grid-a", b"grid-b", ChannelProvider::Null, ChannelProvider::Null);
        assert!(matches!(out[0].0, Err(ProtocolError::Rejected { .. })));
        assert_eq!(
            out[1].0,
            Err(ProtocolError::HandshakeMismatch("protocol configuration".into()))
        );
        for (_, transcript, _) in &out {
            assert_eq!(transcript.protocol_messages().count(), 0);
        }
    }

    #[test]
    fn provider_mismatch_aborts() {
        let out = two_party(
            b"g",
            b"g",
            ChannelProvider::Null,
            ChannelProvider::Psk(b"k".to_vec()),
        );
        assert_eq!(
            out[1].0,
            Err(ProtocolError::HandshakeMismatch("channel provider".into()))
        );
        let out = two_party(
            b"g",
            b"g",
            ChannelProvider::Psk(b"k1".to_vec()),
            ChannelProvider::Psk(b"k2".to_vec()),
        );
        assert_eq!(
            out[1].0,
            Err(ProtocolError::HandshakeMismatch("pre-shared key".into()))
        );
    }

    #[test]
    fn psk_sessions_record_the_same_transcript_as_null() {
        let null = two_party(b"g", b"g", ChannelProvider::Null, ChannelProvider::Null);
        let psk = two_party(
            b"g",
            b"g",
            ChannelProvider::Psk(b"k".to_vec()),
            ChannelProvider::Psk(b"k".to_vec()),
        );
        assert!(psk[1].0.is_ok());
        // Only the hello differs (provider name and confirmation).
        assert_eq!(
            null[1].1.protocol_messages().map(|(_, m)| m).collect::<Vec<_>>(),
            psk[1].1.protocol_messages().map(|(_, m)| m).collect::<Vec<_>>()
        );
    }
}
