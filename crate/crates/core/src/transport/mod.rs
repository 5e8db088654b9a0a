//! Party runtime: framing, links, channel providers, handshake and
//! transcripts.

pub mod frame;
pub mod link;
pub mod provider;
pub mod session;
pub mod transcript;

pub use frame::{Deframer, ProtocolId, SessionId, WireMessage, HEADER_LEN, MAX_PAYLOAD};
pub use link::{run_parties, simulated_network, Link, SimLink, TcpLink, Topology};
pub use provider::ChannelProvider;
pub use session::{Reader, Session, DEFAULT_TIMEOUT};
pub use transcript::{Direction, Record, Transcript, TranscriptError};
