//! Protocols that let mutually distrusting parties find out whether sharing
//! data or doing a deal is worthwhile without revealing their private
//! inputs: multi-party private record linkage, bid/reservation overlap
//! detection, and private averaging, plus the runtime and audit tooling
//! around them.

pub mod adversary;
pub mod aggregate;
pub mod cipher;
pub mod codec;
pub mod error;
pub mod group;
pub mod linkage;
pub mod negotiation;
pub mod primes;
pub mod rng;
pub mod scenario;
pub mod transport;

pub use cipher::{encode_item, key_inverse, mask, unmask, CipherError, MaskedElement, SecretKey};
pub use error::{FrameError, ProtocolError, TransportError};
pub use group::{EncodingMode, GroupParams};
pub use num_bigint::BigUint;
