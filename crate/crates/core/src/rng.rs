//! Seed derivation. Every party and purpose gets its own ChaCha stream so a
//! single run seed reproduces a whole multi-party session.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

pub fn derive_rng(seed: u64, party: usize, purpose: &str) -> ChaCha20Rng {
    let mut hasher = Sha256::new();
    hasher.update(b"overlap/rng/v1");
    hasher.update(seed.to_be_bytes());
    hasher.update((party as u64).to_be_bytes());
    hasher.update(purpose.as_bytes());
    ChaCha20Rng::from_seed(hasher.finalize().into())
}

/// A fresh seed from OS entropy, for runs without `--seed`.
pub fn entropy_seed() -> u64 {
    ChaCha20Rng::from_entropy().next_u64()
}

/// A run seed, or fresh entropy when none was given.
pub fn party_rng(seed: Option<u64>, party: usize, purpose: &str) -> ChaCha20Rng {
    match seed {
        Some(seed) => derive_rng(seed, party, purpose),
        None => ChaCha20Rng::from_entropy(),
    }
}
