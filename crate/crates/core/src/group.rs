//! Safe-prime group parameters and the named parameter sets shipped with the
//! crate.
//!
//! All masking happens in the order-`q` subgroup of quadratic residues of a
//! safe prime `p = 2q + 1`. Working in the prime-order subgroup keeps the
//! Legendre symbol of every masked value fixed at +1.

use std::fmt;

use num_bigint::BigUint;
use num_traits::Num;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::primes::{is_probable_prime, random_safe_prime};
use crate::CipherError;

/// Smallest size accepted by [`GroupParams::generate`].
pub const MIN_GENERATED_BITS: u64 = 16;

/// How byte-string items are mapped into the quadratic-residue subgroup.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncodingMode {
    /// SHA-256 expansion, reduction mod `p`, then squaring.
    HashToQr,
    /// Items are decimal integers `m`, encoded as `m^2 mod p`. Only useful for
    /// hand-checkable toy examples.
    RawSquareTest,
}

impl EncodingMode {
    pub fn as_str(self) -> &'static str {
        match self {
            EncodingMode::HashToQr => "hash_to_qr",
            EncodingMode::RawSquareTest => "raw_square_test",
        }
    }

    fn tag(self) -> u8 {
        match self {
            EncodingMode::HashToQr => 0,
            EncodingMode::RawSquareTest => 1,
        }
    }
}

impl std::str::FromStr for EncodingMode {
    type Err = CipherError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hash_to_qr" => Ok(EncodingMode::HashToQr),
            "raw_square_test" => Ok(EncodingMode::RawSquareTest),
            other => Err(CipherError::UnknownEncoding(other.to_string())),
        }
    }
}

/// A validated safe prime `p = 2q + 1` together with its encoding mode.
#[derive(Clone, PartialEq, Eq)]
pub struct GroupParams {
    p: BigUint,
    q: BigUint,
    bit_length: u64,
    encoding: EncodingMode,
    name: String,
}

impl fmt::Debug for GroupParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GroupParams")
            .field("name", &self.name)
            .field("bit_length", &self.bit_length)
            .field("encoding", &self.encoding)
            .finish()
    }
}

impl GroupParams {
    /// Validates `p` as a safe prime. Any safe prime `p >= 7` is accepted so
    /// that desk-sized examples such as `p = 23` can be checked by hand.
    pub fn new(p: BigUint, encoding: EncodingMode) -> Result<Self, CipherError> {
        if p < BigUint::from(7u32) {
            return Err(CipherError::NotSafePrime);
        }
        let q: BigUint = &p >> 1;
        if &q * 2u32 + 1u32 != p || !is_probable_prime(&q) || !is_probable_prime(&p) {
            return Err(CipherError::NotSafePrime);
        }
        let bit_length = p.bits();
        Ok(GroupParams {
            name: format!("custom-{bit_length}"),
            p,
            q,
            bit_length,
            encoding,
        })
    }

    /// Generates a fresh safe prime of exactly `bit_length` bits. The result is
    /// a pure function of `(bit_length, seed)`.
    pub fn generate(bit_length: u64, seed: u64) -> Result<Self, CipherError> {
        if bit_length < MIN_GENERATED_BITS {
            return Err(CipherError::BitLengthTooSmall(bit_length));
        }
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let (p, q) = random_safe_prime(bit_length, &mut rng);
        Ok(GroupParams {
            name: format!("generated-{bit_length}-{seed}"),
            p,
            q,
            bit_length,
            encoding: EncodingMode::HashToQr,
        })
    }

    /// Looks up one of the parameter sets compiled into the crate.
    pub fn named(name: &str) -> Result<Self, CipherError> {
        let set = NAMED_SETS
            .iter()
            .find(|set| set.name == name)
            .ok_or_else(|| CipherError::UnknownParameterSet(name.to_string()))?;
        let p = BigUint::from_str_radix(set.p_hex, 16).expect("named prime is valid hex");
        let mut params = GroupParams::new(p, set.encoding)?;
        params.name = set.name.to_string();
        Ok(params)
    }

    pub fn named_sets() -> impl Iterator<Item = &'static str> {
        NAMED_SETS.iter().map(|set| set.name)
    }

    pub fn with_encoding(mut self, encoding: EncodingMode) -> Self {
        self.encoding = encoding;
        self
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn p(&self) -> &BigUint {
        &self.p
    }

    pub fn q(&self) -> &BigUint {
        &self.q
    }

    pub fn bit_length(&self) -> u64 {
        self.bit_length
    }

    pub fn encoding(&self) -> EncodingMode {
        self.encoding
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Width in bytes of a serialized group element.
    pub fn element_len(&self) -> usize {
        self.bit_length.div_ceil(8) as usize
    }

    /// Width in bytes of a serialized exponent.
    pub fn exponent_len(&self) -> usize {
        self.q.bits().div_ceil(8) as usize
    }

    /// Digest of the prime and encoding mode, used to confirm both ends of a
    /// session hold the same group.
    pub fn fingerprint(&self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        hasher.update(b"overlap/group/v1");
        hasher.update(self.p.to_bytes_be());
        hasher.update([self.encoding.tag()]);
        hasher.finalize().into()
    }

    pub fn to_file(&self) -> ParamsFile {
        ParamsFile {
            name: self.name.clone(),
            p: self.p.to_str_radix(16),
            q: self.q.to_str_radix(16),
            bit_length: self.bit_length,
            encoding_mode: self.encoding,
        }
    }

    /// Rebuilds parameters from their file form, re-running the safe-prime
    /// checks rather than trusting the stored values.
    pub fn from_file(file: &ParamsFile) -> Result<Self, CipherError> {
        let p = BigUint::from_str_radix(&file.p, 16).map_err(|_| CipherError::BadHex("p"))?;
        let q = BigUint::from_str_radix(&file.q, 16).map_err(|_| CipherError::BadHex("q"))?;
        let params = GroupParams::new(p, file.encoding_mode)?;
        if params.q != q || params.bit_length != file.bit_length {
            return Err(CipherError::InconsistentParams);
        }
        Ok(params.with_name(file.name.clone()))
    }
}

/// On-disk form of [`GroupParams`], big integers as hex.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamsFile {
    pub name: String,
    pub p: String,
    pub q: String,
    pub bit_length: u64,
    pub encoding_mode: EncodingMode,
}

struct NamedSet {
    name: &'static str,
    p_hex: &'static str,
    encoding: EncodingMode,
}

/// `toy-64` and `test-512` were produced by `GroupParams::generate` with the
/// seeds noted in the tests below; `modp-2048` is the 2048-bit MODP group
/// from RFC 3526, which is a safe prime.
const NAMED_SETS: &[NamedSet] = &[
    NamedSet {
        name: "toy-23",
        p_hex: "17",
        encoding: EncodingMode::RawSquareTest,
    },
    NamedSet {
        name: "toy-64",
        p_hex: TOY_64_P,
        encoding: EncodingMode::HashToQr,
    },
    NamedSet {
        name: "test-512",
        p_hex: TEST_512_P,
        encoding: EncodingMode::HashToQr,
    },
    NamedSet {
        name: "modp-2048",
        p_hex: MODP_2048_P,
        encoding: EncodingMode::HashToQr,
    },
];

const TOY_64_P: &str = "957868053f7cec83";
const TEST_512_P: &str = concat!(
    "c462ca497c298d0471be37c394f2c555e017e8c6d7d8d504ef3f1479aebd8a25",
    "acf1f68fff5f6a80585809cb27ec5f4f1ec58a3b22e94948041cc64d5ccbe98f",
);

const MODP_2048_P: &str = concat!(
    "FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD1",
    "29024E088A67CC74020BBEA63B139B22514A08798E3404DD",
    "EF9519B3CD3A431B302B0A6DF25F14374FE1356D6D51C245",
    "E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7ED",
    "EE386BFB5A899FA5AE9F24117C4B1FE649286651ECE45B3D",
    "C2007CB8A163BF0598DA48361C55D39A69163FA8FD24CF5F",
    "83655D23DCA3AD961C62F356208552BB9ED529077096966D",
    "670C354E4ABC9804F1746C08CA18217C32905E462E36CE3B",
    "E39E772C180E86039B2783A2EC07A28FB5C55DF06F4C52C9",
    "DE2BCBF6955817183995497CEA956AE515D2261898FA0510",
    "15728E5A8AACAA68FFFFFFFFFFFFFFFF",
);
