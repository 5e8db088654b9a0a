//! Commutative exponentiation masking over the quadratic-residue subgroup.
//!
//! `mask(mask(e, x), y) == mask(mask(e, y), x)` for every element and key
//! pair, which is what lets several parties layer their masks in any order
//! and still compare the results.

use std::fmt;

use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::group::{EncodingMode, GroupParams};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CipherError {
    #[error("bit length {0} is below the minimum of 16")]
    BitLengthTooSmall(u64),
    #[error("modulus is not a safe prime")]
    NotSafePrime,
    #[error("unknown parameter set `{0}`")]
    UnknownParameterSet(String),
    #[error("unknown encoding mode `{0}`")]
    UnknownEncoding(String),
    #[error("field `{0}` is not valid hex")]
    BadHex(&'static str),
    #[error("stored parameters are internally inconsistent")]
    InconsistentParams,
    #[error("cannot encode an empty item")]
    EmptyItem,
    #[error("raw encoding expects a decimal integer item")]
    NotDecimal,
    #[error("item encodes to a degenerate group element")]
    DegenerateEncoding,
    #[error("element is outside [1, p-1]")]
    OutOfRange,
    #[error("element is not a quadratic residue")]
    NotResidue,
    #[error("expected {expected} bytes, got {actual}")]
    BadLength { expected: usize, actual: usize },
    #[error("secret exponent must lie in [1, q-1]")]
    BadExponent,
}

/// A party's masking exponent, always in `[1, q-1]`.
#[derive(Clone, PartialEq, Eq)]
pub struct SecretKey {
    exponent: BigUint,
}

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SecretKey(..)")
    }
}

impl SecretKey {
    /// Draws a key uniformly from `[1, q-1]`.
    pub fn generate<R: Rng + ?Sized>(params: &GroupParams, rng: &mut R) -> Self {
        let exponent = rng.gen_biguint_range(&BigUint::one(), params.q());
        SecretKey { exponent }
    }

    pub fn from_exponent(params: &GroupParams, exponent: BigUint) -> Result<Self, CipherError> {
        if exponent.is_zero() || &exponent >= params.q() {
            return Err(CipherError::BadExponent);
        }
        Ok(SecretKey { exponent })
    }

    pub fn exponent(&self) -> &BigUint {
        &self.exponent
    }

    /// The exponent that undoes this key: `k * k' = 1 (mod q)`.
    pub fn inverse(&self, params: &GroupParams) -> SecretKey {
        // q is prime, so k^(q-2) is the inverse by Fermat.
        let q = params.q();
        let exponent = self.exponent.modpow(&(q - 2u32), q);
        SecretKey { exponent }
    }

    /// Fixed-width big-endian exponent bytes.
    pub fn to_bytes(&self, params: &GroupParams) -> Vec<u8> {
        fixed_width(&self.exponent, params.exponent_len())
    }
}

/// A quadratic residue modulo `p`. The only kind of value protocol payloads
/// carry.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MaskedElement {
    value: BigUint,
}

impl fmt::Debug for MaskedElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MaskedElement({:x})", self.value)
    }
}

impl MaskedElement {
    /// Checks range and residuosity before wrapping `value`.
    pub fn new(params: &GroupParams, value: BigUint) -> Result<Self, CipherError> {
        if value.is_zero() || &value >= params.p() {
            return Err(CipherError::OutOfRange);
        }
        if jacobi(&value, params.p()) != 1 {
            return Err(CipherError::NotResidue);
        }
        Ok(MaskedElement { value })
    }

    pub(crate) fn new_unchecked(value: BigUint) -> Self {
        MaskedElement { value }
    }

    pub fn value(&self) -> &BigUint {
        &self.value
    }

    pub fn to_bytes(&self, params: &GroupParams) -> Vec<u8> {
        fixed_width(&self.value, params.element_len())
    }

    pub fn from_bytes(params: &GroupParams, bytes: &[u8]) -> Result<Self, CipherError> {
        if bytes.len() != params.element_len() {
            return Err(CipherError::BadLength {
                expected: params.element_len(),
                actual: bytes.len(),
            });
        }
        MaskedElement::new(params, BigUint::from_bytes_be(bytes))
    }
}

/// Maps an item into the quadratic-residue subgroup.
///
/// In hash mode, SHA-256 blocks `H(item || counter_le32)` are concatenated
/// until `element_len + 8` bytes are available; the truncated string is read
/// big-endian, reduced mod `p` and squared. A result below 2 is retried with
/// the next run of counters.
pub fn encode_item(params: &GroupParams, item: &[u8]) -> Result<MaskedElement, CipherError> {
    if item.is_empty() {
        return Err(CipherError::EmptyItem);
    }
    match params.encoding() {
        EncodingMode::HashToQr => Ok(hash_to_qr(params, item)),
        EncodingMode::RawSquareTest => raw_square(params, item),
    }
}

fn hash_to_qr(params: &GroupParams, item: &[u8]) -> MaskedElement {
    let wanted = params.element_len() + 8;
    let mut counter: u32 = 0;
    loop {
        let mut expanded = Vec::with_capacity(wanted + 32);
        while expanded.len() < wanted {
            let mut hasher = Sha256::new();
            hasher.update(item);
            hasher.update(counter.to_le_bytes());
            expanded.extend_from_slice(&hasher.finalize());
            counter += 1;
        }
        expanded.truncate(wanted);
        let reduced = BigUint::from_bytes_be(&expanded) % params.p();
        let squared = &reduced * &reduced % params.p();
        if squared >= BigUint::from(2u32) {
            return MaskedElement::new_unchecked(squared);
        }
    }
}

fn raw_square(params: &GroupParams, item: &[u8]) -> Result<MaskedElement, CipherError> {
    if !item.iter().all(u8::is_ascii_digit) {
        return Err(CipherError::NotDecimal);
    }
    let m = BigUint::parse_bytes(item, 10).ok_or(CipherError::NotDecimal)?;
    let squared = &m * &m % params.p();
    if squared < BigUint::from(2u32) {
        return Err(CipherError::DegenerateEncoding);
    }
    Ok(MaskedElement::new_unchecked(squared))
}

/// `elem^key mod p`. Stays inside the subgroup.
pub fn mask(params: &GroupParams, elem: &MaskedElement, key: &SecretKey) -> MaskedElement {
    MaskedElement::new_unchecked(elem.value.modpow(&key.exponent, params.p()))
}

pub fn key_inverse(params: &GroupParams, key: &SecretKey) -> SecretKey {
    key.inverse(params)
}

/// Strips one layer of `key` from `elem`.
pub fn unmask(params: &GroupParams, elem: &MaskedElement, key: &SecretKey) -> MaskedElement {
    mask(params, elem, &key.inverse(params))
}

/// Jacobi symbol `(a | n)` for odd `n`; equals the Legendre symbol when `n`
/// is prime.
pub fn jacobi(a: &BigUint, n: &BigUint) -> i8 {
    debug_assert!(n.is_odd());
    let mut a = a % n;
    let mut n = n.clone();
    let mut sign = 1i8;
    while !a.is_zero() {
        let twos = a.trailing_zeros().unwrap_or(0);
        a >>= twos;
        let n_mod_8 = (&n % 8u32).to_u32_digits().first().copied().unwrap_or(0);
        if twos % 2 == 1 && (n_mod_8 == 3 || n_mod_8 == 5) {
            sign = -sign;
        }
        std::mem::swap(&mut a, &mut n);
        let a_mod_4 = (&a % 4u32).to_u32_digits().first().copied().unwrap_or(0);
        let n_mod_4 = (&n % 4u32).to_u32_digits().first().copied().unwrap_or(0);
        if a_mod_4 == 3 && n_mod_4 == 3 {
            sign = -sign;
        }
        a %= &n;
    }
    if n.is_one() {
        sign
    } else {
        0
    }
}

/// True when `value` lies in the order-`q` subgroup.
pub fn is_residue(params: &GroupParams, value: &BigUint) -> bool {
    !value.is_zero() && value < params.p() && jacobi(value, params.p()) == 1
}

fn fixed_width(value: &BigUint, width: usize) -> Vec<u8> {
    let bytes = value.to_bytes_be();
    debug_assert!(bytes.len() <= width);
    let mut out = vec![0u8; width.saturating_sub(bytes.len())];
    out.extend_from_slice(&bytes);
    out
}
