//! Ring secure sum: exact average of private values.
//!
//! The initiator seeds the accumulator with a uniform blind `R` in
//! `[0, M)`. Each party in ring order adds its value modulo `M` and passes
//! the total on; the last party hands it back to the initiator, who removes
//! `R` and divides by the party count. Because `R` is uniform, every
//! intermediate total is uniform on `[0, M)` whatever the prefix sum, and
//! `party_count * value_bound < M` keeps the final sum free of wraparound.

use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{ToPrimitive, Zero};
use rand::Rng;
use serde::Serialize;

use crate::error::ProtocolError;
use crate::linkage::{ring_handshake_bytes, PartyId};
use crate::transport::{Link, ProtocolId, Reader, Session};

pub const MSG_ACC: u8 = 0x01;
pub const MSG_RESULT_BROADCAST: u8 = 0x02;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SumSession {
    modulus: BigUint,
    blind: BigUint,
    party_count: usize,
    value_bound: BigUint,
}

fn check_bounds(modulus: &BigUint, party_count: usize, value_bound: &BigUint) -> Result<(), ProtocolError> {
    if party_count == 0 {
        return Err(ProtocolError::Parameters("sum needs at least one party".into()));
    }
    if &(value_bound * party_count) >= modulus {
        return Err(ProtocolError::Parameters(
            "party_count * value_bound must stay below the modulus".into(),
        ));
    }
    Ok(())
}

/// Draws the blind and opens a session. The accumulator starts at the blind.
pub fn start_sum<R: Rng + ?Sized>(
    rng: &mut R,
    modulus: &BigUint,
    party_count: usize,
    value_bound: &BigUint,
) -> Result<SumSession, ProtocolError> {
    check_bounds(modulus, party_count, value_bound)?;
    let blind = rng.gen_biguint_below(modulus);
    Ok(SumSession {
        modulus: modulus.clone(),
        blind,
        party_count,
        value_bound: value_bound.clone(),
    })
}

impl SumSession {
    /// Session with a caller-chosen blind, for worked examples.
    pub fn with_blind(
        modulus: &BigUint,
        blind: BigUint,
        party_count: usize,
        value_bound: &BigUint,
    ) -> Result<Self, ProtocolError> {
        check_bounds(modulus, party_count, value_bound)?;
        if &blind >= modulus {
            return Err(ProtocolError::Parameters("blind must lie below the modulus".into()));
        }
        Ok(SumSession {
            modulus: modulus.clone(),
            blind,
            party_count,
            value_bound: value_bound.clone(),
        })
    }

    pub fn initial_accumulator(&self) -> BigUint {
        self.blind.clone()
    }

    pub fn blind(&self) -> &BigUint {
        &self.blind
    }

    pub fn modulus(&self) -> &BigUint {
        &self.modulus
    }

    pub fn party_count(&self) -> usize {
        self.party_count
    }

    pub fn value_bound(&self) -> &BigUint {
        &self.value_bound
    }
}

/// `(acc + value) mod modulus`, rejecting values above the bound.
pub fn accumulate(
    acc: &BigUint,
    value: &BigUint,
    modulus: &BigUint,
    value_bound: &BigUint,
) -> Result<BigUint, ProtocolError> {
    if value > value_bound {
        return Err(ProtocolError::Parameters("value exceeds the agreed bound".into()));
    }
    Ok((acc + value) % modulus)
}

/// Exact result: the sum and the average as a reduced fraction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Average {
    pub sum: BigUint,
    pub numerator: BigUint,
    pub denominator: u64,
}

impl Serialize for Average {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut s = serializer.serialize_struct("Average", 3)?;
        s.serialize_field("sum", &self.sum.to_string())?;
        s.serialize_field("numerator", &self.numerator.to_string())?;
        s.serialize_field("denominator", &self.denominator)?;
        s.end()
    }
}

/// Removes the blind and reduces `sum / party_count`.
pub fn finish(
    acc_final: &BigUint,
    blind: &BigUint,
    modulus: &BigUint,
    party_count: usize,
) -> Result<Average, ProtocolError> {
    if party_count == 0 {
        return Err(ProtocolError::Parameters("average over zero parties is undefined".into()));
    }
    let sum = (acc_final + modulus - (blind % modulus)) % modulus;
    let count = BigUint::from(party_count);
    let divisor = sum.gcd(&count);
    let (numerator, denominator) = if divisor.is_zero() {
        (BigUint::zero(), 1)
    } else {
        (&sum / &divisor, (&count / &divisor).to_u64().expect("party count fits u64"))
    };
    Ok(Average {
        sum,
        numerator,
        denominator,
    })
}

/// Ring membership and bounds agreed at the handshake.
#[derive(Clone, Debug)]
pub struct SumConfig {
    pub parties: Vec<PartyId>,
    pub modulus: BigUint,
    pub value_bound: BigUint,
}

impl SumConfig {
    pub fn new(parties: Vec<PartyId>, modulus: BigUint, value_bound: BigUint) -> Result<Self, ProtocolError> {
        check_bounds(&modulus, parties.len(), &value_bound)?;
        Ok(SumConfig {
            parties,
            modulus,
            value_bound,
        })
    }

    /// Largest bound that keeps `n * bound < modulus`.
    pub fn default_bound(modulus: &BigUint, party_count: usize) -> BigUint {
        (modulus - 1u32) / party_count.max(1)
    }

    fn handshake_bytes(&self) -> Vec<u8> {
        let mut out = ring_handshake_bytes(&self.parties, false);
        let m = self.modulus.to_bytes_be();
        out.extend_from_slice(&(m.len() as u32).to_be_bytes());
        out.extend_from_slice(&m);
        let b = self.value_bound.to_bytes_be();
        out.extend_from_slice(&(b.len() as u32).to_be_bytes());
        out.extend_from_slice(&b);
        out
    }

    fn acc_width(&self) -> usize {
        (&self.modulus - 1u32).bits().div_ceil(8).max(1) as usize
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "role", rename_all = "lowercase")]
pub enum SumOutcome {
    Initiator { result: Average },
    Participant { result: Option<Average> },
}

fn fixed(value: &BigUint, width: usize) -> Vec<u8> {
    let bytes = value.to_bytes_be();
    let mut out = vec![0u8; width - bytes.len()];
    out.extend_from_slice(&bytes);
    out
}

fn acc_payload(config: &SumConfig, count: u64, acc: &BigUint) -> Vec<u8> {
    let mut out = count.to_be_bytes().to_vec();
    out.extend(fixed(acc, config.acc_width()));
    out
}

fn read_acc(config: &SumConfig, payload: &[u8], expected_count: u64) -> Result<BigUint, ProtocolError> {
    let mut reader = Reader::new(payload);
    let count = reader.u64()?;
    let acc = BigUint::from_bytes_be(reader.take(config.acc_width())?);
    reader.finish()?;
    if count != expected_count {
        return Err(ProtocolError::Malformed(format!(
            "accumulator count {count}, expected {expected_count}"
        )));
    }
    if acc >= config.modulus {
        return Err(ProtocolError::Malformed("accumulator outside the modulus".into()));
    }
    Ok(acc)
}

/// One party's part of the secure sum. Position 0 initiates, draws the
/// blind and learns the result; with `broadcast` it also sends the result to
/// everyone else. Other positions only relay.
pub fn run_sum_ring<L: Link, R: Rng + ?Sized>(
    session: &mut Session<L>,
    config: &SumConfig,
    self_index: usize,
    own_value: &BigUint,
    broadcast: bool,
    rng: &mut R,
) -> Result<SumOutcome, ProtocolError> {
    let n = config.parties.len();
    if self_index >= n {
        return Err(ProtocolError::Parameters("self index outside the ring".into()));
    }
    if own_value > &config.value_bound {
        return Err(ProtocolError::Parameters("value exceeds the agreed bound".into()));
    }
    let handshake = config.handshake_bytes();
    if self_index == 0 {
        let peers: Vec<usize> = (1..n).collect();
        session.initiate(&peers, ProtocolId::Sum, &handshake, &[u8::from(broadcast)], rng)?;
        let sum = start_sum(rng, &config.modulus, n, &config.value_bound)?;
        let mut acc = accumulate(&sum.initial_accumulator(), own_value, &config.modulus, &config.value_bound)?;
        if n > 1 {
            session.send(1, ProtocolId::Sum, MSG_ACC, acc_payload(config, 1, &acc))?;
            let payload = session.recv(n - 1, ProtocolId::Sum, MSG_ACC)?;
            acc = read_acc(config, &payload, n as u64)?;
        }
        let result = finish(&acc, sum.blind(), &config.modulus, n)?;
        if broadcast {
            let mut payload = fixed(&result.sum, config.acc_width());
            payload.extend_from_slice(&(n as u64).to_be_bytes());
            for peer in 1..n {
                session.send(peer, ProtocolId::Sum, MSG_RESULT_BROADCAST, payload.clone())?;
            }
        }
        Ok(SumOutcome::Initiator { result })
    } else {
        let extras = session.respond(0, ProtocolId::Sum, &handshake)?;
        let broadcast = matches!(extras.as_slice(), [1]);
        let payload = session.recv(self_index - 1, ProtocolId::Sum, MSG_ACC)?;
        let acc = read_acc(config, &payload, self_index as u64)?;
        let acc = accumulate(&acc, own_value, &config.modulus, &config.value_bound)?;
        session.send((self_index + 1) % n, ProtocolId::Sum, MSG_ACC, acc_payload(config, self_index as u64 + 1, &acc))?;
        let result = if broadcast {
            let payload = session.recv(0, ProtocolId::Sum, MSG_RESULT_BROADCAST)?;
            let mut reader = Reader::new(&payload);
            let sum = BigUint::from_bytes_be(reader.take(config.acc_width())?);
            let count = reader.u64()?;
            reader.finish()?;
            if count != n as u64 {
                return Err(ProtocolError::Malformed("broadcast party count mismatch".into()));
            }
            Some(finish(&sum, &BigUint::zero(), &config.modulus, n)?)
        } else {
            None
        };
        Ok(SumOutcome::Participant { result })
    }
}
