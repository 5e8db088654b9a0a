//! Private bid/reservation overlap discovery between a buyer (Alice) and a
//! seller (Bob).
//!
//! Both sides share a public price grid. Bob encodes every grid price at or
//! above his reservation, Alice encodes her single bid, and both pad their
//! vectors to the grid length with random nonces. After each side masks its
//! own vector and the other side masks it again, Alice looks for a common
//! value: there is one exactly when her bid is at least Bob's reservation.
//!
//! Message flow (network index 0 is Alice, 1 is Bob):
//!
//! 1. Alice -> Bob `ALICE_MASKED`: her `n` entries under her key.
//! 2. Bob -> Alice `BOB_MASKED_AND_DOUBLE`: his `n` entries under his key,
//!    shuffled, then Alice's entries under both keys in her order.
//! 3. Alice masks Bob's entries and tests membership.
//! 4. Symmetric mode only, Alice -> Bob `ALICE_RETURN`: Bob's entries under
//!    both keys, which lets Bob find the matched grid price.
//! 5. Alice -> Bob `FEASIBILITY`: one byte, `0x00` or `0x01`.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cipher::{encode_item, mask, MaskedElement, SecretKey};
use crate::codec::{encode_elements, read_elements};
use crate::error::ProtocolError;
use crate::group::GroupParams;
use crate::transport::{Link, ProtocolId, Reader, Session};

pub const MSG_ALICE_MASKED: u8 = 0x01;
pub const MSG_BOB_MASKED_AND_DOUBLE: u8 = 0x02;
pub const MSG_ALICE_RETURN: u8 = 0x03;
pub const MSG_FEASIBILITY: u8 = 0x04;

pub const ALICE_INDEX: usize = 0;
pub const BOB_INDEX: usize = 1;

/// Money is integer cents throughout.
pub type Cents = u64;

/// Public discretization: point `i` is `min + i * step` for `i < n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PriceGrid {
    min: Cents,
    step: Cents,
    n: u32,
}

impl PriceGrid {
    pub fn new(min: Cents, step: Cents, n: u32) -> Result<Self, ProtocolError> {
        if step == 0 {
            return Err(ProtocolError::Parameters("grid step must be positive".into()));
        }
        if n < 2 {
            return Err(ProtocolError::Parameters("grid needs at least two points".into()));
        }
        (n as u64 - 1)
            .checked_mul(step)
            .and_then(|span| span.checked_add(min))
            .ok_or_else(|| ProtocolError::Parameters("grid overflows".into()))?;
        Ok(PriceGrid { min, step, n })
    }

    /// Grid from an inclusive `min..=max` range; `max` must be on the grid.
    pub fn from_range(min: Cents, max: Cents, step: Cents) -> Result<Self, ProtocolError> {
        if step == 0 || max <= min || !(max - min).is_multiple_of(step) {
            return Err(ProtocolError::Parameters(format!(
                "range {min}:{max}:{step} does not describe a grid"
            )));
        }
        let n = (max - min) / step + 1;
        let n = u32::try_from(n).map_err(|_| ProtocolError::Parameters("grid too large".into()))?;
        Self::new(min, step, n)
    }

    pub fn min(&self) -> Cents {
        self.min
    }

    pub fn step(&self) -> Cents {
        self.step
    }

    pub fn len(&self) -> usize {
        self.n as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn max(&self) -> Cents {
        self.point(self.len() - 1)
    }

    pub fn point(&self, i: usize) -> Cents {
        self.min + i as u64 * self.step
    }

    pub fn points(&self) -> impl Iterator<Item = Cents> + '_ {
        (0..self.len()).map(|i| self.point(i))
    }

    /// Index of the smallest grid point `>= price`.
    pub fn round_up(&self, price: Cents) -> Option<usize> {
        if price <= self.min {
            return Some(0);
        }
        let i = (price - self.min).div_ceil(self.step) as usize;
        (i < self.len()).then_some(i)
    }

    /// Index of the largest grid point `<= price`.
    pub fn round_down(&self, price: Cents) -> Option<usize> {
        if price < self.min {
            return None;
        }
        let i = ((price - self.min) / self.step) as usize;
        Some(i.min(self.len() - 1))
    }

    /// `min`, `step`, `n` as 8/8/4-byte big-endian.
    pub fn to_bytes(&self) -> [u8; 20] {
        let mut out = [0u8; 20];
        out[..8].copy_from_slice(&self.min.to_be_bytes());
        out[8..16].copy_from_slice(&self.step.to_be_bytes());
        out[16..].copy_from_slice(&self.n.to_be_bytes());
        out
    }
}

/// Public per-session randomness mixed into every encoding, so that the same
/// price never produces the same group element in two sessions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SessionSalt(pub [u8; 16]);

impl SessionSalt {
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut salt = [0u8; 16];
        rng.fill(&mut salt);
        SessionSalt(salt)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Alice,
    Bob,
}

impl Role {
    pub fn index(self) -> usize {
        match self {
            Role::Alice => ALICE_INDEX,
            Role::Bob => BOB_INDEX,
        }
    }

    pub fn other(self) -> Role {
        match self {
            Role::Alice => Role::Bob,
            Role::Bob => Role::Alice,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NegotiationMode {
    /// Only the feasibility bit reaches Bob.
    AliceOnly,
    /// On success Bob also learns which grid price matched.
    Symmetric,
}

impl NegotiationMode {
    fn byte(self) -> u8 {
        match self {
            NegotiationMode::AliceOnly => 0,
            NegotiationMode::Symmetric => 1,
        }
    }
}

/// What a party walks away with. Infeasible outcomes, and all of Alice's
/// outcomes, hold nothing but the feasibility bit.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NegotiationOutcome {
    #[serde(skip)]
    pub role: Option<Role>,
    pub feasible: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub matched_price: Option<Cents>,
}

fn price_encoding(salt: &SessionSalt, price: Cents) -> Vec<u8> {
    let mut out = Vec::with_capacity(25);
    out.push(b'P');
    out.extend_from_slice(&salt.0);
    out.extend_from_slice(&price.to_be_bytes());
    out
}

fn pad_encoding<R: Rng + ?Sized>(salt: &SessionSalt, rng: &mut R) -> Vec<u8> {
    let mut nonce = [0u8; 16];
    rng.fill(&mut nonce);
    let mut out = Vec::with_capacity(33);
    out.push(b'X');
    out.extend_from_slice(&salt.0);
    out.extend_from_slice(&nonce);
    out
}

/// Bob's vector: every grid price at or above `reservation` (rounded up to
/// the grid), ascending, then pads up to the grid length.
pub fn bob_accept_set<R: Rng + ?Sized>(
    grid: &PriceGrid,
    reservation: Cents,
    salt: &SessionSalt,
    rng: &mut R,
) -> Vec<Vec<u8>> {
    let first = grid.round_up(reservation).unwrap_or(grid.len());
    let mut out: Vec<Vec<u8>> = (first..grid.len())
        .map(|i| price_encoding(salt, grid.point(i)))
        .collect();
    while out.len() < grid.len() {
        out.push(pad_encoding(salt, rng));
    }
    out
}

/// Alice's vector: her bid rounded down to the grid plus pads, shuffled.
pub fn alice_vector<R: Rng + ?Sized>(
    grid: &PriceGrid,
    bid: Cents,
    salt: &SessionSalt,
    rng: &mut R,
) -> Vec<Vec<u8>> {
    let mut out = Vec::with_capacity(grid.len());
    if let Some(i) = grid.round_down(bid) {
        out.push(price_encoding(salt, grid.point(i)));
    }
    while out.len() < grid.len() {
        out.push(pad_encoding(salt, rng));
    }
    out.shuffle(rng);
    out
}

/// All index pairs with equal values. Honest inputs give at most one pair;
/// more than one points at a duplicated encoding and is logged.
pub fn compare_masked(a_double: &[MaskedElement], b_double: &[MaskedElement]) -> Vec<(usize, usize)> {
    let mut in_b: HashMap<&MaskedElement, Vec<usize>> = HashMap::new();
    for (j, e) in b_double.iter().enumerate() {
        in_b.entry(e).or_default().push(j);
    }
    let pairs: Vec<(usize, usize)> = a_double
        .iter()
        .enumerate()
        .flat_map(|(i, e)| {
            in_b.get(e)
                .into_iter()
                .flatten()
                .map(move |&j| (i, j))
        })
        .collect();
    if pairs.len() > 1 {
        log::warn!("integrity: {} matches between masked vectors, expected at most one", pairs.len());
    }
    pairs
}

/// Session settings both parties must agree on.
#[derive(Clone, Debug)]
pub struct NegotiationConfig {
    pub params: GroupParams,
    pub grid: PriceGrid,
    pub mode: NegotiationMode,
}

impl NegotiationConfig {
    /// Handshake bytes: grid, mode, and the role the initiator must hold.
    fn handshake_bytes(&self, initiator: Role) -> Vec<u8> {
        let mut out = self.grid.to_bytes().to_vec();
        out.push(self.mode.byte());
        out.push(initiator.index() as u8);
        out
    }
}

fn encode_all(params: &GroupParams, entries: &[Vec<u8>]) -> Result<Vec<MaskedElement>, ProtocolError> {
    Ok(entries
        .iter()
        .map(|e| encode_item(params, e))
        .collect::<Result<Vec<_>, _>>()?)
}

fn mask_all(params: &GroupParams, elems: &[MaskedElement], key: &SecretKey) -> Vec<MaskedElement> {
    elems.iter().map(|e| mask(params, e, key)).collect()
}

fn expect_count(expected: usize, list: &[MaskedElement]) -> Result<(), ProtocolError> {
    if list.len() != expected {
        return Err(ProtocolError::BadCount {
            expected,
            actual: list.len(),
        });
    }
    Ok(())
}

/// Runs one negotiation session. `initiator` selects which side opens the
/// handshake and picks the session salt; the roles are independent of it.
/// A fresh key is drawn from `rng` for every call.
pub fn run_negotiation<L: Link, R: Rng + ?Sized>(
    session: &mut Session<L>,
    role: Role,
    secret_price: Cents,
    config: &NegotiationConfig,
    initiator: bool,
    rng: &mut R,
) -> Result<NegotiationOutcome, ProtocolError> {
    let peer = role.other().index();
    let salt = if initiator {
        let salt = SessionSalt::random(rng);
        session.initiate(
            &[peer],
            ProtocolId::Negotiation,
            &config.handshake_bytes(role),
            &salt.0,
            rng,
        )?;
        salt
    } else {
        let extras = session.respond(peer, ProtocolId::Negotiation, &config.handshake_bytes(role.other()))?;
        SessionSalt(
            extras
                .as_slice()
                .try_into()
                .map_err(|_| ProtocolError::Malformed("session salt must be 16 bytes".into()))?,
        )
    };
    let key = SecretKey::generate(&config.params, rng);
    match role {
        Role::Alice => alice_flow(session, secret_price, config, &salt, &key, rng),
        Role::Bob => bob_flow(session, secret_price, config, &salt, &key, rng),
    }
}

fn alice_flow<L: Link, R: Rng + ?Sized>(
    session: &mut Session<L>,
    bid: Cents,
    config: &NegotiationConfig,
    salt: &SessionSalt,
    key: &SecretKey,
    rng: &mut R,
) -> Result<NegotiationOutcome, ProtocolError> {
    let params = &config.params;
    let n = config.grid.len();
    let entries = alice_vector(&config.grid, bid, salt, rng);
    let a_x = mask_all(params, &encode_all(params, &entries)?, key);
    session.send(BOB_INDEX, ProtocolId::Negotiation, MSG_ALICE_MASKED, encode_elements(params, &a_x))?;

    let payload = session.recv(BOB_INDEX, ProtocolId::Negotiation, MSG_BOB_MASKED_AND_DOUBLE)?;
    let mut reader = Reader::new(&payload);
    let b_y = read_elements(params, &mut reader)?;
    let a_xy = read_elements(params, &mut reader)?;
    reader.finish()?;
    expect_count(n, &b_y)?;
    expect_count(n, &a_xy)?;

    let b_yx = mask_all(params, &b_y, key);
    let feasible = !compare_masked(&a_xy, &b_yx).is_empty();

    if config.mode == NegotiationMode::Symmetric {
        session.send(BOB_INDEX, ProtocolId::Negotiation, MSG_ALICE_RETURN, encode_elements(params, &b_yx))?;
    }
    session.send(BOB_INDEX, ProtocolId::Negotiation, MSG_FEASIBILITY, vec![u8::from(feasible)])?;
    Ok(NegotiationOutcome {
        role: Some(Role::Alice),
        feasible,
        matched_price: None,
    })
}

fn bob_flow<L: Link, R: Rng + ?Sized>(
    session: &mut Session<L>,
    reservation: Cents,
    config: &NegotiationConfig,
    salt: &SessionSalt,
    key: &SecretKey,
    rng: &mut R,
) -> Result<NegotiationOutcome, ProtocolError> {
    let params = &config.params;
    let grid = &config.grid;
    let n = grid.len();

    let payload = session.recv(ALICE_INDEX, ProtocolId::Negotiation, MSG_ALICE_MASKED)?;
    let mut reader = Reader::new(&payload);
    let a_x = read_elements(params, &mut reader)?;
    reader.finish()?;
    expect_count(n, &a_x)?;

    let accept = bob_accept_set(grid, reservation, salt, rng);
    let price_count = grid.round_up(reservation).map_or(0, |first| n - first);
    // Wire position -> position in the ordered accept vector. Without the
    // shuffle a match position would tell Alice how far her bid sits above
    // the reservation.
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let encoded = encode_all(params, &accept)?;
    let b_y: Vec<MaskedElement> = order.iter().map(|&i| mask(params, &encoded[i], key)).collect();
    let a_xy = mask_all(params, &a_x, key);

    let mut reply = encode_elements(params, &b_y);
    reply.extend(encode_elements(params, &a_xy));
    session.send(ALICE_INDEX, ProtocolId::Negotiation, MSG_BOB_MASKED_AND_DOUBLE, reply)?;

    let mut matched_price = None;
    let mut own_view = None;
    if config.mode == NegotiationMode::Symmetric {
        let payload = session.recv(ALICE_INDEX, ProtocolId::Negotiation, MSG_ALICE_RETURN)?;
        let mut reader = Reader::new(&payload);
        let b_yx = read_elements(params, &mut reader)?;
        reader.finish()?;
        expect_count(n, &b_yx)?;
        let pairs = compare_masked(&a_xy, &b_yx);
        own_view = Some(!pairs.is_empty());
        if let Some(&(_, wire)) = pairs.first() {
            let accept_index = order[wire];
            if accept_index >= price_count {
                return Err(ProtocolError::Integrity("match landed on a pad entry".into()));
            }
            let first = n - price_count;
            matched_price = Some(grid.point(first + accept_index));
        }
    }

    let bit = session.recv(ALICE_INDEX, ProtocolId::Negotiation, MSG_FEASIBILITY)?;
    let feasible = match bit.as_slice() {
        [0x00] => false,
        [0x01] => true,
        _ => return Err(ProtocolError::Malformed("feasibility must be one byte 0/1".into())),
    };
    if own_view.is_some_and(|seen| seen != feasible) {
        return Err(ProtocolError::Integrity("feasibility bit disagrees with returned vector".into()));
    }
    Ok(NegotiationOutcome {
        role: Some(Role::Bob),
        feasible,
        matched_price: if feasible { matched_price } else { None },
    })
}
