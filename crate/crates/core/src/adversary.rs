//! Toy-scale attacks and transcript audits.
//!
//! Nothing here proves security. The audits check what information is
//! actually present in a party's (or a coalition's) recorded view, and the
//! discrete-log brute force shows that the keys are recoverable once the
//! group is small enough, which is exactly the assumption the protocols lean
//! on.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};
use serde::Serialize;

use crate::cipher::{encode_item, key_inverse, mask, MaskedElement, SecretKey};
use crate::codec::read_elements;
use crate::error::ProtocolError;
use crate::group::GroupParams;
use crate::linkage::MSG_RING_PASS;
use crate::negotiation::{Cents, NegotiationOutcome, MSG_FEASIBILITY};
use crate::transport::{Direction, ProtocolId, Reader, Transcript, WireMessage};

/// Bound on key applications when closing a coalition's view.
pub const CLOSURE_DEPTH: usize = 4;

/// Smallest `k` in `1..=budget` with `base^k == target (mod p)`.
pub fn brute_force_dlog(
    params: &GroupParams,
    base: &MaskedElement,
    target: &MaskedElement,
    budget: u64,
) -> Option<u64> {
    let p = params.p();
    if let Some(p) = p.to_u64() {
        let (p, b, t) = (
            p as u128,
            base.value().to_u64()? as u128,
            target.value().to_u64()? as u128,
        );
        let mut cur = b;
        for k in 1..=budget {
            if cur == t {
                return Some(k);
            }
            cur = cur * b % p;
        }
        return None;
    }
    let mut cur = base.value().clone();
    for k in 1..=budget {
        if &cur == target.value() {
            return Some(k);
        }
        cur = cur * base.value() % p;
    }
    None
}

/// Elements carried by a linkage or negotiation payload. Anything that does
/// not parse as element lists (feasibility bytes, handshake) yields nothing.
pub fn payload_elements(params: &GroupParams, msg: &WireMessage) -> Vec<MaskedElement> {
    let lists = match (msg.protocol, msg.msg_type) {
        (ProtocolId::Linkage, _) => 1,
        (ProtocolId::Negotiation, MSG_FEASIBILITY) => 0,
        (ProtocolId::Negotiation, crate::negotiation::MSG_BOB_MASKED_AND_DOUBLE) => 2,
        (ProtocolId::Negotiation, _) => 1,
        _ => 0,
    };
    let mut reader = Reader::new(&msg.payload);
    let mut out = Vec::new();
    for _ in 0..lists {
        match read_elements(params, &mut reader) {
            Ok(list) => out.extend(list),
            Err(_) => return Vec::new(),
        }
    }
    out
}

/// True when `needle` occurs anywhere inside `haystack`.
pub fn contains_bytes(haystack: &[u8], needle: &[u8]) -> bool {
    !needle.is_empty() && haystack.windows(needle.len()).any(|w| w == needle)
}

/// Whether any frame in `transcripts` contains the key, in big-endian
/// (fixed width and minimal) or little-endian form.
pub fn transcripts_contain_key(params: &GroupParams, transcripts: &[&Transcript], key: &SecretKey) -> bool {
    let fixed = key.to_bytes(params);
    let minimal = key.exponent().to_bytes_be();
    let little = key.exponent().to_bytes_le();
    let patterns: Vec<&[u8]> = [fixed.as_slice(), minimal.as_slice(), little.as_slice()]
        .into_iter()
        .filter(|p| p.len() >= 2)
        .collect();
    transcripts.iter().any(|t| {
        t.records()
            .iter()
            .any(|r| patterns.iter().any(|p| contains_bytes(&r.frame, p)))
    })
}

/// Ground truth about a finished linkage session, needed to score an
/// attack: keys and plaintext lists per ring position.
pub struct LinkageTruth<'a> {
    pub keys: &'a [SecretKey],
    pub items: &'a [Vec<Vec<u8>>],
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CollusionReport {
    pub colluders: Vec<usize>,
    pub target: usize,
    /// (a): no encoding of the target key occurs in the coalition's frames.
    pub key_bytes_absent: bool,
    pub observed_elements: usize,
    pub closure_size: usize,
    /// Target-only plaintexts whose encoding showed up in the closure.
    pub closure_hits: usize,
    /// (b): `closure_hits == 0`.
    pub closure_clean: bool,
    /// (c): exponent recovered by brute force from aligned hop pairs, when
    /// the coalition sits on both sides of the target.
    pub recovered_key: Option<u64>,
    pub recovered_matches_target: Option<bool>,
}

/// Audits what `colluders` jointly hold about `target` after a linkage
/// session. `transcripts[i]` is ring position `i`'s transcript; the
/// coalition also knows its own keys. `dlog_budget` of zero skips (c).
pub fn collusion_audit(
    params: &GroupParams,
    transcripts: &[Transcript],
    colluders: &[usize],
    target: usize,
    truth: &LinkageTruth<'_>,
    dlog_budget: u64,
) -> Result<CollusionReport, ProtocolError> {
    let n = truth.keys.len();
    if colluders.is_empty() {
        return Ok(CollusionReport {
            target,
            ..CollusionReport::default()
        });
    }
    if target >= n || colluders.iter().any(|&c| c >= n || c == target) {
        return Err(ProtocolError::Parameters("colluders and target must be distinct ring positions".into()));
    }
    if transcripts.len() < n {
        return Err(ProtocolError::MissingParty(format!(
            "{} transcripts for {n} parties",
            transcripts.len()
        )));
    }
    let colluders: BTreeSet<usize> = colluders.iter().copied().collect();
    let views: Vec<&Transcript> = colluders.iter().map(|&c| &transcripts[c]).collect();
    if views.iter().any(|t| t.is_empty()) {
        return Err(ProtocolError::MissingParty("empty colluder transcript".into()));
    }

    let key_bytes_absent = !transcripts_contain_key(params, &views, &truth.keys[target]);

    let observed: BTreeSet<MaskedElement> = views
        .iter()
        .flat_map(|t| t.protocol_messages())
        .flat_map(|(_, msg)| payload_elements(params, &msg))
        .collect();
    let coalition_keys: Vec<SecretKey> = colluders
        .iter()
        .flat_map(|&c| {
            let k = truth.keys[c].clone();
            let inv = key_inverse(params, &k);
            [k, inv]
        })
        .collect();
    let closure = close_under(params, &observed, &coalition_keys, CLOSURE_DEPTH);

    let others: HashSet<&Vec<u8>> = truth
        .items
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != target)
        .flat_map(|(_, list)| list.iter())
        .collect();
    let target_only: BTreeSet<&Vec<u8>> = truth.items[target].iter().filter(|x| !others.contains(x)).collect();
    let mut closure_hits = 0;
    for item in &target_only {
        let encoded = encode_item(params, item)?;
        if closure.contains(&encoded) {
            closure_hits += 1;
        }
    }

    let (recovered_key, recovered_matches_target) = if dlog_budget > 0 {
        match recover_from_hops(params, transcripts, &colluders, target, n, dlog_budget) {
            Some(k) => (
                Some(k),
                Some(truth.keys[target].exponent() == &BigUint::from(k)),
            ),
            None => (None, None),
        }
    } else {
        (None, None)
    };

    Ok(CollusionReport {
        colluders: colluders.into_iter().collect(),
        target,
        key_bytes_absent,
        observed_elements: observed.len(),
        closure_size: closure.len(),
        closure_hits,
        closure_clean: closure_hits == 0,
        recovered_key,
        recovered_matches_target,
    })
}

/// Every value reachable from `seeds` by at most `depth` applications of
/// `keys`.
pub fn close_under(
    params: &GroupParams,
    seeds: &BTreeSet<MaskedElement>,
    keys: &[SecretKey],
    depth: usize,
) -> BTreeSet<MaskedElement> {
    let mut all = seeds.clone();
    let mut frontier: Vec<MaskedElement> = seeds.iter().cloned().collect();
    for _ in 0..depth {
        let mut next = Vec::new();
        for e in &frontier {
            for k in keys {
                let m = mask(params, e, k);
                if all.insert(m.clone()) {
                    next.push(m);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    all
}

/// Lines up what the predecessor sent the target in round `r` with what
/// the successor received from it in round `r + 1`; position by position
/// these differ by exactly the target's mask. Needs both neighbours of the
/// target in the coalition.
pub fn recover_from_hops(
    params: &GroupParams,
    transcripts: &[Transcript],
    colluders: &BTreeSet<usize>,
    target: usize,
    n: usize,
    budget: u64,
) -> Option<u64> {
    let prev = (target + n - 1) % n;
    let next = (target + 1) % n;
    if !colluders.contains(&prev) || !colluders.contains(&next) {
        return None;
    }
    let ring_lists = |t: &Transcript, direction: Direction| -> Vec<Vec<MaskedElement>> {
        t.messages()
            .filter(|(r, m)| {
                r.direction == direction
                    && r.peer == target
                    && m.protocol == ProtocolId::Linkage
                    && m.msg_type == MSG_RING_PASS
            })
            .map(|(_, m)| payload_elements(params, &m))
            .collect()
    };
    let into_target = ring_lists(&transcripts[prev], Direction::Sent);
    let out_of_target = ring_lists(&transcripts[next], Direction::Received);
    let one = BigUint::one();
    let pairs: Vec<(&MaskedElement, &MaskedElement)> = into_target
        .iter()
        .zip(out_of_target.iter().skip(1))
        .flat_map(|(a, b)| a.iter().zip(b.iter()))
        .filter(|(a, _)| a.value() != &one)
        .collect();
    let (base, image) = pairs.first()?;
    let k = brute_force_dlog(params, base, image, budget)?;
    let key = SecretKey::from_exponent(params, BigUint::from(k)).ok()?;
    pairs
        .iter()
        .all(|(a, b)| &mask(params, a, &key) == *b)
        .then_some(k)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairLinkage {
    pub sessions: (usize, usize),
    pub common: usize,
    /// `common / min(|a|, |b|)`; zero when either side is empty.
    pub rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FrequencyReport {
    pub salted: bool,
    pub sessions: usize,
    pub pairs: Vec<PairLinkage>,
    pub max_rate: f64,
}

/// Cross-session ciphertext linkage: how many masked values recur between
/// every pair of sessions. Deterministic masking under reused keys makes
/// equal plaintexts recur verbatim; fresh keys or salts remove that.
pub fn frequency_audit(sessions: &[Vec<MaskedElement>], salted: bool) -> FrequencyReport {
    let sets: Vec<BTreeSet<&MaskedElement>> = sessions.iter().map(|s| s.iter().collect()).collect();
    let mut pairs = Vec::new();
    for i in 0..sets.len() {
        for j in i + 1..sets.len() {
            let common = sets[i].intersection(&sets[j]).count();
            let smaller = sets[i].len().min(sets[j].len());
            let rate = if smaller == 0 {
                0.0
            } else {
                common as f64 / smaller as f64
            };
            pairs.push(PairLinkage {
                sessions: (i, j),
                common,
                rate,
            });
        }
    }
    let max_rate = pairs.iter().map(|p| p.rate).fold(0.0, f64::max);
    FrequencyReport {
        salted,
        sessions: sessions.len(),
        pairs,
        max_rate,
    }
}

/// Masks a corpus under `keys`, optionally prefixing a per-session salt to
/// every item first.
pub fn mask_corpus(
    params: &GroupParams,
    corpus: &[Vec<u8>],
    keys: &[SecretKey],
    salt: Option<&[u8]>,
) -> Result<Vec<MaskedElement>, ProtocolError> {
    corpus
        .iter()
        .map(|item| {
            let salted: Vec<u8> = salt.unwrap_or_default().iter().chain(item).copied().collect();
            let mut e = encode_item(params, &salted)?;
            for k in keys {
                e = mask(params, &e, k);
            }
            Ok(e)
        })
        .collect()
}

/// Masked values in every protocol payload of `transcript`.
pub fn transcript_elements(params: &GroupParams, transcript: &Transcript) -> Vec<MaskedElement> {
    transcript
        .protocol_messages()
        .flat_map(|(_, msg)| payload_elements(params, &msg))
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct LeakageReport {
    pub payloads_checked: usize,
    pub elements_checked: usize,
    /// Payloads containing a secret price as 8-byte big-endian.
    pub price_substrings: usize,
    /// Element payloads that failed to parse as quadratic residues.
    pub non_residue_payloads: usize,
    /// Outcomes carrying more than the feasibility bit.
    pub outcome_violations: usize,
}

impl LeakageReport {
    pub fn violations(&self) -> usize {
        self.price_substrings + self.non_residue_payloads + self.outcome_violations
    }

    pub fn merge(&mut self, other: &LeakageReport) {
        self.payloads_checked += other.payloads_checked;
        self.elements_checked += other.elements_checked;
        self.price_substrings += other.price_substrings;
        self.non_residue_payloads += other.non_residue_payloads;
        self.outcome_violations += other.outcome_violations;
    }
}

/// Wire- and API-level leakage checks for one infeasible negotiation.
/// Only post-handshake payloads are scanned: the handshake carries the
/// public grid, which may legitimately equal a price.
pub fn negotiation_leakage_audit(
    params: &GroupParams,
    transcripts: &[&Transcript],
    secret_prices: &[Cents],
    outcomes: &[&NegotiationOutcome],
) -> LeakageReport {
    let mut report = LeakageReport::default();
    let needles: Vec<[u8; 8]> = secret_prices.iter().map(|p| p.to_be_bytes()).collect();
    for transcript in transcripts {
        for (_, msg) in transcript.protocol_messages() {
            report.payloads_checked += 1;
            if needles.iter().any(|n| contains_bytes(&msg.payload, n)) {
                report.price_substrings += 1;
            }
            if msg.msg_type == MSG_FEASIBILITY {
                continue;
            }
            let lists = if msg.msg_type == crate::negotiation::MSG_BOB_MASKED_AND_DOUBLE {
                2
            } else {
                1
            };
            let mut reader = Reader::new(&msg.payload);
            let parsed: Result<usize, ProtocolError> = (0..lists)
                .map(|_| read_elements(params, &mut reader).map(|l| l.len()))
                .sum::<Result<usize, _>>()
                .and_then(|count| reader.finish().map(|_| count));
            match parsed {
                Ok(count) => report.elements_checked += count,
                Err(_) => report.non_residue_payloads += 1,
            }
        }
    }
    for outcome in outcomes {
        let json = serde_json::to_value(outcome).expect("outcome serializes");
        let only_bit = json.as_object().is_some_and(|o| o.len() == 1 && o.get("feasible") == Some(&false.into()));
        if outcome.feasible || outcome.matched_price.is_some() || !only_bit {
            report.outcome_violations += 1;
        }
    }
    report
}

/// Groups transcripts by session id, so audits can take a directory of
/// transcripts from many parties and sessions.
pub fn group_by_session(transcripts: Vec<Transcript>) -> BTreeMap<[u8; 16], Vec<Transcript>> {
    let mut out: BTreeMap<[u8; 16], Vec<Transcript>> = BTreeMap::new();
    for t in transcripts {
        let id = t.records().first().map(|r| r.message().session_id.0).unwrap_or_default();
        out.entry(id).or_default().push(t);
    }
    out
}
