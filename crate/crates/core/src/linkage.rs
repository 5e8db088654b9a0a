//! Multi-party private set intersection over a ring of commutative masks.
//!
//! Every party encodes its (deduplicated) items, masks them with its own key
//! and passes the list around the ring; each hop adds one more mask without
//! reordering. When a list returns to its owner it carries every party's
//! mask, so equal plaintexts held by different parties now have equal
//! ciphertexts. Fully-masked lists are then published, either to every peer
//! or to a keyless mediator, and the values present in all lists, sorted as
//! integers, form the canonical order everyone agrees on.

use std::collections::{BTreeSet, HashMap, HashSet};

use rand::Rng;

use crate::cipher::{encode_item, mask, CipherError, MaskedElement, SecretKey};
use crate::codec::{decode_elements, encode_elements};
use crate::error::ProtocolError;
use crate::group::GroupParams;
use crate::transport::{Link, ProtocolId, Session};

pub type PartyId = String;

pub const MSG_RING_PASS: u8 = 0x01;
pub const MSG_PUBLISH: u8 = 0x02;
pub const MSG_CANONICAL_RESULT: u8 = 0x03;

/// Ring membership as seen by one party. Ring position doubles as the
/// party's network index; a mediator, when present, sits at index
/// `parties.len()`.
#[derive(Clone, Debug)]
pub struct RingConfig {
    pub parties: Vec<PartyId>,
    pub params: GroupParams,
    pub self_index: usize,
    pub mediator: bool,
}

impl RingConfig {
    pub fn new(
        parties: Vec<PartyId>,
        params: GroupParams,
        self_index: usize,
        mediator: bool,
    ) -> Result<Self, ProtocolError> {
        if parties.is_empty() {
            return Err(ProtocolError::Parameters("ring has no parties".into()));
        }
        let distinct: HashSet<_> = parties.iter().collect();
        if distinct.len() != parties.len() {
            return Err(ProtocolError::Parameters("duplicate party id in ring".into()));
        }
        let limit = parties.len() + usize::from(mediator);
        if self_index >= limit {
            return Err(ProtocolError::Parameters(format!(
                "self index {self_index} outside ring of {limit}"
            )));
        }
        Ok(RingConfig {
            parties,
            params,
            self_index,
            mediator,
        })
    }

    pub fn len(&self) -> usize {
        self.parties.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parties.is_empty()
    }

    pub fn next(&self) -> usize {
        (self.self_index + 1) % self.len()
    }

    pub fn prev(&self) -> usize {
        (self.self_index + self.len() - 1) % self.len()
    }

    pub fn mediator_index(&self) -> Option<usize> {
        self.mediator.then_some(self.parties.len())
    }

    pub fn is_mediator(&self) -> bool {
        self.mediator_index() == Some(self.self_index)
    }

    /// Ring order as handshake bytes: any difference in ids, order or
    /// mediator use makes the handshake fail.
    pub fn handshake_config(&self) -> Vec<u8> {
        ring_handshake_bytes(&self.parties, self.mediator)
    }
}

pub(crate) fn ring_handshake_bytes(parties: &[PartyId], flag: bool) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&(parties.len() as u32).to_be_bytes());
    for id in parties {
        out.extend_from_slice(&(id.len() as u16).to_be_bytes());
        out.extend_from_slice(id.as_bytes());
    }
    out.push(u8::from(flag));
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LinkageResult {
    /// Fully-masked common values, strictly increasing.
    pub canonical_order: Vec<MaskedElement>,
    /// `(local_index, canonical_position)` for every canonical element, in
    /// canonical order. Local indices refer to the caller's original item
    /// list (first occurrence of duplicates).
    pub local_matches: Vec<(usize, usize)>,
}

/// Removes repeated items, keeping first occurrences. Also returns, for each
/// kept item, its index in the input.
pub fn dedup_items(items: &[Vec<u8>]) -> (Vec<Vec<u8>>, Vec<usize>) {
    let mut seen = HashSet::new();
    let mut kept = Vec::new();
    let mut origin = Vec::new();
    for (i, item) in items.iter().enumerate() {
        if seen.insert(item.as_slice()) {
            kept.push(item.clone());
            origin.push(i);
        }
    }
    (kept, origin)
}

/// One hop: masks every element with `key`, preserving order.
pub fn ring_hop(params: &GroupParams, items: &[MaskedElement], key: &SecretKey) -> Vec<MaskedElement> {
    items.iter().map(|e| mask(params, e, key)).collect()
}

/// Reference result of a full ring pass for one item.
pub fn full_mask_oracle(
    params: &GroupParams,
    item: &[u8],
    keys: &[SecretKey],
) -> Result<MaskedElement, CipherError> {
    let encoded = encode_item(params, item)?;
    Ok(keys.iter().fold(encoded, |e, k| mask(params, &e, k)))
}

/// Sends this party's list around the ring and relays everyone else's.
///
/// Runs `n` rounds. In round `r` each party forwards what it holds to its
/// successor and receives the list that originated `r` positions back; for
/// `r < n` it adds its own mask, and in round `n` the received list is the
/// party's own, now masked by everyone.
pub fn run_ring_pass<L: Link>(
    session: &mut Session<L>,
    ring: &RingConfig,
    own_items: &[Vec<u8>],
    key: &SecretKey,
) -> Result<Vec<MaskedElement>, ProtocolError> {
    let params = ring.params.clone();
    let encoded = own_items
        .iter()
        .map(|item| encode_item(&params, item))
        .collect::<Result<Vec<_>, _>>()?;
    let mut held = ring_hop(&params, &encoded, key);
    let n = ring.len();
    if n == 1 {
        return Ok(held);
    }
    for round in 1..=n {
        session.send(
            ring.next(),
            ProtocolId::Linkage,
            MSG_RING_PASS,
            encode_elements(&params, &held),
        )?;
        let payload = session.recv(ring.prev(), ProtocolId::Linkage, MSG_RING_PASS)?;
        let incoming = decode_elements(&params, &payload)?;
        held = if round < n {
            ring_hop(&params, &incoming, key)
        } else {
            incoming
        };
    }
    if held.len() != encoded.len() {
        return Err(ProtocolError::BadCount {
            expected: encoded.len(),
            actual: held.len(),
        });
    }
    Ok(held)
}

/// Values present in every published list, ascending.
pub fn publish_and_intersect(
    all_published: &[(PartyId, Vec<MaskedElement>)],
    expected_parties: &[PartyId],
) -> Result<Vec<MaskedElement>, ProtocolError> {
    let by_party: HashMap<&PartyId, &Vec<MaskedElement>> =
        all_published.iter().map(|(id, list)| (id, list)).collect();
    let mut common: Option<BTreeSet<MaskedElement>> = None;
    for party in expected_parties {
        let list = by_party
            .get(party)
            .ok_or_else(|| ProtocolError::MissingParty(party.clone()))?;
        let set: BTreeSet<MaskedElement> = list.iter().cloned().collect();
        common = Some(match common {
            None => set,
            Some(acc) => acc.intersection(&set).cloned().collect(),
        });
    }
    Ok(common.unwrap_or_default().into_iter().collect())
}

/// Same computation as [`publish_and_intersect`], performed by the keyless
/// mediator.
pub fn mediator_intersect(
    published: &[(PartyId, Vec<MaskedElement>)],
    expected_parties: &[PartyId],
) -> Result<Vec<MaskedElement>, ProtocolError> {
    publish_and_intersect(published, expected_parties)
}

/// Finds, for every canonical element, which of the caller's items produced
/// it. A canonical element missing from the caller's own list can only mean
/// a hop reordered or altered the list.
pub fn map_to_local(
    own_plaintext_order: &[Vec<u8>],
    own_full_masked: &[MaskedElement],
    canonical: &[MaskedElement],
) -> Result<Vec<(usize, usize)>, ProtocolError> {
    if own_plaintext_order.len() != own_full_masked.len() {
        return Err(ProtocolError::Integrity(
            "masked list is not aligned with plaintext list".into(),
        ));
    }
    let position: HashMap<&MaskedElement, usize> = own_full_masked
        .iter()
        .enumerate()
        .map(|(i, e)| (e, i))
        .collect();
    canonical
        .iter()
        .enumerate()
        .map(|(c, e)| {
            position.get(e).map(|&local| (local, c)).ok_or_else(|| {
                ProtocolError::Integrity(format!("canonical element {c} absent from own list"))
            })
        })
        .collect()
}

/// Untrusted broker role. Holds group parameters and the ring roster and
/// nothing else; in particular it never owns a [`SecretKey`].
#[derive(Clone, Debug)]
pub struct Mediator {
    params: GroupParams,
    parties: Vec<PartyId>,
}

impl Mediator {
    pub fn new(params: GroupParams, parties: Vec<PartyId>) -> Self {
        Mediator { params, parties }
    }

    /// Serves one session: answers the handshake from ring position 0,
    /// collects every party's fully-masked list and returns the canonical
    /// order to each of them.
    pub fn serve<L: Link>(&self, session: &mut Session<L>) -> Result<Vec<MaskedElement>, ProtocolError> {
        session.respond(0, ProtocolId::Linkage, &ring_handshake_bytes(&self.parties, true))?;
        let mut published = Vec::with_capacity(self.parties.len());
        for (index, id) in self.parties.iter().enumerate() {
            let payload = session.recv(index, ProtocolId::Linkage, MSG_PUBLISH)?;
            published.push((id.clone(), decode_elements(&self.params, &payload)?));
        }
        let canonical = mediator_intersect(&published, &self.parties)?;
        let payload = encode_elements(&self.params, &canonical);
        for index in 0..self.parties.len() {
            session.send(index, ProtocolId::Linkage, MSG_CANONICAL_RESULT, payload.clone())?;
        }
        Ok(canonical)
    }
}

/// Full linkage session for one ring member: handshake, ring pass,
/// publication and local mapping. `items` may contain duplicates; they are
/// removed before anything is masked.
pub fn run_linkage<L: Link, R: Rng + ?Sized>(
    session: &mut Session<L>,
    ring: &RingConfig,
    items: &[Vec<u8>],
    key: &SecretKey,
    rng: &mut R,
) -> Result<LinkageResult, ProtocolError> {
    if ring.is_mediator() {
        return Err(ProtocolError::Parameters(
            "mediator position cannot run as a ring member".into(),
        ));
    }
    let config = ring.handshake_config();
    if ring.self_index == 0 {
        let peers: Vec<usize> = (1..ring.len()).chain(ring.mediator_index()).collect();
        session.initiate(&peers, ProtocolId::Linkage, &config, &[], rng)?;
    } else {
        session.respond(0, ProtocolId::Linkage, &config)?;
    }

    let (unique, origin) = dedup_items(items);
    let own_full = run_ring_pass(session, ring, &unique, key)?;
    let params = &ring.params;

    let canonical = match ring.mediator_index() {
        Some(mediator) => {
            session.send(mediator, ProtocolId::Linkage, MSG_PUBLISH, encode_elements(params, &own_full))?;
            let payload = session.recv(mediator, ProtocolId::Linkage, MSG_CANONICAL_RESULT)?;
            decode_elements(params, &payload)?
        }
        None => {
            let payload = encode_elements(params, &own_full);
            for peer in (0..ring.len()).filter(|&p| p != ring.self_index) {
                session.send(peer, ProtocolId::Linkage, MSG_PUBLISH, payload.clone())?;
            }
            let mut published = Vec::with_capacity(ring.len());
            for (peer, id) in ring.parties.iter().enumerate() {
                let list = if peer == ring.self_index {
                    own_full.clone()
                } else {
                    let payload = session.recv(peer, ProtocolId::Linkage, MSG_PUBLISH)?;
                    decode_elements(params, &payload)?
                };
                published.push((id.clone(), list));
            }
            publish_and_intersect(&published, &ring.parties)?
        }
    };

    let local = map_to_local(&unique, &own_full, &canonical)?;
    Ok(LinkageResult {
        canonical_order: canonical,
        local_matches: local
            .into_iter()
            .map(|(unique_index, c)| (origin[unique_index], c))
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigUint;

    fn p23() -> GroupParams {
        GroupParams::named("toy-23").unwrap()
    }

    fn key(params: &GroupParams, k: u32) -> SecretKey {
        SecretKey::from_exponent(params, BigUint::from(k)).unwrap()
    }

    fn elem(params: &GroupParams, v: u32) -> MaskedElement {
        MaskedElement::new(params, BigUint::from(v)).unwrap()
    }

    fn items(list: &[&str]) -> Vec<Vec<u8>> {
        list.iter().map(|s| s.as_bytes().to_vec()).collect()
    }

    #[test]
    fn ring_hop_examples() {
        let params = p23();
        // 9^3 = 729 = 16 (mod 23); 16^3 = 4096 = 2 (mod 23)
        assert_eq!(4096 % 23, 2);
        assert_eq!(
            ring_hop(&params, &[elem(&params, 9), elem(&params, 16)], &key(&params, 3)),
            vec![elem(&params, 16), elem(&params, 2)]
        );
        assert!(ring_hop(&params, &[], &key(&params, 3)).is_empty());
        let list = vec![elem(&params, 4), elem(&params, 13)];
        assert_eq!(ring_hop(&params, &list, &key(&params, 1)), list);
    }

    #[test]
    fn oracle_is_order_independent_at_p23() {
        let params = p23();
        for m in 2..22u32 {
            let item = m.to_string();
            for x in 1..11 {
                for y in 1..11 {
                    let a = full_mask_oracle(&params, item.as_bytes(), &[key(&params, x), key(&params, y)]);
                    let b = full_mask_oracle(&params, item.as_bytes(), &[key(&params, y), key(&params, x)]);
                    assert_eq!(a, b);
                }
            }
        }
        let single = full_mask_oracle(&params, b"3", &[key(&params, 3)]).unwrap();
        assert_eq!(single, mask(&params, &elem(&params, 9), &key(&params, 3)));
        assert_eq!(
            full_mask_oracle(&params, b"3", &[key(&params, 3), key(&params, 7)]).unwrap(),
            elem(&params, 18)
        );
    }

    #[test]
    fn dedup_keeps_first_occurrences() {
        let (kept, origin) = dedup_items(&items(&["a", "b", "a", "c", "b"]));
        assert_eq!(kept, items(&["a", "b", "c"]));
        assert_eq!(origin, vec![0, 1, 3]);
    }

    fn masked_lists(params: &GroupParams, lists: &[&[&str]], keys: &[SecretKey]) -> Vec<(PartyId, Vec<MaskedElement>)> {
        lists
            .iter()
            .enumerate()
            .map(|(i, list)| {
                let masked = list
                    .iter()
                    .map(|item| full_mask_oracle(params, item.as_bytes(), keys).unwrap())
                    .collect();
                (format!("p{i}"), masked)
            })
            .collect()
    }

    #[test]
    fn intersection_examples() {
        let params = GroupParams::named("toy-64").unwrap();
        let keys = vec![key(&params, 12345), key(&params, 777), key(&params, 99)];
        let ids: Vec<PartyId> = (0..3).map(|i| format!("p{i}")).collect();

        let published = masked_lists(&params, &[&["a", "b", "c"], &["b", "c", "d"], &["c", "b"]], &keys);
        let canonical = publish_and_intersect(&published, &ids).unwrap();
        let mut expected: Vec<_> = ["b", "c"]
            .iter()
            .map(|s| full_mask_oracle(&params, s.as_bytes(), &keys).unwrap())
            .collect();
        expected.sort();
        assert_eq!(canonical, expected);
        assert_eq!(mediator_intersect(&published, &ids).unwrap(), canonical);

        let disjoint = masked_lists(&params, &[&["a"], &["b"], &["c"]], &keys);
        assert!(publish_and_intersect(&disjoint, &ids).unwrap().is_empty());

        let same = masked_lists(&params, &[&["x", "y", "z"], &["z", "y", "x"], &["y", "x", "z"]], &keys);
        let all = publish_and_intersect(&same, &ids).unwrap();
        assert_eq!(all.len(), 3);
        assert!(all.windows(2).all(|w| w[0] < w[1]));

        let single = masked_lists(&params, &[&["q", "a", "m"]], &keys);
        let sorted = mediator_intersect(&single, &ids[..1]).unwrap();
        let mut expected = single[0].1.clone();
        expected.sort();
        assert_eq!(sorted, expected);

        assert_eq!(
            publish_and_intersect(&published[..2], &ids),
            Err(ProtocolError::MissingParty("p2".into()))
        );
    }

    #[test]
    fn map_to_local_examples() {
        let params = GroupParams::named("toy-64").unwrap();
        let keys = vec![key(&params, 5), key(&params, 8)];
        let own = items(&["age", "zip", "name"]);
        let own_full: Vec<_> = own
            .iter()
            .map(|i| full_mask_oracle(&params, i, &keys).unwrap())
            .collect();
        let mut canonical = vec![own_full[0].clone(), own_full[1].clone()];
        canonical.sort();
        let matches = map_to_local(&own, &own_full, &canonical).unwrap();
        let mut locals: Vec<usize> = matches.iter().map(|m| m.0).collect();
        locals.sort();
        assert_eq!(locals, vec![0, 1]);
        for (local, c) in &matches {
            assert_eq!(own_full[*local], canonical[*c]);
        }

        assert!(map_to_local(&own, &own_full, &[]).unwrap().is_empty());

        let mut whole = own_full.clone();
        whole.sort();
        let bijection = map_to_local(&own, &own_full, &whole).unwrap();
        let set: BTreeSet<usize> = bijection.iter().map(|m| m.0).collect();
        assert_eq!(set.len(), 3);

        let stranger = full_mask_oracle(&params, b"other", &keys).unwrap();
        assert!(matches!(
            map_to_local(&own, &own_full, &[stranger]),
            Err(ProtocolError::Integrity(_))
        ));
    }

    #[test]
    fn ring_config_validation() {
        let params = p23();
        assert!(RingConfig::new(vec![], params.clone(), 0, false).is_err());
        assert!(RingConfig::new(vec!["a".into(), "a".into()], params.clone(), 0, false).is_err());
        assert!(RingConfig::new(vec!["a".into(), "b".into()], params.clone(), 2, false).is_err());
        let with_mediator = RingConfig::new(vec!["a".into(), "b".into()], params.clone(), 2, true).unwrap();
        assert!(with_mediator.is_mediator());
        let ring = RingConfig::new(vec!["a".into(), "b".into(), "c".into()], params, 0, false).unwrap();
        assert_eq!((ring.prev(), ring.next()), (2, 1));
        assert_ne!(
            ring.handshake_config(),
            ring_handshake_bytes(&["a".into(), "c".into(), "b".into()], false)
        );
    }
}
