mod common;

use std::collections::BTreeSet;

use overlap_core::cipher::{encode_item, SecretKey};
use overlap_core::linkage::{full_mask_oracle, publish_and_intersect, ring_hop, MSG_RING_PASS};
use overlap_core::scenario::{self, RunOptions};
use overlap_core::transport::{ChannelProvider, Direction, ProtocolId};
use overlap_core::codec::decode_elements;
use overlap_core::{BigUint, GroupParams};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use common::{mapped_back, plaintext_intersection, random_lists};

fn toy() -> GroupParams {
    GroupParams::named("toy-64").unwrap()
}

fn text(items: &[&str]) -> Vec<Vec<u8>> {
    items.iter().map(|s| s.as_bytes().to_vec()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn mapped_back_equals_plaintext_intersection(seed in any::<u64>(), n in 2usize..=6) {
        let params = toy();
        let lists = random_lists(&mut ChaCha20Rng::seed_from_u64(seed), n, 32);
        let keys = scenario::seeded_keys(&params, seed, n);
        let run = scenario::linkage(&params, &lists, &keys, false, &RunOptions::sim(seed)).unwrap();
        let oracle = plaintext_intersection(&lists);
        for (i, result) in run.results.iter().enumerate() {
            prop_assert_eq!(&mapped_back(&lists[i], result), &oracle);
            // Order preservation: each canonical value is the full mask of
            // the item it maps back to.
            for &(local, c) in &result.local_matches {
                let expect = full_mask_oracle(&params, &lists[i][local], &keys).unwrap();
                prop_assert_eq!(&result.canonical_order[c], &expect);
            }
        }
    }

    #[test]
    fn full_mask_oracle_is_order_independent(item in proptest::collection::vec(any::<u8>(), 1..16), a in 1u64..1 << 40, b in 1u64..1 << 40) {
        let params = toy();
        let ka = SecretKey::from_exponent(&params, BigUint::from(a)).unwrap();
        let kb = SecretKey::from_exponent(&params, BigUint::from(b)).unwrap();
        prop_assert_eq!(
            full_mask_oracle(&params, &item, &[ka.clone(), kb.clone()]).unwrap(),
            full_mask_oracle(&params, &item, &[kb, ka]).unwrap()
        );
    }
}

#[test]
fn three_party_example() {
    let params = toy();
    let lists = vec![text(&["a", "b", "c"]), text(&["b", "c", "d"]), text(&["c", "b"])];
    let keys = scenario::seeded_keys(&params, 1, 3);
    let run = scenario::linkage(&params, &lists, &keys, false, &RunOptions::sim(1)).unwrap();
    let expected: BTreeSet<_> = ["b", "c"].iter().map(|s| full_mask_oracle(&params, s.as_bytes(), &keys).unwrap()).collect();
    let canonical = &run.results[0].canonical_order;
    assert_eq!(canonical.len(), 2);
    assert_eq!(canonical.iter().cloned().collect::<BTreeSet<_>>(), expected);
    assert!(canonical.windows(2).all(|w| w[0] < w[1]));
    assert_eq!(run.results[2].local_matches.len(), 2);
}

#[test]
fn matches_oracle_on_random_instances() {
    let params = toy();
    let mut rng = ChaCha20Rng::seed_from_u64(100);
    for seed in 0..100 {
        let lists = random_lists(&mut rng, 3, 12);
        let keys = scenario::seeded_keys(&params, seed, 3);
        let run = scenario::linkage(&params, &lists, &keys, false, &RunOptions::sim(seed)).unwrap();
        let mut all: Vec<_> = lists[0]
            .iter()
            .filter(|x| lists[1].contains(x) && lists[2].contains(x))
            .map(|x| full_mask_oracle(&params, x, &keys).unwrap())
            .collect();
        all.sort();
        all.dedup();
        assert_eq!(run.results[0].canonical_order, all);
    }
}

#[test]
fn single_party_ring() {
    let params = toy();
    let lists = vec![text(&["x", "y", "x"])];
    let keys = scenario::seeded_keys(&params, 2, 1);
    let run = scenario::linkage(&params, &lists, &keys, false, &RunOptions::sim(2)).unwrap();
    assert_eq!(run.results[0].canonical_order.len(), 2);
    assert_eq!(mapped_back(&lists[0], &run.results[0]).len(), 2);
}

#[test]
fn empty_and_disjoint_lists() {
    let params = toy();
    let keys = scenario::seeded_keys(&params, 3, 3);
    let lists = vec![text(&["a"]), vec![], text(&["a"])];
    let run = scenario::linkage(&params, &lists, &keys, false, &RunOptions::sim(3)).unwrap();
    assert!(run.results.iter().all(|r| r.canonical_order.is_empty()));
    let lists = vec![text(&["a", "b"]), text(&["c"]), text(&["d"])];
    let run = scenario::linkage(&params, &lists, &keys, false, &RunOptions::sim(3)).unwrap();
    assert!(run.results[0].canonical_order.is_empty());
}

#[test]
fn mediator_output_is_identical() {
    let params = toy();
    let mut rng = ChaCha20Rng::seed_from_u64(200);
    for seed in 0..20 {
        let lists = random_lists(&mut rng, 4, 16);
        let keys = scenario::seeded_keys(&params, seed, 4);
        let peers = scenario::linkage(&params, &lists, &keys, false, &RunOptions::sim(seed)).unwrap();
        let mediated = scenario::linkage(&params, &lists, &keys, true, &RunOptions::sim(seed)).unwrap();
        let canonical = mediated.mediator_canonical.as_ref().unwrap();
        assert_eq!(canonical, &peers.results[0].canonical_order);
        for (a, b) in peers.results.iter().zip(&mediated.results) {
            assert_eq!(a, b);
        }
        // The mediator's recorded view never includes a member's key.
        let mediator_view = mediated.transcripts.last().unwrap();
        for key in &keys {
            assert!(!overlap_core::adversary::transcripts_contain_key(&params, &[mediator_view], key));
        }
    }
}

#[test]
fn mediator_single_submission_is_sorted() {
    let params = toy();
    let lists = vec![text(&["q", "w", "e", "r"])];
    let keys = scenario::seeded_keys(&params, 4, 1);
    let run = scenario::linkage(&params, &lists, &keys, true, &RunOptions::sim(4)).unwrap();
    let canonical = run.mediator_canonical.unwrap();
    assert_eq!(canonical.len(), 4);
    assert!(canonical.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn canonical_order_survives_ring_permutation() {
    let params = toy();
    let lists = vec![
        text(&["k1", "k2", "k3", "k4"]),
        text(&["k4", "k2", "k9"]),
        text(&["k2", "k4", "k7"]),
        text(&["k4", "k2", "k1"]),
    ];
    let keys = scenario::seeded_keys(&params, 5, 4);
    let base = scenario::linkage(&params, &lists, &keys, false, &RunOptions::sim(5)).unwrap();
    for perm in [[1, 2, 3, 0], [3, 2, 1, 0], [2, 0, 3, 1]] {
        let ids: Vec<String> = perm.iter().map(|j| format!("p{j}")).collect();
        let items: Vec<_> = perm.iter().map(|&j| lists[j].clone()).collect();
        let pkeys: Vec<_> = perm.iter().map(|&j| keys[j].clone()).collect();
        let run = scenario::linkage_with_ids(&params, &ids, &items, &pkeys, false, &RunOptions::sim(6)).unwrap();
        assert_eq!(run.results[0].canonical_order, base.results[0].canonical_order);
    }
}

#[test]
fn intermediate_views_hold_only_masked_residues() {
    let params = toy();
    let mut rng = ChaCha20Rng::seed_from_u64(300);
    for seed in 0..10 {
        let lists = random_lists(&mut rng, 4, 12);
        let keys = scenario::seeded_keys(&params, seed, 4);
        let run = scenario::linkage(&params, &lists, &keys, false, &RunOptions::sim(seed)).unwrap();
        for (i, transcript) in run.transcripts.iter().enumerate() {
            let own: BTreeSet<_> = lists[i].iter().collect();
            let foreign: BTreeSet<_> = lists
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .flat_map(|(_, l)| l.iter())
                .filter(|x| !own.contains(x))
                .map(|x| encode_item(&params, x).unwrap())
                .collect();
            for (record, msg) in transcript.protocol_messages() {
                // decode_elements rejects anything outside the subgroup.
                let elements = decode_elements(&params, &msg.payload).unwrap();
                if record.direction == Direction::Received {
                    assert!(elements.iter().all(|e| !foreign.contains(e)));
                }
            }
        }
    }
}

#[test]
fn ring_pass_messages_follow_the_ring() {
    let params = toy();
    let lists = vec![text(&["a"]), text(&["a", "b"]), text(&["a", "c"])];
    let keys = scenario::seeded_keys(&params, 7, 3);
    let run = scenario::linkage(&params, &lists, &keys, false, &RunOptions::sim(7)).unwrap();
    for (i, t) in run.transcripts.iter().enumerate() {
        let sent: Vec<usize> = t
            .messages()
            .filter(|(r, m)| r.direction == Direction::Sent && m.protocol == ProtocolId::Linkage && m.msg_type == MSG_RING_PASS)
            .map(|(r, _)| r.peer)
            .collect();
        assert_eq!(sent, vec![(i + 1) % 3; 3]);
    }
}

#[test]
fn same_seed_same_transcripts() {
    let params = toy();
    let lists = random_lists(&mut ChaCha20Rng::seed_from_u64(9), 3, 8);
    let keys = scenario::seeded_keys(&params, 9, 3);
    let a = scenario::linkage(&params, &lists, &keys, true, &RunOptions::sim(9)).unwrap();
    let b = scenario::linkage(&params, &lists, &keys, true, &RunOptions::sim(9)).unwrap();
    assert_eq!(a.transcripts, b.transcripts);
}

#[test]
fn psk_provider_changes_nothing_above_the_channel() {
    let params = toy();
    let lists = random_lists(&mut ChaCha20Rng::seed_from_u64(10), 3, 8);
    let keys = scenario::seeded_keys(&params, 10, 3);
    let null = scenario::linkage(&params, &lists, &keys, true, &RunOptions::sim(10)).unwrap();
    let psk = scenario::linkage(
        &params,
        &lists,
        &keys,
        true,
        &RunOptions::sim(10).with_provider(ChannelProvider::Psk(b"ring secret".to_vec())),
    )
    .unwrap();
    assert_eq!(null.results, psk.results);
    for (a, b) in null.transcripts.iter().zip(&psk.transcripts) {
        let a: Vec<_> = a.protocol_messages().map(|(_, m)| m.payload).collect();
        let b: Vec<_> = b.protocol_messages().map(|(_, m)| m.payload).collect();
        assert_eq!(a, b);
    }
}

#[test]
fn ring_hop_is_position_preserving() {
    let params = toy();
    let keys = scenario::seeded_keys(&params, 11, 2);
    let elems: Vec<_> = ["a", "b", "c"].iter().map(|s| encode_item(&params, s.as_bytes()).unwrap()).collect();
    let hop = ring_hop(&params, &elems, &keys[0]);
    for (e, h) in elems.iter().zip(&hop) {
        assert_eq!(h, &overlap_core::mask(&params, e, &keys[0]));
    }
    let published = vec![("a".to_string(), hop.clone()), ("b".to_string(), hop[1..].to_vec())];
    let common = publish_and_intersect(&published, &["a".into(), "b".into()]).unwrap();
    assert_eq!(common.len(), 2);
}
