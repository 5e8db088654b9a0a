mod common;

use std::time::Instant;

use overlap_core::adversary::{
    brute_force_dlog, collusion_audit, frequency_audit, transcript_elements, LinkageTruth,
};
use overlap_core::cipher::{encode_item, mask, MaskedElement, SecretKey};
use overlap_core::negotiation::{NegotiationConfig, NegotiationMode, PriceGrid};
use overlap_core::scenario::{self, RunOptions};
use overlap_core::{BigUint, GroupParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use common::{random_lists, raw_lists};

#[test]
fn three_party_toy_session() {
    let p23 = GroupParams::named("toy-23").unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    for seed in 0..10 {
        let lists = raw_lists(&mut rng, 3, 5);
        let keys = scenario::seeded_keys(&p23, seed, 3);
        let run = scenario::linkage(&p23, &lists, &keys, false, &RunOptions::sim(seed)).unwrap();
        let truth = LinkageTruth { keys: &keys, items: &lists };
        let report = collusion_audit(&p23, &run.transcripts, &[0, 2], 1, &truth, 11).unwrap();
        assert_eq!(report.recovered_matches_target, Some(true), "seed {seed}");
        assert_eq!(report.recovered_key.map(BigUint::from).as_ref(), Some(keys[1].exponent()));
    }
}

#[test]
fn neighbours_learn_nothing_structural_at_64_bits() {
    let toy = GroupParams::named("toy-64").unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    for seed in 0..10 {
        let n = rng.gen_range(3..=5);
        let lists = random_lists(&mut rng, n, 10);
        let keys = scenario::seeded_keys(&toy, seed, n);
        let run = scenario::linkage(&toy, &lists, &keys, false, &RunOptions::sim(seed)).unwrap();
        let truth = LinkageTruth { keys: &keys, items: &lists };
        let target = 1;
        let report = collusion_audit(&toy, &run.transcripts, &[0, 2], target, &truth, 0).unwrap();
        assert!(report.key_bytes_absent && report.closure_clean, "{report:?}");
        assert!(report.closure_size > report.observed_elements);

        // Everyone else colluding still holds only masked-by-target values.
        let others: Vec<usize> = (0..n).filter(|&i| i != target).collect();
        let report = collusion_audit(&toy, &run.transcripts, &others, target, &truth, 0).unwrap();
        assert!(report.key_bytes_absent && report.closure_clean, "{report:?}");
    }
}

#[test]
fn no_colluders_gives_empty_report() {
    let toy = GroupParams::named("toy-64").unwrap();
    let lists = random_lists(&mut ChaCha20Rng::seed_from_u64(3), 3, 4);
    let keys = scenario::seeded_keys(&toy, 3, 3);
    let run = scenario::linkage(&toy, &lists, &keys, false, &RunOptions::sim(3)).unwrap();
    let truth = LinkageTruth { keys: &keys, items: &lists };
    let report = collusion_audit(&toy, &run.transcripts, &[], 1, &truth, 0).unwrap();
    assert!(report.colluders.is_empty());
    assert_eq!(report.observed_elements, 0);
    assert_eq!(report.recovered_key, None);
}

#[test]
fn audit_rejects_incomplete_input() {
    let toy = GroupParams::named("toy-64").unwrap();
    let lists = random_lists(&mut ChaCha20Rng::seed_from_u64(4), 3, 4);
    let keys = scenario::seeded_keys(&toy, 4, 3);
    let run = scenario::linkage(&toy, &lists, &keys, false, &RunOptions::sim(4)).unwrap();
    let truth = LinkageTruth { keys: &keys, items: &lists };
    assert!(collusion_audit(&toy, &run.transcripts[..2], &[0], 1, &truth, 0).is_err());
    assert!(collusion_audit(&toy, &run.transcripts, &[1], 1, &truth, 0).is_err());
    let mut blank = run.transcripts.clone();
    blank[0] = Default::default();
    assert!(collusion_audit(&toy, &blank, &[0], 1, &truth, 0).is_err());
}

#[test]
fn dlog_recovers_a_key_at_twenty_bits() {
    let params = GroupParams::generate(20, 7).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let key = SecretKey::generate(&params, &mut rng);
    let base = encode_item(&params, b"base").unwrap();
    let target = mask(&params, &base, &key);
    let start = Instant::now();
    let q: u64 = params.q().try_into().unwrap();
    let found = brute_force_dlog(&params, &base, &target, q).unwrap();
    assert_eq!(&BigUint::from(found), key.exponent());
    assert!(start.elapsed().as_secs() < 10);
}

#[test]
fn dlog_big_path_agrees_with_fast_path() {
    // 2^64 < p forces the generic loop.
    let params = GroupParams::named("test-512").unwrap();
    let key = SecretKey::from_exponent(&params, BigUint::from(777u32)).unwrap();
    let base = encode_item(&params, b"b").unwrap();
    let target = mask(&params, &base, &key);
    assert_eq!(brute_force_dlog(&params, &base, &target, 1000), Some(777));
    assert_eq!(brute_force_dlog(&params, &base, &target, 776), None);
    let one = MaskedElement::new(&params, BigUint::from(1u8)).unwrap();
    assert_eq!(brute_force_dlog(&params, &base, &one, 10), None);
}

#[test]
fn reused_keys_link_sessions_fresh_keys_do_not() {
    let toy = GroupParams::named("toy-64").unwrap();
    let lists = random_lists(&mut ChaCha20Rng::seed_from_u64(6), 3, 12);
    let same_keys = scenario::seeded_keys(&toy, 6, 3);
    let a = scenario::linkage(&toy, &lists, &same_keys, false, &RunOptions::sim(1)).unwrap();
    let b = scenario::linkage(&toy, &lists, &same_keys, false, &RunOptions::sim(2)).unwrap();
    let view = |run: &scenario::LinkageRun| transcript_elements(&toy, &run.transcripts[0]);
    let linked = frequency_audit(&[view(&a), view(&b)], false);
    assert_eq!(linked.max_rate, 1.0);

    let fresh = scenario::seeded_keys(&toy, 7, 3);
    let c = scenario::linkage(&toy, &lists, &fresh, false, &RunOptions::sim(3)).unwrap();
    let unlinked = frequency_audit(&[view(&a), view(&c)], false);
    assert_eq!(unlinked.max_rate, 0.0);
}

#[test]
fn negotiation_sessions_are_unlinkable() {
    let cfg = NegotiationConfig {
        params: GroupParams::named("toy-64").unwrap(),
        grid: PriceGrid::from_range(0, 100, 10).unwrap(),
        mode: NegotiationMode::Symmetric,
    };
    let views: Vec<_> = (0..4)
        .map(|seed| {
            let run = scenario::negotiation(&cfg, 50, 40, &RunOptions::sim(seed)).unwrap();
            transcript_elements(&cfg.params, &run.transcripts[1])
        })
        .collect();
    let report = frequency_audit(&views, true);
    assert_eq!(report.pairs.len(), 6);
    assert_eq!(report.max_rate, 0.0);
}
