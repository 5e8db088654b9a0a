#![allow(dead_code)]

use std::collections::BTreeSet;

use overlap_core::linkage::LinkageResult;
use rand::seq::SliceRandom;
use rand::Rng;

/// Item lists for `parties` parties drawn from a shared universe so that
/// intersections are usually non-empty. Lists may repeat items.
pub fn random_lists<R: Rng>(rng: &mut R, parties: usize, max_items: usize) -> Vec<Vec<Vec<u8>>> {
    let universe: Vec<Vec<u8>> = (0..max_items + 8).map(|i| format!("rec-{i:03}").into_bytes()).collect();
    (0..parties)
        .map(|_| {
            let size = rng.gen_range(0..=max_items);
            let mut list: Vec<Vec<u8>> = universe.choose_multiple(rng, size).cloned().collect();
            if !list.is_empty() && rng.gen_bool(0.2) {
                let dup = list[rng.gen_range(0..list.len())].clone();
                list.push(dup);
            }
            list
        })
        .collect()
}

/// Decimal items for the raw-encoding toy group at p = 23.
pub fn raw_lists<R: Rng>(rng: &mut R, parties: usize, max_items: usize) -> Vec<Vec<Vec<u8>>> {
    let universe: Vec<Vec<u8>> = (2..=21u32).map(|i| i.to_string().into_bytes()).collect();
    (0..parties)
        .map(|_| {
            let size = rng.gen_range(1..=max_items.min(universe.len()));
            universe.choose_multiple(rng, size).cloned().collect()
        })
        .collect()
}

/// Plain set intersection of every list.
pub fn plaintext_intersection(lists: &[Vec<Vec<u8>>]) -> BTreeSet<Vec<u8>> {
    let mut sets = lists.iter().map(|l| l.iter().cloned().collect::<BTreeSet<_>>());
    let first = sets.next().unwrap_or_default();
    sets.fold(first, |acc, s| acc.intersection(&s).cloned().collect())
}

/// The plaintexts a party maps the canonical order back to.
pub fn mapped_back(items: &[Vec<u8>], result: &LinkageResult) -> BTreeSet<Vec<u8>> {
    result
        .local_matches
        .iter()
        .map(|&(local, _)| items[local].clone())
        .collect()
}
