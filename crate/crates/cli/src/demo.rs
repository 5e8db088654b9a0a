//! Scripted runs over the simulated network. The narrative goes to stderr,
//! the result object to stdout.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, Context};
use overlap_core::aggregate::SumOutcome;
use overlap_core::negotiation::{NegotiationConfig, NegotiationMode, PriceGrid};
use overlap_core::rng::entropy_seed;
use overlap_core::scenario::{self, RunOptions};
use overlap_core::transport::Transcript;
use overlap_core::BigUint;
use serde_json::{json, Value};

use crate::commands::{ensure_dir, params_or};
use crate::{Cli, Failure};

pub const SCENARIOS: &[&str] = &[
    "linkage-3party",
    "negotiate-feasible",
    "negotiate-infeasible",
    "average-5party",
];

const DEMO_PARAMS: &str = "test-512";

pub fn run(cli: &Cli, name: &str) -> Result<Value, Failure> {
    let seed = cli.seed.unwrap_or_else(entropy_seed);
    let opts = RunOptions::sim(seed);
    let mut result = match name {
        "linkage-3party" => linkage_3party(cli, &opts)?,
        "negotiate-feasible" => negotiate(cli, &opts, 1500, 1000)?,
        "negotiate-infeasible" => negotiate(cli, &opts, 500, 1000)?,
        "average-5party" => average_5party(cli, &opts)?,
        other => {
            return Err(anyhow!("unknown scenario {other:?}; choose one of {}", SCENARIOS.join(", ")).into())
        }
    };
    result["scenario"] = json!(name);
    result["seed"] = json!(seed);
    Ok(result)
}

fn say(line: impl AsRef<str>) {
    eprintln!("{}", line.as_ref());
}

fn save_transcripts(cli: &Cli, transcripts: &[Transcript], names: &[String]) -> Result<(), Failure> {
    let Some(dir) = &cli.transcript else {
        return Ok(());
    };
    ensure_dir(dir)?;
    for (t, name) in transcripts.iter().zip(names) {
        t.write_jsonl(&dir.join(format!("{name}.jsonl")))
            .with_context(|| format!("writing transcripts to {}", dir.display()))?;
    }
    Ok(())
}

fn text(items: &[&str]) -> Vec<Vec<u8>> {
    items.iter().map(|s| s.as_bytes().to_vec()).collect()
}

fn linkage_3party(cli: &Cli, opts: &RunOptions) -> Result<Value, Failure> {
    let params = params_or(cli, DEMO_PARAMS)?;
    let items = vec![
        text(&["age", "zip", "name", "income"]),
        text(&["zip", "age", "phone"]),
        text(&["name", "age", "zip", "email"]),
    ];
    say(format!("group {} ({} bits)", params.name(), params.bit_length()));
    for (i, list) in items.iter().enumerate() {
        say(format!("p{i} holds {} attributes", list.len()));
    }
    let keys = scenario::seeded_keys(&params, opts.seed, items.len());
    say("each party draws a secret exponent and masks its own encoded list");
    say("lists travel the ring p0 -> p1 -> p2 -> p0, each hop adding one mask");
    let run = scenario::linkage(&params, &items, &keys, false, opts)?;
    say("fully masked lists are published; values present in every list form the canonical order");

    let oracle: BTreeSet<&Vec<u8>> = items[0]
        .iter()
        .filter(|x| items[1..].iter().all(|l| l.contains(x)))
        .collect();
    let mut parties = Vec::new();
    let mut agree = true;
    for (i, result) in run.results.iter().enumerate() {
        let mapped: Vec<String> = result
            .local_matches
            .iter()
            .map(|&(local, _)| String::from_utf8_lossy(&items[i][local]).into_owned())
            .collect();
        let as_set: BTreeSet<&[u8]> = mapped.iter().map(|s| s.as_bytes()).collect();
        agree &= as_set == oracle.iter().map(|v| v.as_slice()).collect();
        say(format!("p{i} maps the canonical order back to {mapped:?}"));
        parties.push(json!({"id": format!("p{i}"), "matches": mapped}));
    }
    let same_order = run.results.windows(2).all(|w| w[0].canonical_order == w[1].canonical_order);

    say("repeating the publication step through a keyless mediator");
    let mediated = scenario::linkage(&params, &items, &keys, true, opts)?;
    let mediator_agrees = mediated.mediator_canonical.as_ref() == Some(&run.results[0].canonical_order);
    say(format!("mediator result identical: {mediator_agrees}"));

    let names: Vec<String> = (0..items.len()).map(|i| format!("p{i}")).collect();
    save_transcripts(cli, &run.transcripts, &names)?;
    if let Some(dir) = &cli.transcript {
        write_truth(dir, &params, &keys, &items)?;
    }
    Ok(json!({
        "params": params.name(),
        "canonical_size": run.results[0].canonical_order.len(),
        "parties": parties,
        "oracle_intersection": oracle.iter().map(|v| String::from_utf8_lossy(v)).collect::<Vec<_>>(),
        "oracle_match": agree && same_order,
        "mediator_agrees": mediator_agrees,
    }))
}

/// Ground truth next to demo transcripts, so `attack collusion` can score
/// itself. Only ever written for demo runs.
fn write_truth(
    dir: &Path,
    params: &overlap_core::GroupParams,
    keys: &[overlap_core::SecretKey],
    items: &[Vec<Vec<u8>>],
) -> Result<(), Failure> {
    let truth = json!({
        "params": params.name(),
        "keys": keys.iter().map(|k| k.exponent().to_str_radix(16)).collect::<Vec<_>>(),
        "items": items.iter().map(|l| l.iter().map(hex::encode).collect::<Vec<_>>()).collect::<Vec<_>>(),
    });
    fs::write(dir.join("truth.json"), serde_json::to_string_pretty(&truth).expect("json"))
        .context("writing truth.json")?;
    Ok(())
}

fn negotiate(cli: &Cli, opts: &RunOptions, bid: u64, reservation: u64) -> Result<Value, Failure> {
    let params = params_or(cli, DEMO_PARAMS)?;
    let grid = PriceGrid::from_range(0, 2500, 500)?;
    let config = NegotiationConfig {
        params: params.clone(),
        grid,
        mode: NegotiationMode::Symmetric,
    };
    say(format!(
        "public grid: {} prices from {} to {} cents",
        grid.len(),
        grid.min(),
        grid.max()
    ));
    say(format!("Alice bids {bid} cents; Bob's reservation is {reservation} cents"));
    say("Alice sends her masked vector: one real entry, the rest random pads");
    say("Bob returns his masked accept set and Alice's entries under his key too");
    say("Alice masks Bob's entries with her key and looks for a common value");
    let run = scenario::negotiation(&config, bid, reservation, opts)?;
    say(format!("feasible: {}", run.alice.feasible));
    if let Some(price) = run.bob.matched_price {
        say(format!("symmetric mode: Bob learns the matched grid price {price}"));
    }
    let expected = bid >= reservation;
    let expected_price = expected.then(|| grid.round_down(bid).map(|i| grid.point(i))).flatten();
    let oracle_match = run.alice.feasible == expected
        && run.bob.feasible == expected
        && run.bob.matched_price == expected_price
        && run.alice.matched_price.is_none();
    save_transcripts(cli, &run.transcripts, &["alice".into(), "bob".into()])?;
    Ok(json!({
        "params": params.name(),
        "alice": run.alice,
        "bob": run.bob,
        "oracle_match": oracle_match,
    }))
}

fn average_5party(cli: &Cli, opts: &RunOptions) -> Result<Value, Failure> {
    let params = params_or(cli, DEMO_PARAMS)?;
    let values: Vec<u64> = vec![4, 7, 10, 12, 20];
    let modulus = BigUint::from(1u8) << 64;
    let bound = BigUint::from(u32::MAX);
    say("five parties hold private values; accumulator modulus 2^64");
    say("p0 seeds the accumulator with a uniform blind and adds its value");
    say("each member adds its value modulo M and passes the total on");
    let big: Vec<BigUint> = values.iter().map(|&v| BigUint::from(v)).collect();
    let run = scenario::sum(&params, &modulus, &bound, &big, false, opts)?;
    let SumOutcome::Initiator { result } = &run.outcomes[0] else {
        return Err(anyhow!("first ring member did not initiate").into());
    };
    say(format!(
        "p0 removes the blind: sum {} over {} parties, average {}/{}",
        result.sum,
        values.len(),
        result.numerator,
        result.denominator
    ));
    let total: u64 = values.iter().sum();
    let oracle_match = result.sum == BigUint::from(total)
        && result.numerator.clone() * BigUint::from(values.len()) == BigUint::from(total) * BigUint::from(result.denominator);
    let names: Vec<String> = (0..values.len()).map(|i| format!("p{i}")).collect();
    save_transcripts(cli, &run.transcripts, &names)?;
    Ok(json!({
        "params": params.name(),
        "result": result,
        "oracle_match": oracle_match,
    }))
}
