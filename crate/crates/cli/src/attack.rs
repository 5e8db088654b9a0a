use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context};
use overlap_core::adversary::{
    brute_force_dlog, collusion_audit, frequency_audit, recover_from_hops, transcript_elements, LinkageTruth,
};
use overlap_core::cipher::{encode_item, mask, SecretKey};
use overlap_core::rng::{entropy_seed, party_rng};
use overlap_core::transport::session::{Hello, MSG_HELLO};
use overlap_core::transport::{ProtocolId, Transcript};
use overlap_core::{BigUint, GroupParams};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::config::load_params;
use crate::{AttackCommand, Cli, Failure};

pub fn run(cli: &Cli, cmd: &AttackCommand) -> Result<Value, Failure> {
    match cmd {
        AttackCommand::Dlog { prime_bits, budget } => dlog(cli, *prime_bits, *budget),
        AttackCommand::Collusion {
            transcripts,
            colluders,
            target,
            budget,
        } => collusion(cli, transcripts, colluders, *target, *budget),
        AttackCommand::Frequency { sessions, salted } => frequency(cli, sessions, *salted),
    }
}

fn dlog(cli: &Cli, bits: u64, budget: u64) -> Result<Value, Failure> {
    let seed = cli.seed.unwrap_or_else(entropy_seed);
    let params = GroupParams::generate(bits, seed).map_err(|e| anyhow!("cannot generate {bits}-bit prime: {e}"))?;
    let key = SecretKey::generate(&params, &mut party_rng(Some(seed), 0, "dlog-key"));
    let base = encode_item(&params, b"overlap/attack/dlog-base").map_err(anyhow::Error::from)?;
    let target = mask(&params, &base, &key);
    let start = Instant::now();
    let found = brute_force_dlog(&params, &base, &target, budget);
    let elapsed = start.elapsed();
    Ok(json!({
        "attack": "dlog",
        "prime_bits": params.bit_length(),
        "p": params.p().to_str_radix(16),
        "budget": budget,
        "recovered": found,
        "correct": found.map(|k| &BigUint::from(k) == key.exponent()),
        "elapsed_ms": elapsed.as_secs_f64() * 1e3,
        "seed": seed,
    }))
}

fn read_transcript(path: &Path) -> Result<Transcript, Failure> {
    Ok(Transcript::read_jsonl(path).with_context(|| format!("reading transcript {}", path.display()))?)
}

/// The handshake hello in a transcript, if it recorded one.
fn hello(transcript: &Transcript) -> Option<Hello> {
    transcript
        .messages()
        .find(|(_, m)| m.protocol == ProtocolId::Handshake && m.msg_type == MSG_HELLO)
        .and_then(|(_, m)| Hello::decode(&m.payload).ok())
}

/// `--params` when given, else the set named in the transcripts' handshake.
fn audit_params(cli: &Cli, transcripts: &[&Transcript]) -> Result<GroupParams, Failure> {
    if let Some(spec) = &cli.params {
        return Ok(load_params(spec)?);
    }
    let hello = transcripts
        .iter()
        .find_map(|t| hello(t))
        .ok_or_else(|| anyhow!("no handshake in the transcripts; pass --params"))?;
    let params = load_params(&hello.params_name)?;
    if params.fingerprint() != hello.fingerprint {
        return Err(anyhow!("transcripts use unnamed parameters {:?}; pass --params", hello.params_name).into());
    }
    Ok(params)
}

#[derive(Deserialize)]
struct TruthFile {
    keys: Vec<String>,
    items: Vec<Vec<String>>,
}

fn collusion(cli: &Cli, dir: &Path, colluders: &[usize], target: usize, budget: u64) -> Result<Value, Failure> {
    let mut transcripts = Vec::new();
    loop {
        let path = dir.join(format!("p{}.jsonl", transcripts.len()));
        if !path.is_file() {
            break;
        }
        transcripts.push(read_transcript(&path)?);
    }
    if transcripts.is_empty() {
        return Err(anyhow!("no p0.jsonl, p1.jsonl, ... in {}", dir.display()).into());
    }
    let n = transcripts.len();
    let refs: Vec<&Transcript> = transcripts.iter().collect();
    let params = audit_params(cli, &refs)?;

    let truth_path = dir.join("truth.json");
    let report = if truth_path.is_file() {
        let text = fs::read_to_string(&truth_path).context("reading truth.json")?;
        let truth: TruthFile = serde_json::from_str(&text).context("parsing truth.json")?;
        let keys = truth
            .keys
            .iter()
            .map(|k| {
                let e = BigUint::parse_bytes(k.as_bytes(), 16).ok_or_else(|| anyhow!("truth key is not hex"))?;
                Ok(SecretKey::from_exponent(&params, e)?)
            })
            .collect::<anyhow::Result<Vec<_>>>()?;
        let items = truth
            .items
            .iter()
            .map(|l| l.iter().map(hex::decode).collect::<Result<Vec<_>, _>>())
            .collect::<Result<Vec<_>, _>>()
            .context("truth items are not hex")?;
        if keys.len() != n || items.len() != n {
            return Err(anyhow!("truth.json describes {} parties, found {n} transcripts", keys.len()).into());
        }
        let truth = LinkageTruth {
            keys: &keys,
            items: &items,
        };
        serde_json::to_value(collusion_audit(&params, &transcripts, colluders, target, &truth, budget)?)
            .expect("report serializes")
    } else {
        // Without ground truth only the key recovery can be attempted.
        let set: BTreeSet<usize> = colluders.iter().copied().collect();
        if target >= n || set.iter().any(|&c| c >= n || c == target) {
            return Err(anyhow!("colluders and target must be distinct positions below {n}").into());
        }
        json!({
            "colluders": set,
            "target": target,
            "recovered_key": recover_from_hops(&params, &transcripts, &set, target, n, budget),
        })
    };
    let mut report = report;
    report["attack"] = json!("collusion");
    Ok(report)
}

fn session_files(path: &PathBuf) -> Result<Vec<PathBuf>, Failure> {
    if path.is_file() {
        return Ok(vec![path.clone()]);
    }
    let mut files: Vec<PathBuf> = fs::read_dir(path)
        .with_context(|| format!("reading {}", path.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(anyhow!("no .jsonl transcripts in {}", path.display()).into());
    }
    Ok(files)
}

fn frequency(cli: &Cli, sessions: &[PathBuf], salted: bool) -> Result<Value, Failure> {
    let mut loaded = Vec::new();
    for session in sessions {
        let transcripts = session_files(session)?
            .iter()
            .map(|p| read_transcript(p))
            .collect::<Result<Vec<_>, _>>()?;
        loaded.push(transcripts);
    }
    let all: Vec<&Transcript> = loaded.iter().flatten().collect();
    let params = audit_params(cli, &all)?;
    let lists: Vec<Vec<_>> = loaded
        .iter()
        .map(|ts| ts.iter().flat_map(|t| transcript_elements(&params, t)).collect())
        .collect();
    let mut report = serde_json::to_value(frequency_audit(&lists, salted)).expect("report serializes");
    report["attack"] = json!("frequency");
    Ok(report)
}
