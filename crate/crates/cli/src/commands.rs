use std::fs;
use std::path::Path;
use std::time::Duration;

use anyhow::{anyhow, bail, Context};
use overlap_core::aggregate::{run_sum_ring, SumConfig};
use overlap_core::cipher::SecretKey;
use overlap_core::linkage::{run_linkage, Mediator, RingConfig};
use overlap_core::negotiation::{run_negotiation, NegotiationConfig, NegotiationMode, PriceGrid, Role};
use overlap_core::rng::{entropy_seed, party_rng};
use overlap_core::transport::{ChannelProvider, Link, Session, TcpLink, Transcript};
use overlap_core::GroupParams;
use serde_json::{json, Value};

use crate::config::{self, KeygenPaths, RingFile};
use crate::{attack, demo, AverageArgs, Cli, Command, Failure, KeygenArgs, LinkageArgs, ModeArg, NegotiateArgs, NetArgs, RoleArg};

const DEFAULT_PARAMS: &str = "modp-2048";

pub fn run(cli: &Cli) -> Result<Value, Failure> {
    match &cli.command {
        Command::Keygen(args) => keygen(cli, args),
        Command::Linkage(args) => linkage(cli, args),
        Command::Negotiate(args) => negotiate(cli, args),
        Command::Average(args) => average(cli, args),
        Command::Demo(args) => demo::run(cli, &args.scenario),
        Command::Attack(cmd) => attack::run(cli, cmd),
    }
}

/// `--params` if given, else `fallback`.
pub fn params_or(cli: &Cli, fallback: &str) -> Result<GroupParams, Failure> {
    Ok(config::load_params(cli.params.as_deref().unwrap_or(fallback))?)
}

fn provider(net: &NetArgs) -> Result<ChannelProvider, Failure> {
    match &net.psk {
        None => Ok(ChannelProvider::Null),
        Some(text) => {
            let key = hex::decode(text).map_err(|e| anyhow!("--psk is not hex: {e}"))?;
            if key.is_empty() {
                return Err(anyhow!("--psk is empty").into());
            }
            Ok(ChannelProvider::Psk(key))
        }
    }
}

fn timeout(net: &NetArgs) -> Duration {
    Duration::from_secs(net.timeout.max(1))
}

fn write_transcript(cli: &Cli, transcript: &Transcript) -> Result<(), Failure> {
    if let Some(path) = &cli.transcript {
        transcript
            .write_jsonl(path)
            .with_context(|| format!("writing transcript {}", path.display()))?;
    }
    Ok(())
}

fn keygen(cli: &Cli, args: &KeygenArgs) -> Result<Value, Failure> {
    let params = match args.prime_bits {
        64 => GroupParams::named("toy-64"),
        512 => GroupParams::named("test-512"),
        2048 => GroupParams::named("modp-2048"),
        bits => {
            let seed = cli.seed.unwrap_or_else(entropy_seed);
            GroupParams::generate(bits, seed)
        }
    }
    .map_err(|e| anyhow!("cannot produce {}-bit parameters: {e}", args.prime_bits))?;

    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let paths = KeygenPaths::in_dir(&args.out);
    for path in [&paths.params, &paths.key] {
        if path.exists() && !args.force {
            return Err(anyhow!("{} exists; pass --force to overwrite", path.display()).into());
        }
    }
    let key = SecretKey::generate(&params, &mut party_rng(cli.seed, 0, "keygen"));
    config::save_params(&paths.params, &params)?;
    config::save_key(&paths.key, &params, &key)?;
    // Read back through the validating loaders.
    let reloaded = config::load_params(&paths.params.to_string_lossy())?;
    config::load_key(&paths.key, &reloaded)?;
    Ok(json!({
        "params": paths.params,
        "key": paths.key,
        "name": reloaded.name(),
        "bit_length": reloaded.bit_length(),
        "fingerprint": hex::encode(reloaded.fingerprint()),
    }))
}

fn ring_params(cli: &Cli, ring: &RingFile) -> Result<GroupParams, Failure> {
    match (&ring.params, &cli.params) {
        (Some(file), Some(flag)) if file != flag => {
            Err(anyhow!("--params {flag:?} disagrees with the ring file's {file:?}").into())
        }
        (Some(name), _) | (None, Some(name)) => Ok(config::load_params(name)?),
        (None, None) => Ok(config::load_params(DEFAULT_PARAMS)?),
    }
}

fn linkage(cli: &Cli, args: &LinkageArgs) -> Result<Value, Failure> {
    let ring = RingFile::load(&args.ring)?;
    let params = ring_params(cli, &ring)?;
    let provider = provider(&args.net)?;
    let addrs = ring.addresses();

    if args.mediator {
        if ring.mediator.is_none() {
            return Err(anyhow!("ring file has no [mediator] entry").into());
        }
        let index = ring.parties.len();
        let link = TcpLink::mesh(index, &addrs, timeout(&args.net))?;
        let mut session = Session::new(link, params.clone(), provider).with_timeout(timeout(&args.net));
        let mediator = Mediator::new(params, ring.ids());
        let result = mediator.serve(&mut session);
        write_transcript(cli, session.transcript())?;
        let canonical = result?;
        return Ok(json!({
            "role": "mediator",
            "parties": ring.parties.len(),
            "canonical_size": canonical.len(),
        }));
    }

    let id = args.id.as_deref().expect("clap requires --id");
    let index = ring.position(id)?;
    let items = config::load_items(args.items.as_deref().expect("clap requires --items"))?;
    let key = match &args.key {
        Some(path) => config::load_key(path, &params)?,
        None => SecretKey::generate(&params, &mut party_rng(cli.seed, index, "linkage-key")),
    };
    let ring_config = RingConfig::new(ring.ids(), params.clone(), index, ring.mediator.is_some())?;
    let link = TcpLink::mesh(index, &addrs, timeout(&args.net))?;
    let mut session = Session::new(link, params, provider).with_timeout(timeout(&args.net));
    let mut rng = party_rng(cli.seed, index, "linkage-session");
    let result = run_linkage(&mut session, &ring_config, &items, &key, &mut rng);
    write_transcript(cli, session.transcript())?;
    let result = result?;
    let matches: Vec<Value> = result
        .local_matches
        .iter()
        .map(|&(local, position)| {
            json!({
                "position": position,
                "local_index": local,
                "item": String::from_utf8_lossy(&items[local]),
            })
        })
        .collect();
    Ok(json!({
        "role": "member",
        "id": id,
        "canonical_size": result.canonical_order.len(),
        "matches": matches,
    }))
}

pub fn parse_grid(text: &str) -> anyhow::Result<PriceGrid> {
    let parts: Vec<&str> = text.split(':').collect();
    let [min, max, step] = parts.as_slice() else {
        bail!("grid must be min:max:step, got {text:?}");
    };
    let num = |s: &str| s.trim().parse::<u64>().with_context(|| format!("grid value {s:?} is not an integer"));
    Ok(PriceGrid::from_range(num(min)?, num(max)?, num(step)?)?)
}

fn negotiate(cli: &Cli, args: &NegotiateArgs) -> Result<Value, Failure> {
    let params = params_or(cli, DEFAULT_PARAMS)?;
    let grid = parse_grid(&args.grid)?;
    let mode = match args.mode {
        ModeArg::Symmetric => NegotiationMode::Symmetric,
        ModeArg::AliceOnly => NegotiationMode::AliceOnly,
    };
    let role = match args.role {
        RoleArg::Alice => Role::Alice,
        RoleArg::Bob => Role::Bob,
    };
    let provider = provider(&args.net)?;
    let wait = timeout(&args.net);
    let (link, initiator) = match (&args.listen, &args.connect) {
        (Some(addr), _) => (TcpLink::listen_pair(role.index(), addr, wait)?, false),
        (None, Some(addr)) => (TcpLink::connect_pair(role.index(), role.other().index(), addr, wait)?, true),
        (None, None) => return Err(anyhow!("one of --listen or --connect is required").into()),
    };
    let config = NegotiationConfig { params: params.clone(), grid, mode };
    let mut session = Session::new(link, params, provider).with_timeout(wait);
    let mut rng = party_rng(cli.seed, role.index(), "negotiation-session");
    let outcome = run_negotiation(&mut session, role, args.price, &config, initiator, &mut rng);
    finish_session(cli, session)?;
    Ok(serde_json::to_value(outcome?).expect("outcome serializes"))
}

fn finish_session<L: Link>(cli: &Cli, session: Session<L>) -> Result<(), Failure> {
    write_transcript(cli, session.transcript())
}

fn average(cli: &Cli, args: &AverageArgs) -> Result<Value, Failure> {
    let ring = RingFile::load(&args.ring)?;
    let params = ring_params(cli, &ring)?;
    let provider = provider(&args.net)?;
    let index = ring.position(&args.id)?;
    let value = config::parse_big(&args.value).context("--value")?;
    let (modulus, bound) = ring.sum_bounds()?;
    let sum_config = SumConfig::new(ring.ids(), modulus, bound)?;
    if args.broadcast && index != 0 {
        log::warn!("--broadcast only matters for the first ring member");
    }
    // The mediator entry, if any, takes no part in a sum.
    let addrs: Vec<String> = ring.parties.iter().map(|p| p.address.clone()).collect();
    let link = TcpLink::mesh(index, &addrs, timeout(&args.net))?;
    let mut session = Session::new(link, params, provider).with_timeout(timeout(&args.net));
    let mut rng = party_rng(cli.seed, index, "sum-session");
    let outcome = run_sum_ring(&mut session, &sum_config, index, &value, args.broadcast, &mut rng);
    write_transcript(cli, session.transcript())?;
    Ok(serde_json::to_value(outcome?).expect("outcome serializes"))
}

pub fn ensure_dir(path: &Path) -> Result<(), Failure> {
    fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(())
}
