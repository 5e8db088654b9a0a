//! Whole sessions run inside one process, over the simulated network or
//! loopback TCP. Used by the demo command, the tests and the acceptance
//! suite; every random choice flows from one seed.

use std::net::TcpListener;
use std::thread;
use std::time::Duration;

use num_bigint::BigUint;

use crate::aggregate::{run_sum_ring, SumConfig, SumOutcome};
use crate::cipher::{MaskedElement, SecretKey};
use crate::error::{ProtocolError, TransportError};
use crate::group::GroupParams;
use crate::linkage::{run_linkage, LinkageResult, Mediator, PartyId, RingConfig};
use crate::negotiation::{run_negotiation, Cents, NegotiationConfig, NegotiationOutcome, Role};
use crate::rng::derive_rng;
use crate::transport::{
    run_parties, simulated_network, ChannelProvider, Link, Session, TcpLink, Topology, Transcript,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Transport {
    Sim,
    Tcp,
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub seed: u64,
    pub provider: ChannelProvider,
    pub transport: Transport,
    pub timeout: Duration,
}

impl RunOptions {
    pub fn sim(seed: u64) -> Self {
        RunOptions {
            seed,
            provider: ChannelProvider::Null,
            transport: Transport::Sim,
            timeout: Duration::from_secs(30),
        }
    }

    pub fn with_transport(mut self, transport: Transport) -> Self {
        self.transport = transport;
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn with_provider(mut self, provider: ChannelProvider) -> Self {
        self.provider = provider;
        self
    }
}

/// Ring member keys derived from `seed`, one per party.
pub fn seeded_keys(params: &GroupParams, seed: u64, parties: usize) -> Vec<SecretKey> {
    (0..parties)
        .map(|i| SecretKey::generate(params, &mut derive_rng(seed, i, "linkage-key")))
        .collect()
}

/// Full-mesh links for `n` parties on the chosen transport, handed to
/// `party` on one thread each.
fn with_links<T, F>(n: usize, opts: &RunOptions, party: F) -> Result<Vec<T>, ProtocolError>
where
    T: Send,
    F: Fn(usize, Box<dyn Link>) -> T + Sync,
{
    match opts.transport {
        Transport::Sim => {
            let links = simulated_network(n, &Topology::FullMesh);
            Ok(run_parties(links, |i, link| party(i, Box::new(link))))
        }
        Transport::Tcp => {
            let listeners = (0..n)
                .map(|_| TcpListener::bind("127.0.0.1:0"))
                .collect::<Result<Vec<_>, _>>()
                .map_err(TransportError::from)?;
            let addrs = listeners
                .iter()
                .map(|l| l.local_addr().map(|a| a.to_string()))
                .collect::<Result<Vec<_>, _>>()
                .map_err(TransportError::from)?;
            let party = &party;
            let addrs = &addrs;
            let results: Vec<Result<T, TransportError>> = thread::scope(|scope| {
                let handles: Vec<_> = listeners
                    .into_iter()
                    .enumerate()
                    .map(|(i, listener)| {
                        scope.spawn(move || {
                            TcpLink::mesh_on(i, &listener, addrs, opts.timeout)
                                .map(|link| party(i, Box::new(link)))
                        })
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("party thread panicked"))
                    .collect()
            });
            results
                .into_iter()
                .map(|r| r.map_err(ProtocolError::from))
                .collect()
        }
    }
}

enum LinkageRole {
    Member(LinkageResult),
    Mediator(Vec<MaskedElement>),
}

pub struct LinkageRun {
    pub results: Vec<LinkageResult>,
    /// Ring members first, then the mediator if present.
    pub transcripts: Vec<Transcript>,
    pub mediator_canonical: Option<Vec<MaskedElement>>,
}

/// Runs one linkage session. `items[i]` and `keys[i]` belong to ring
/// position `i`; party ids are `p0, p1, ...`.
pub fn linkage(
    params: &GroupParams,
    items: &[Vec<Vec<u8>>],
    keys: &[SecretKey],
    mediator: bool,
    opts: &RunOptions,
) -> Result<LinkageRun, ProtocolError> {
    let ids: Vec<PartyId> = (0..items.len()).map(|i| format!("p{i}")).collect();
    linkage_with_ids(params, &ids, items, keys, mediator, opts)
}

pub fn linkage_with_ids(
    params: &GroupParams,
    ids: &[PartyId],
    items: &[Vec<Vec<u8>>],
    keys: &[SecretKey],
    mediator: bool,
    opts: &RunOptions,
) -> Result<LinkageRun, ProtocolError> {
    let n = ids.len();
    assert_eq!(items.len(), n, "one item list per party");
    assert_eq!(keys.len(), n, "one key per party");
    let total = n + usize::from(mediator);
    let outputs = with_links(total, opts, |i, link| {
        let mut session = Session::new(link, params.clone(), opts.provider.clone()).with_timeout(opts.timeout);
        let mut rng = derive_rng(opts.seed, i, "linkage-session");
        let outcome = if i == n {
            Mediator::new(params.clone(), ids.to_vec())
                .serve(&mut session)
                .map(LinkageRole::Mediator)
        } else {
            let ring = RingConfig::new(ids.to_vec(), params.clone(), i, mediator)?;
            run_linkage(&mut session, &ring, &items[i], &keys[i], &mut rng).map(LinkageRole::Member)
        };
        outcome.map(|o| (o, session.into_transcript()))
    })?;
    let mut results = Vec::with_capacity(n);
    let mut transcripts = Vec::with_capacity(total);
    let mut mediator_canonical = None;
    for output in outputs {
        let (outcome, transcript) = output?;
        match outcome {
            LinkageRole::Member(result) => results.push(result),
            LinkageRole::Mediator(canonical) => mediator_canonical = Some(canonical),
        }
        transcripts.push(transcript);
    }
    Ok(LinkageRun {
        results,
        transcripts,
        mediator_canonical,
    })
}

pub struct NegotiationRun {
    pub alice: NegotiationOutcome,
    pub bob: NegotiationOutcome,
    /// Alice's transcript, then Bob's.
    pub transcripts: Vec<Transcript>,
}

/// One negotiation with Alice at index 0 opening the handshake.
pub fn negotiation(
    config: &NegotiationConfig,
    bid: Cents,
    reservation: Cents,
    opts: &RunOptions,
) -> Result<NegotiationRun, ProtocolError> {
    let outputs = with_links(2, opts, |i, link| {
        let mut session =
            Session::new(link, config.params.clone(), opts.provider.clone()).with_timeout(opts.timeout);
        let mut rng = derive_rng(opts.seed, i, "negotiation-session");
        let (role, price) = if i == 0 {
            (Role::Alice, bid)
        } else {
            (Role::Bob, reservation)
        };
        run_negotiation(&mut session, role, price, config, i == 0, &mut rng)
            .map(|outcome| (outcome, session.into_transcript()))
    })?;
    let mut outputs = outputs.into_iter();
    let (alice, alice_t) = outputs.next().expect("two parties")?;
    let (bob, bob_t) = outputs.next().expect("two parties")?;
    Ok(NegotiationRun {
        alice,
        bob,
        transcripts: vec![alice_t, bob_t],
    })
}

pub struct SumRun {
    pub outcomes: Vec<SumOutcome>,
    pub transcripts: Vec<Transcript>,
}

/// One secure-sum session; ring position 0 initiates. Group parameters
/// only feed the handshake fingerprint here.
pub fn sum(
    params: &GroupParams,
    modulus: &BigUint,
    value_bound: &BigUint,
    values: &[BigUint],
    broadcast: bool,
    opts: &RunOptions,
) -> Result<SumRun, ProtocolError> {
    let ids: Vec<PartyId> = (0..values.len()).map(|i| format!("p{i}")).collect();
    let config = SumConfig::new(ids, modulus.clone(), value_bound.clone())?;
    let outputs = with_links(values.len(), opts, |i, link| {
        let mut session = Session::new(link, params.clone(), opts.provider.clone()).with_timeout(opts.timeout);
        let mut rng = derive_rng(opts.seed, i, "sum-session");
        run_sum_ring(&mut session, &config, i, &values[i], broadcast, &mut rng)
            .map(|outcome| (outcome, session.into_transcript()))
    })?;
    let mut outcomes = Vec::new();
    let mut transcripts = Vec::new();
    for output in outputs {
        let (outcome, transcript) = output?;
        outcomes.push(outcome);
        transcripts.push(transcript);
    }
    Ok(SumRun {
        outcomes,
        transcripts,
    })
}
