use std::net::TcpListener;
use std::time::Duration;

use overlap_core::error::{ProtocolError, TransportError};
use overlap_core::scenario::{self, RunOptions, Transport};
use overlap_core::transport::{
    run_parties, simulated_network, ChannelProvider, Deframer, Link, ProtocolId, Session, SessionId, TcpLink,
    Topology, Transcript, WireMessage, HEADER_LEN,
};
use overlap_core::{BigUint, GroupParams};

#[test]
fn frames_split_across_reads_reassemble() {
    let msgs: Vec<WireMessage> = (0..20u8)
        .map(|i| WireMessage::new(ProtocolId::Sum, i, SessionId([i; 16]), vec![i; i as usize * 7]))
        .collect();
    let stream: Vec<u8> = msgs.iter().flat_map(|m| m.frame().unwrap()).collect();
    assert_eq!(stream.len(), msgs.iter().map(|m| HEADER_LEN + m.payload.len()).sum::<usize>());
    for chunk in [1, 3, 22, 64, 1000] {
        let mut deframer = Deframer::new();
        let mut out = Vec::new();
        for piece in stream.chunks(chunk) {
            deframer.push(piece);
            while let Some(m) = deframer.next_message().unwrap() {
                out.push(m);
            }
        }
        assert_eq!(out, msgs);
        assert_eq!(deframer.buffered(), 0);
    }
}

#[test]
fn psk_mismatch_aborts_handshake() {
    let params = GroupParams::named("toy-64").unwrap();
    let links = simulated_network(2, &Topology::FullMesh);
    let results = run_parties(links, |i, link| {
        let provider = ChannelProvider::Psk(vec![i as u8; 8]);
        let mut session = Session::new(link, params.clone(), provider).with_timeout(Duration::from_secs(5));
        let mut rng = overlap_core::rng::derive_rng(1, i, "t");
        let r = if i == 0 {
            session.initiate(&[1], ProtocolId::Sum, b"cfg", &[], &mut rng).map(|_| ())
        } else {
            session.respond(0, ProtocolId::Sum, b"cfg").map(|_| ())
        };
        (r, session.into_transcript())
    });
    for (r, t) in results {
        assert!(r.is_err());
        assert_eq!(t.protocol_messages().count(), 0);
    }
}

#[test]
fn wrong_params_abort_before_payload() {
    let modulus: BigUint = BigUint::from(1u8) << 64;
    let links = simulated_network(2, &Topology::FullMesh);
    let results = run_parties(links, |i, link| {
        let params = GroupParams::named(if i == 0 { "toy-64" } else { "test-512" }).unwrap();
        let config = overlap_core::aggregate::SumConfig::new(
            vec!["a".into(), "b".into()],
            modulus.clone(),
            BigUint::from(5u8),
        )
        .unwrap();
        let mut session = Session::new(link, params, ChannelProvider::Null).with_timeout(Duration::from_secs(5));
        let mut rng = overlap_core::rng::derive_rng(2, i, "t");
        let r = overlap_core::aggregate::run_sum_ring(&mut session, &config, i, &BigUint::from(1u8), false, &mut rng);
        (r, session.into_transcript())
    });
    for (r, t) in results {
        let err = r.unwrap_err();
        assert!(
            matches!(&err, ProtocolError::HandshakeMismatch(m) if m.contains("group parameters"))
                || matches!(&err, ProtocolError::Rejected { reason, .. } if reason.contains("group parameters")),
            "{err:?}"
        );
        assert_eq!(t.protocol_messages().count(), 0);
    }
}

#[test]
fn same_seed_twice_identical_sum_transcripts() {
    let params = GroupParams::named("toy-64").unwrap();
    let m: BigUint = BigUint::from(1u8) << 64;
    let b = BigUint::from(1000u32);
    let values: Vec<BigUint> = [1u32, 2, 3].iter().map(|&v| BigUint::from(v)).collect();
    let a = scenario::sum(&params, &m, &b, &values, true, &RunOptions::sim(1)).unwrap();
    let c = scenario::sum(&params, &m, &b, &values, true, &RunOptions::sim(1)).unwrap();
    assert_eq!(a.transcripts, c.transcripts);
    let d = scenario::sum(&params, &m, &b, &values, true, &RunOptions::sim(2)).unwrap();
    assert_ne!(a.transcripts, d.transcripts);
}

#[test]
fn tcp_matches_sim_under_psk() {
    let params = GroupParams::named("toy-64").unwrap();
    let m: BigUint = BigUint::from(1u8) << 64;
    let b = BigUint::from(1000u32);
    let values: Vec<BigUint> = [10u32, 20, 30, 40, 50].iter().map(|&v| BigUint::from(v)).collect();
    let opts = RunOptions::sim(3).with_provider(ChannelProvider::Psk(b"shared".to_vec()));
    let sim = scenario::sum(&params, &m, &b, &values, true, &opts).unwrap();
    let tcp = scenario::sum(&params, &m, &b, &values, true, &opts.clone().with_transport(Transport::Tcp)).unwrap();
    let jsonl = |ts: &[Transcript]| ts.iter().map(Transcript::to_jsonl).collect::<Vec<_>>();
    assert_eq!(jsonl(&sim.transcripts), jsonl(&tcp.transcripts));
}

#[test]
fn transcripts_round_trip_through_jsonl_files() {
    let params = GroupParams::named("toy-64").unwrap();
    let m: BigUint = BigUint::from(1u8) << 64;
    let values: Vec<BigUint> = [1u32, 2].iter().map(|&v| BigUint::from(v)).collect();
    let run = scenario::sum(&params, &m, &BigUint::from(9u8), &values, false, &RunOptions::sim(4)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.jsonl");
    run.transcripts[0].write_jsonl(&path).unwrap();
    assert_eq!(Transcript::read_jsonl(&path).unwrap(), run.transcripts[0]);
}

#[test]
fn tcp_peer_hangup_is_a_network_error() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    let server = std::thread::spawn(move || {
        let link = TcpLink::accept_pair(1, &listener, Duration::from_secs(5)).unwrap();
        drop(link);
    });
    let mut link = TcpLink::connect_pair(0, 1, &addr, Duration::from_secs(5)).unwrap();
    server.join().unwrap();
    let err = link.recv(1, Duration::from_secs(5)).unwrap_err();
    assert!(matches!(err, TransportError::Disconnected(1)), "{err:?}");
    assert!(ProtocolError::from(err).is_network());
}
