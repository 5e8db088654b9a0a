//! Point-to-point frame delivery between numbered parties.
//!
//! A [`Link`] is one party's view of the network: it can send a frame to a
//! peer index and block for the next frame from a specific peer. Receiving
//! by explicit sender keeps every party's message order a function of its
//! own program order, which is what makes transcripts reproducible across
//! the simulated and TCP transports.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{ErrorKind, Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use crate::error::TransportError;
use crate::transport::frame::{Deframer, ProtocolId, SessionId, WireMessage};

/// Message type of the frame a TCP connector sends to announce its index.
/// It sits below the session layer and never enters a transcript.
const LINK_HELLO: u8 = 0x10;

pub trait Link: Send {
    fn self_index(&self) -> usize;
    fn send(&mut self, to: usize, msg: &WireMessage) -> Result<(), TransportError>;
    fn recv(&mut self, from: usize, timeout: Duration) -> Result<WireMessage, TransportError>;
}

impl<L: Link + ?Sized> Link for Box<L> {
    fn self_index(&self) -> usize {
        (**self).self_index()
    }

    fn send(&mut self, to: usize, msg: &WireMessage) -> Result<(), TransportError> {
        (**self).send(to, msg)
    }

    fn recv(&mut self, from: usize, timeout: Duration) -> Result<WireMessage, TransportError> {
        (**self).recv(from, timeout)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Topology {
    /// Every pair of parties is connected.
    FullMesh,
    /// Only `i <-> i+1 (mod n)`.
    Ring,
    /// Explicit undirected edges.
    Edges(Vec<(usize, usize)>),
}

impl Topology {
    fn edges(&self, n: usize) -> BTreeSet<(usize, usize)> {
        let mut out = BTreeSet::new();
        let mut add = |a: usize, b: usize| {
            if a != b {
                out.insert((a.min(b), a.max(b)));
            }
        };
        match self {
            Topology::FullMesh => {
                for a in 0..n {
                    for b in a + 1..n {
                        add(a, b);
                    }
                }
            }
            Topology::Ring => {
                for a in 0..n {
                    add(a, (a + 1) % n);
                }
            }
            Topology::Edges(edges) => {
                for &(a, b) in edges {
                    add(a, b);
                }
            }
        }
        out
    }
}

/// In-process lossless, ordered delivery over channels.
pub struct SimLink {
    index: usize,
    outbound: BTreeMap<usize, Sender<Vec<u8>>>,
    inbound: BTreeMap<usize, (Receiver<Vec<u8>>, Deframer)>,
}

/// Builds one [`SimLink`] per party, wired according to `topology`.
pub fn simulated_network(parties: usize, topology: &Topology) -> Vec<SimLink> {
    let mut links: Vec<SimLink> = (0..parties)
        .map(|index| SimLink {
            index,
            outbound: BTreeMap::new(),
            inbound: BTreeMap::new(),
        })
        .collect();
    for (a, b) in topology.edges(parties) {
        assert!(b < parties, "edge ({a}, {b}) outside a {parties}-party network");
        let (a_to_b, at_b) = mpsc::channel();
        let (b_to_a, at_a) = mpsc::channel();
        links[a].outbound.insert(b, a_to_b);
        links[a].inbound.insert(b, (at_a, Deframer::new()));
        links[b].outbound.insert(a, b_to_a);
        links[b].inbound.insert(a, (at_b, Deframer::new()));
    }
    links
}

impl Link for SimLink {
    fn self_index(&self) -> usize {
        self.index
    }

    fn send(&mut self, to: usize, msg: &WireMessage) -> Result<(), TransportError> {
        let sender = self.outbound.get(&to).ok_or(TransportError::NoSuchPeer(to))?;
        sender
            .send(msg.frame()?)
            .map_err(|_| TransportError::Disconnected(to))
    }

    fn recv(&mut self, from: usize, timeout: Duration) -> Result<WireMessage, TransportError> {
        let (receiver, deframer) = self
            .inbound
            .get_mut(&from)
            .ok_or(TransportError::NoSuchPeer(from))?;
        let deadline = Instant::now() + timeout;
        loop {
            if let Some(msg) = deframer.next_message()? {
                return Ok(msg);
            }
            let remaining = deadline.saturating_duration_since(Instant::now());
            match receiver.recv_timeout(remaining) {
                Ok(bytes) => deframer.push(&bytes),
                Err(RecvTimeoutError::Timeout) => return Err(TransportError::Timeout(from)),
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(TransportError::Disconnected(from))
                }
            }
        }
    }
}

/// Runs `party` once per link on its own thread and returns the results in
/// party order.
pub fn run_parties<L, T, F>(links: Vec<L>, party: F) -> Vec<T>
where
    L: Link,
    T: Send,
    F: Fn(usize, L) -> T + Sync,
{
    thread::scope(|scope| {
        let handles: Vec<_> = links
            .into_iter()
            .enumerate()
            .map(|(index, link)| {
                let party = &party;
                scope.spawn(move || party(index, link))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("party thread panicked"))
            .collect()
    })
}

struct TcpPeer {
    outbound: Option<Sender<Vec<u8>>>,
    writer: Option<JoinHandle<()>>,
    reader: TcpStream,
    deframer: Deframer,
}

/// Frame delivery over one TCP connection per peer. Writes go through a
/// per-connection thread so that a ring of parties all sending before
/// receiving cannot stall on full socket buffers.
pub struct TcpLink {
    index: usize,
    peers: BTreeMap<usize, TcpPeer>,
}

impl TcpLink {
    /// Wraps already-identified streams.
    pub fn from_streams(
        index: usize,
        streams: Vec<(usize, TcpStream)>,
    ) -> Result<TcpLink, TransportError> {
        let mut peers = BTreeMap::new();
        for (peer, stream) in streams {
            stream.set_nodelay(true)?;
            let mut write_half = stream.try_clone()?;
            let (tx, rx) = mpsc::channel::<Vec<u8>>();
            let writer = thread::spawn(move || {
                for bytes in rx {
                    if write_half.write_all(&bytes).is_err() {
                        break;
                    }
                }
                let _ = write_half.flush();
            });
            peers.insert(
                peer,
                TcpPeer {
                    outbound: Some(tx),
                    writer: Some(writer),
                    reader: stream,
                    deframer: Deframer::new(),
                },
            );
        }
        Ok(TcpLink { index, peers })
    }

    /// Full mesh among `addrs`: binds `addrs[index]`, dials every lower
    /// index and accepts every higher one.
    pub fn mesh(index: usize, addrs: &[String], timeout: Duration) -> Result<TcpLink, TransportError> {
        let listener = bind(&addrs[index])?;
        Self::mesh_on(index, &listener, addrs, timeout)
    }

    /// [`TcpLink::mesh`] over a listener the caller already bound, which
    /// lets tests use ephemeral ports.
    pub fn mesh_on(
        index: usize,
        listener: &TcpListener,
        addrs: &[String],
        timeout: Duration,
    ) -> Result<TcpLink, TransportError> {
        let deadline = Instant::now() + timeout;
        let mut streams = Vec::new();
        for (peer, addr) in addrs.iter().enumerate().take(index) {
            let stream = dial(addr, deadline)?;
            announce(&stream, index)?;
            streams.push((peer, stream));
        }
        let higher = addrs.len() - index - 1;
        for _ in 0..higher {
            let stream = accept(listener, deadline)?;
            let peer = identify(&stream, deadline)?;
            if peer <= index || peer >= addrs.len() {
                return Err(TransportError::Io(format!("unexpected peer index {peer}")));
            }
            streams.push((peer, stream));
        }
        TcpLink::from_streams(index, streams)
    }

    /// Two-party link where this side listens.
    pub fn listen_pair(
        index: usize,
        addr: &str,
        timeout: Duration,
    ) -> Result<TcpLink, TransportError> {
        let listener = bind(addr)?;
        Self::accept_pair(index, &listener, timeout)
    }

    pub fn accept_pair(
        index: usize,
        listener: &TcpListener,
        timeout: Duration,
    ) -> Result<TcpLink, TransportError> {
        let deadline = Instant::now() + timeout;
        let stream = accept(listener, deadline)?;
        let peer = identify(&stream, deadline)?;
        TcpLink::from_streams(index, vec![(peer, stream)])
    }

    /// Two-party link where this side dials `peer` at `addr`.
    pub fn connect_pair(
        index: usize,
        peer: usize,
        addr: &str,
        timeout: Duration,
    ) -> Result<TcpLink, TransportError> {
        let stream = dial(addr, Instant::now() + timeout)?;
        announce(&stream, index)?;
        TcpLink::from_streams(index, vec![(peer, stream)])
    }
}

impl Drop for TcpLink {
    fn drop(&mut self) {
        for peer in self.peers.values_mut() {
            peer.outbound.take();
            if let Some(writer) = peer.writer.take() {
                let _ = writer.join();
            }
        }
    }
}

impl Link for TcpLink {
    fn self_index(&self) -> usize {
        self.index
    }

    fn send(&mut self, to: usize, msg: &WireMessage) -> Result<(), TransportError> {
        let peer = self.peers.get(&to).ok_or(TransportError::NoSuchPeer(to))?;
        let bytes = msg.frame()?;
        peer.outbound
            .as_ref()
            .expect("sender lives until drop")
            .send(bytes)
            .map_err(|_| TransportError::Disconnected(to))
    }

    fn recv(&mut self, from: usize, timeout: Duration) -> Result<WireMessage, TransportError> {
        let peer = self
            .peers
            .get_mut(&from)
            .ok_or(TransportError::NoSuchPeer(from))?;
        read_message(&mut peer.reader, &mut peer.deframer, Instant::now() + timeout)
            .map_err(|err| match err {
                ReadFailure::Timeout => TransportError::Timeout(from),
                ReadFailure::Closed => TransportError::Disconnected(from),
                ReadFailure::Other(err) => err,
            })
    }
}

enum ReadFailure {
    Timeout,
    Closed,
    Other(TransportError),
}

fn read_message(
    stream: &mut TcpStream,
    deframer: &mut Deframer,
    deadline: Instant,
) -> Result<WireMessage, ReadFailure> {
    let mut buf = [0u8; 8192];
    loop {
        match deframer.next_message() {
            Ok(Some(msg)) => return Ok(msg),
            Ok(None) => {}
            Err(err) => return Err(ReadFailure::Other(err.into())),
        }
        let remaining = deadline.saturating_duration_since(Instant::now());
        if remaining.is_zero() {
            return Err(ReadFailure::Timeout);
        }
        stream
            .set_read_timeout(Some(remaining))
            .map_err(|e| ReadFailure::Other(e.into()))?;
        match stream.read(&mut buf) {
            Ok(0) => return Err(ReadFailure::Closed),
            Ok(n) => deframer.push(&buf[..n]),
            Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(ReadFailure::Other(e.into())),
        }
    }
}

fn bind(addr: &str) -> Result<TcpListener, TransportError> {
    TcpListener::bind(addr).map_err(|e| TransportError::Io(format!("bind {addr}: {e}")))
}

fn dial(addr: &str, deadline: Instant) -> Result<TcpStream, TransportError> {
    let resolved: Vec<_> = addr
        .to_socket_addrs()
        .map_err(|_| TransportError::Unreachable(addr.to_string()))?
        .collect();
    loop {
        for candidate in &resolved {
            let remaining = deadline.saturating_duration_since(Instant::now());
            let attempt = remaining.min(Duration::from_millis(500)).max(Duration::from_millis(1));
            if let Ok(stream) = TcpStream::connect_timeout(candidate, attempt) {
                return Ok(stream);
            }
        }
        if Instant::now() >= deadline {
            return Err(TransportError::Unreachable(addr.to_string()));
        }
        thread::sleep(Duration::from_millis(25));
    }
}

fn accept(listener: &TcpListener, deadline: Instant) -> Result<TcpStream, TransportError> {
    listener.set_nonblocking(true)?;
    loop {
        match listener.accept() {
            Ok((stream, _)) => {
                stream.set_nonblocking(false)?;
                return Ok(stream);
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => {
                if Instant::now() >= deadline {
                    return Err(TransportError::Io("timed out during link setup".into()));
                }
                thread::sleep(Duration::from_millis(10));
            }
            Err(e) => return Err(e.into()),
        }
    }
}

fn announce(mut stream: &TcpStream, index: usize) -> Result<(), TransportError> {
    let hello = WireMessage::new(
        ProtocolId::Handshake,
        LINK_HELLO,
        SessionId::default(),
        (index as u32).to_be_bytes().to_vec(),
    );
    stream.write_all(&hello.frame()?)?;
    Ok(())
}

fn identify(stream: &TcpStream, deadline: Instant) -> Result<usize, TransportError> {
    let mut reader = stream.try_clone()?;
    // The connector's first frame is the announcement alone, so reading
    // exactly its 26 bytes leaves nothing of later frames behind.
    let mut deframer = Deframer::new();
    let mut exact = [0u8; 26];
    let mut filled = 0;
    while filled < exact.len() {
        let remaining = deadline.saturating_duration_since(Instant::now());
        if remaining.is_zero() {
            return Err(TransportError::Io("timed out during link setup".into()));
        }
        reader.set_read_timeout(Some(remaining))?;
        match reader.read(&mut exact[filled..]) {
            Ok(0) => return Err(TransportError::Io("peer closed during link setup".into())),
            Ok(n) => filled += n,
            Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut | ErrorKind::Interrupted) => {}
            Err(e) => return Err(e.into()),
        }
    }
    deframer.push(&exact);
    match deframer.next_message()? {
        Some(msg)
            if msg.protocol == ProtocolId::Handshake
                && msg.msg_type == LINK_HELLO
                && msg.payload.len() == 4 =>
        {
            Ok(u32::from_be_bytes(msg.payload[..4].try_into().expect("4 bytes")) as usize)
        }
        _ => Err(TransportError::Io("bad link announcement".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn msg(tag: u8) -> WireMessage {
        WireMessage::new(ProtocolId::Sum, tag, SessionId([tag; 16]), vec![tag; tag as usize])
    }

    #[test]
    fn three_party_ring_delivers_in_ring_order() {
        let links = simulated_network(3, &Topology::Ring);
        let received = run_parties(links, |i, mut link| {
            link.send((i + 1) % 3, &msg(i as u8)).unwrap();
            let got = link.recv((i + 2) % 3, Duration::from_secs(5)).unwrap();
            got.msg_type
        });
        assert_eq!(received, vec![2, 0, 1]);
    }

    #[test]
    fn missing_edge_is_reported() {
        let mut links = simulated_network(3, &Topology::Ring);
        let mut link = links.remove(0);
        assert_eq!(link.send(0, &msg(1)), Err(TransportError::NoSuchPeer(0)));
        let mut star = simulated_network(3, &Topology::Edges(vec![(0, 1), (0, 2)]));
        assert_eq!(star[1].send(2, &msg(1)), Err(TransportError::NoSuchPeer(2)));
    }

    #[test]
    fn recv_times_out() {
        let mut links = simulated_network(2, &Topology::FullMesh);
        let err = links[0].recv(1, Duration::from_millis(20)).unwrap_err();
        assert_eq!(err, TransportError::Timeout(1));
    }

    #[test]
    fn tcp_mesh_exchanges_frames() {
        let ports: Vec<String> = (0..3)
            .map(|_| {
                let l = TcpListener::bind("127.0.0.1:0").unwrap();
                l.local_addr().unwrap().to_string()
            })
            .collect();
        let results = thread::scope(|scope| {
            let handles: Vec<_> = (0..3)
                .map(|i| {
                    let ports = ports.clone();
                    scope.spawn(move || {
                        let mut link = TcpLink::mesh(i, &ports, Duration::from_secs(10)).unwrap();
                        for peer in (0..3).filter(|&p| p != i) {
                            link.send(peer, &msg(i as u8 + 1)).unwrap();
                        }
                        let mut got: Vec<u8> = (0..3)
                            .filter(|&p| p != i)
                            .map(|p| link.recv(p, Duration::from_secs(10)).unwrap().msg_type)
                            .collect();
                        got.sort();
                        got
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect::<Vec<_>>()
        });
        assert_eq!(results, vec![vec![2, 3], vec![1, 3], vec![1, 2]]);
    }

    #[test]
    fn dialing_a_closed_port_is_unreachable() {
        let addr = {
            let l = TcpListener::bind("127.0.0.1:0").unwrap();
            l.local_addr().unwrap().to_string()
        };
        let err = TcpLink::connect_pair(0, 1, &addr, Duration::from_millis(200)).err().unwrap();
        assert!(matches!(err, TransportError::Unreachable(_)));
    }
}
