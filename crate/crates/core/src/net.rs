//! Party-to-party transport.
//!
//! Wire format: length-prefixed binary frames
//! `[4-byte big-endian length][1-byte tag][16-byte session id][payload]`,
//! where the length covers everything after the length field. Element
//! encodings inside payloads are little-endian fixed width.
//!
//! Two implementations are provided: an in-process channel transport for
//! tests and single-process stacks, and a TCP mesh with one persistent
//! connection per party pair that demultiplexes frames by session id.

use crate::error::{MpcError, MpcResult};
use crate::session::PartyId;
use crossbeam_channel::{unbounded, Receiver, Sender};
use std::collections::HashMap;
use std::io::{BufWriter, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

pub type SessionId = [u8; 16];

/// Message tags. One byte on the wire.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
#[repr(u8)]
pub enum MsgTag {
    Hello = 1,
    /// `own` share components sent to the next party during an opening.
    OpenOwn = 2,
    /// `next` share components sent to the previous party (cross-check).
    OpenNext = 3,
    /// Additive-to-replicated resharing during preprocessing.
    Reshare = 4,
    /// Key-schedule share exchange at the start of a GCM protocol.
    KeyShare = 5,
    /// End-of-session transcript digest.
    Transcript = 6,
}

impl MsgTag {
    fn from_u8(v: u8) -> Option<MsgTag> {
        Some(match v {
            1 => MsgTag::Hello,
            2 => MsgTag::OpenOwn,
            3 => MsgTag::OpenNext,
            4 => MsgTag::Reshare,
            5 => MsgTag::KeyShare,
            6 => MsgTag::Transcript,
            _ => return None,
        })
    }
}

/// A frame as it travels between parties.
#[derive(Clone, Debug)]
pub struct Frame {
    pub tag: u8,
    pub session: SessionId,
    pub payload: Vec<u8>,
}

pub fn encode_frame(frame: &Frame) -> Vec<u8> {
    let len = 1 + 16 + frame.payload.len();
    let mut out = Vec::with_capacity(4 + len);
    out.extend_from_slice(&(len as u32).to_be_bytes());
    out.push(frame.tag);
    out.extend_from_slice(&frame.session);
    out.extend_from_slice(&frame.payload);
    out
}

pub fn read_frame<R: Read>(reader: &mut R) -> MpcResult<Frame> {
    let mut len_buf = [0u8; 4];
    reader.read_exact(&mut len_buf)?;
    let len = u32::from_be_bytes(len_buf) as usize;
    if len < 17 {
        return Err(MpcError::Format(format!("frame too short: {len}")));
    }
    let mut body = vec![0u8; len];
    reader.read_exact(&mut body)?;
    let tag = body[0];
    let mut session = [0u8; 16];
    session.copy_from_slice(&body[1..17]);
    Ok(Frame {
        tag,
        session,
        payload: body[17..].to_vec(),
    })
}

/// Transport view a single session holds: tagged frames to/from each peer,
/// FIFO per peer pair.
pub trait SessionTransport: Send {
    fn send(&mut self, to: PartyId, tag: MsgTag, payload: &[u8]) -> MpcResult<()>;
    fn recv(&mut self, from: PartyId, tag: MsgTag) -> MpcResult<Vec<u8>>;
    /// Bytes sent/received so far (payload + framing), for accounting.
    fn traffic(&self) -> (u64, u64);
}

// ---------------------------------------------------------------------------
// In-process transport

/// Channel-backed transport connecting three in-process parties.
pub struct LocalTransport {
    party: PartyId,
    session: SessionId,
    tx: HashMap<PartyId, Sender<Vec<u8>>>,
    rx: HashMap<PartyId, Receiver<Vec<u8>>>,
    sent: u64,
    received: u64,
}

/// Builds transports for parties 1, 2, 3 wired pairwise.
pub fn local_trio(session: SessionId) -> [LocalTransport; 3] {
    let mut txs: HashMap<(u8, u8), Sender<Vec<u8>>> = HashMap::new();
    let mut rxs: HashMap<(u8, u8), Receiver<Vec<u8>>> = HashMap::new();
    for from in 1..=3u8 {
        for to in 1..=3u8 {
            if from != to {
                let (tx, rx) = unbounded();
                txs.insert((from, to), tx);
                rxs.insert((from, to), rx);
            }
        }
    }
    [1u8, 2, 3].map(|me| {
        let party = PartyId::new(me).unwrap();
        let mut tx = HashMap::new();
        let mut rx = HashMap::new();
        for other in 1..=3u8 {
            if other != me {
                let peer = PartyId::new(other).unwrap();
                tx.insert(peer, txs[&(me, other)].clone());
                rx.insert(peer, rxs[&(other, me)].clone());
            }
        }
        LocalTransport {
            party,
            session,
            tx,
            rx,
            sent: 0,
            received: 0,
        }
    })
}

impl SessionTransport for LocalTransport {
    fn send(&mut self, to: PartyId, tag: MsgTag, payload: &[u8]) -> MpcResult<()> {
        assert_ne!(to, self.party);
        let bytes = encode_frame(&Frame {
            tag: tag as u8,
            session: self.session,
            payload: payload.to_vec(),
        });
        self.sent += bytes.len() as u64;
        self.tx[&to]
            .send(bytes)
            .map_err(|_| MpcError::Net("peer channel closed".into()))
    }

    fn recv(&mut self, from: PartyId, tag: MsgTag) -> MpcResult<Vec<u8>> {
        let bytes = self.rx[&from]
            .recv_timeout(Duration::from_secs(120))
            .map_err(|_| MpcError::Net(format!("recv from {from} timed out")))?;
        self.received += bytes.len() as u64;
        let frame = read_frame(&mut &bytes[..])?;
        if frame.session != self.session {
            return Err(MpcError::Format("frame for a different session".into()));
        }
        if frame.tag != tag as u8 {
            return Err(MpcError::Format(format!(
                "expected tag {:?}, got {}",
                tag, frame.tag
            )));
        }
        Ok(frame.payload)
    }

    fn traffic(&self) -> (u64, u64) {
        (self.sent, self.received)
    }
}

// ---------------------------------------------------------------------------
// TCP mesh

struct Inbox {
    queues: Mutex<HashMap<(SessionId, PartyId), Vec<Frame>>>,
    closed: Mutex<bool>,
    cv: Condvar,
}

impl Inbox {
    fn push(&self, from: PartyId, frame: Frame) {
        let mut q = self.queues.lock().unwrap();
        q.entry((frame.session, from)).or_default().push(frame);
        self.cv.notify_all();
    }

    fn close(&self) {
        *self.closed.lock().unwrap() = true;
        self.cv.notify_all();
    }

    fn pop(&self, session: SessionId, from: PartyId, timeout: Duration) -> MpcResult<Frame> {
        let mut q = self.queues.lock().unwrap();
        loop {
            if let Some(list) = q.get_mut(&(session, from)) {
                if !list.is_empty() {
                    return Ok(list.remove(0));
                }
            }
            if *self.closed.lock().unwrap() {
                return Err(MpcError::Net("peer connection closed".into()));
            }
            let (guard, res) = self.cv.wait_timeout(q, timeout).unwrap();
            q = guard;
            if res.timed_out() {
                return Err(MpcError::Net(format!("recv from {from} timed out")));
            }
        }
    }
}

/// Persistent TCP connections to both peers; frames are demultiplexed by
/// session id so sessions can be opened one after another over the same
/// mesh.
pub struct TcpMesh {
    party: PartyId,
    writers: HashMap<PartyId, Mutex<BufWriter<TcpStream>>>,
    inbox: Arc<Inbox>,
    sent: Mutex<u64>,
    received: Arc<Mutex<u64>>,
}

impl TcpMesh {
    /// Listens on `listen`, dials every higher-numbered peer, and accepts
    /// connections from lower-numbered ones. Retries dialing for up to
    /// `timeout` so parties can start in any order.
    pub fn establish(
        party: PartyId,
        listen: &str,
        peers: &HashMap<PartyId, String>,
        timeout: Duration,
    ) -> MpcResult<Arc<TcpMesh>> {
        let listener = TcpListener::bind(listen)?;
        let mut streams: HashMap<PartyId, TcpStream> = HashMap::new();

        let dial_to: Vec<PartyId> = PartyId::ALL
            .into_iter()
            .filter(|p| p.number() > party.number())
            .collect();
        let accept_from = 3 - 1 - dial_to.len(); // remaining peers dial us

        let deadline = std::time::Instant::now() + timeout;
        for peer in &dial_to {
            let addr = peers
                .get(peer)
                .ok_or_else(|| MpcError::Net(format!("no address for {peer}")))?;
            loop {
                match TcpStream::connect(addr) {
                    Ok(mut s) => {
                        s.set_nodelay(true).ok();
                        s.write_all(&[party.number()])?;
                        s.flush()?;
                        streams.insert(*peer, s);
                        break;
                    }
                    Err(e) => {
                        if std::time::Instant::now() > deadline {
                            return Err(MpcError::Net(format!("dial {addr}: {e}")));
                        }
                        std::thread::sleep(Duration::from_millis(50));
                    }
                }
            }
        }
        for _ in 0..accept_from {
            let (mut s, _) = listener.accept()?;
            s.set_nodelay(true).ok();
            let mut who = [0u8; 1];
            s.read_exact(&mut who)?;
            let peer = PartyId::new(who[0])
                .ok_or_else(|| MpcError::Net(format!("bad hello byte {}", who[0])))?;
            streams.insert(peer, s);
        }

        let inbox = Arc::new(Inbox {
            queues: Mutex::new(HashMap::new()),
            closed: Mutex::new(false),
            cv: Condvar::new(),
        });
        let received = Arc::new(Mutex::new(0u64));
        let mut writers = HashMap::new();
        for (peer, stream) in streams {
            let reader = stream.try_clone()?;
            writers.insert(peer, Mutex::new(BufWriter::new(stream)));
            let inbox2 = Arc::clone(&inbox);
            let received2 = Arc::clone(&received);
            std::thread::Builder::new()
                .name(format!("mesh-p{}-from-{}", party.number(), peer.number()))
                .spawn(move || {
                    let mut reader = reader;
                    loop {
                        match read_frame(&mut reader) {
                            Ok(frame) => {
                                *received2.lock().unwrap() += (21 + frame.payload.len()) as u64;
                                inbox2.push(peer, frame);
                            }
                            Err(_) => {
                                inbox2.close();
                                break;
                            }
                        }
                    }
                })
                .expect("spawn mesh reader");
        }
        Ok(Arc::new(TcpMesh {
            party,
            writers,
            inbox,
            sent: Mutex::new(0),
            received,
        }))
    }

    pub fn party(&self) -> PartyId {
        self.party
    }

    /// A transport bound to one session over this mesh.
    pub fn session(self: &Arc<Self>, session: SessionId) -> MeshChannel {
        MeshChannel {
            mesh: Arc::clone(self),
            session,
        }
    }
}

pub struct MeshChannel {
    mesh: Arc<TcpMesh>,
    session: SessionId,
}

impl SessionTransport for MeshChannel {
    fn send(&mut self, to: PartyId, tag: MsgTag, payload: &[u8]) -> MpcResult<()> {
        let bytes = encode_frame(&Frame {
            tag: tag as u8,
            session: self.session,
            payload: payload.to_vec(),
        });
        *self.mesh.sent.lock().unwrap() += bytes.len() as u64;
        let mut w = self.mesh.writers[&to].lock().unwrap();
        w.write_all(&bytes)?;
        w.flush()?;
        Ok(())
    }

    fn recv(&mut self, from: PartyId, tag: MsgTag) -> MpcResult<Vec<u8>> {
        let frame = self
            .mesh
            .inbox
            .pop(self.session, from, Duration::from_secs(120))?;
        match MsgTag::from_u8(frame.tag) {
            Some(t) if t == tag => Ok(frame.payload),
            _ => Err(MpcError::Format(format!(
                "expected tag {:?}, got {}",
                tag, frame.tag
            ))),
        }
    }

    fn traffic(&self) -> (u64, u64) {
        (
            *self.mesh.sent.lock().unwrap(),
            *self.mesh.received.lock().unwrap(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_round_trip() {
        let frame = Frame {
            tag: MsgTag::OpenOwn as u8,
            session: [7; 16],
            payload: vec![1, 2, 3, 4, 5],
        };
        let bytes = encode_frame(&frame);
        assert_eq!(bytes.len(), 4 + 1 + 16 + 5);
        assert_eq!(&bytes[..4], &(22u32).to_be_bytes());
        let back = read_frame(&mut &bytes[..]).unwrap();
        assert_eq!(back.tag, frame.tag);
        assert_eq!(back.session, frame.session);
        assert_eq!(back.payload, frame.payload);
    }

    #[test]
    fn local_trio_routes_by_pair() {
        let [mut t1, mut t2, mut t3] = local_trio([1; 16]);
        let p1 = PartyId::new(1).unwrap();
        let p2 = PartyId::new(2).unwrap();
        let p3 = PartyId::new(3).unwrap();
        t1.send(p2, MsgTag::OpenOwn, b"to-two").unwrap();
        t1.send(p3, MsgTag::OpenOwn, b"to-three").unwrap();
        assert_eq!(t2.recv(p1, MsgTag::OpenOwn).unwrap(), b"to-two");
        assert_eq!(t3.recv(p1, MsgTag::OpenOwn).unwrap(), b"to-three");
        t3.send(p1, MsgTag::Reshare, b"back").unwrap();
        assert_eq!(t1.recv(p3, MsgTag::Reshare).unwrap(), b"back");
    }
}
