//! Runs a protocol across three in-process parties, one thread each.
//!
//! Production deployments run one party per host over [`crate::net::TcpMesh`];
//! this harness wires the same `Session` machinery over channel transports
//! and is used by tests, benchmarks and the single-process demo stack.

use crate::error::MpcResult;
use crate::net::{local_trio, MsgTag, SessionId, SessionTransport};
use crate::session::{PairSeeds, PartyId, SecurityMode, Session, SessionOptions};
use rand::{rngs::StdRng, SeedableRng};

/// Deterministic pairwise seeds for reproducible runs.
pub fn seeds_from_tag(tag: u64) -> [PairSeeds; 3] {
    let mut rng = StdRng::seed_from_u64(tag);
    PairSeeds::deal(&mut rng)
}

/// Full-control variant: session options and a per-party transport wrapper
/// (for fault injection).
pub fn try_run_wrapped<R, F, W>(
    mode: SecurityMode,
    options: SessionOptions,
    seed_tag: u64,
    wrap: W,
    f: F,
) -> [MpcResult<R>; 3]
where
    R: Send,
    F: Fn(&mut Session) -> MpcResult<R> + Send + Sync,
    W: Fn(PartyId, Box<dyn SessionTransport>) -> Box<dyn SessionTransport> + Send + Sync,
{
    let session_id: SessionId = {
        let mut id = [0u8; 16];
        id[..8].copy_from_slice(&seed_tag.to_le_bytes());
        id
    };
    let seeds = seeds_from_tag(seed_tag);
    let transports = local_trio(session_id);
    let mut slots: [Option<MpcResult<R>>; 3] = [None, None, None];
    std::thread::scope(|scope| {
        let handles: Vec<_> = transports
            .into_iter()
            .zip(seeds)
            .enumerate()
            .map(|(idx, (transport, seeds))| {
                let party = PartyId::new(idx as u8 + 1).unwrap();
                let f = &f;
                let wrap = &wrap;
                let options = options.clone();
                scope.spawn(move || {
                    let transport = wrap(party, Box::new(transport));
                    let mut session = Session::new(party, mode, seeds, session_id, transport)
                        .with_options(options);
                    match f(&mut session) {
                        Ok(value) => session.finish().map(|_| value),
                        Err(e) => Err(e),
                    }
                })
            })
            .collect();
        for (idx, handle) in handles.into_iter().enumerate() {
            slots[idx] = Some(handle.join().expect("party thread panicked"));
        }
    });
    slots.map(Option::unwrap)
}

/// Runs `f` on all three parties; any party error is returned as is.
pub fn try_run<R, F>(mode: SecurityMode, seed_tag: u64, f: F) -> [MpcResult<R>; 3]
where
    R: Send,
    F: Fn(&mut Session) -> MpcResult<R> + Send + Sync,
{
    try_run_wrapped(mode, SessionOptions::default(), seed_tag, |_, t| t, f)
}

/// Runs `f` and unwraps all three results (test convenience).
pub fn run<R, F>(mode: SecurityMode, seed_tag: u64, f: F) -> [R; 3]
where
    R: Send,
    F: Fn(&mut Session) -> MpcResult<R> + Send + Sync,
{
    try_run(mode, seed_tag, f).map(|r| r.expect("party failed"))
}

/// Transport wrapper that lets a test mutate outgoing payloads.
pub struct Tamper<H> {
    inner: Box<dyn SessionTransport>,
    hook: H,
}

impl<H> Tamper<H>
where
    H: FnMut(PartyId, MsgTag, &mut Vec<u8>) + Send,
{
    pub fn new(inner: Box<dyn SessionTransport>, hook: H) -> Self {
        Tamper { inner, hook }
    }
}

impl<H> SessionTransport for Tamper<H>
where
    H: FnMut(PartyId, MsgTag, &mut Vec<u8>) + Send,
{
    fn send(&mut self, to: PartyId, tag: MsgTag, payload: &[u8]) -> MpcResult<()> {
        let mut copy = payload.to_vec();
        (self.hook)(to, tag, &mut copy);
        self.inner.send(to, tag, &copy)
    }

    fn recv(&mut self, from: PartyId, tag: MsgTag) -> MpcResult<Vec<u8>> {
        self.inner.recv(from, tag)
    }

    fn traffic(&self) -> (u64, u64) {
        self.inner.traffic()
    }
}
