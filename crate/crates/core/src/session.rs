//! Protocol sessions: party identity, pairwise PRF randomness, transcript
//! hashing and communication accounting.
//!
//! One session corresponds to one analysis job. A session is
//! single-threaded per party; distinct sessions may run on distinct
//! threads with independent PRF counters.

use crate::error::{MpcError, MpcResult};
use crate::net::{MsgTag, SessionId, SessionTransport};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashMap;

/// One of the three computing parties, numbered 1 to 3.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PartyId(u8);

impl PartyId {
    pub const ALL: [PartyId; 3] = [PartyId(1), PartyId(2), PartyId(3)];

    pub fn new(n: u8) -> Option<PartyId> {
        (1..=3).contains(&n).then_some(PartyId(n))
    }

    pub fn number(self) -> u8 {
        self.0
    }

    /// Zero-based index for array access.
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }

    pub fn next(self) -> PartyId {
        PartyId(self.0 % 3 + 1)
    }

    pub fn prev(self) -> PartyId {
        PartyId((self.0 + 1) % 3 + 1)
    }
}

impl std::fmt::Debug for PartyId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "P{}", self.0)
    }
}

impl std::fmt::Display for PartyId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "P{}", self.0)
    }
}

impl Serialize for PartyId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(self.0)
    }
}

impl<'de> Deserialize<'de> for PartyId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let n = u8::deserialize(d)?;
        PartyId::new(n).ok_or_else(|| serde::de::Error::custom(format!("bad party index {n}")))
    }
}

/// Protocol hardening level.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize, Default)]
pub enum SecurityMode {
    /// Semi-honest: plain openings, no sacrifice, no product verification.
    #[serde(rename = "sh")]
    SemiHonest,
    /// Misbehavior detection: opening cross-checks, triple sacrifice,
    /// batched GF(2^128) product verification and transcript comparison.
    #[serde(rename = "mal-lite")]
    #[default]
    MalLite,
}

impl std::str::FromStr for SecurityMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sh" => Ok(SecurityMode::SemiHonest),
            "mal-lite" | "mal" => Ok(SecurityMode::MalLite),
            other => Err(format!("unknown security mode {other:?}")),
        }
    }
}

/// Which pairwise seed a stream is derived from, seen from this party.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum PairSide {
    /// Seed shared with the previous party: pair (i-1, i).
    Prev,
    /// Seed shared with the next party: pair (i, i+1).
    Next,
}

/// Independent PRF stream labels; each (pair, label) is its own keystream.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
#[repr(u8)]
pub enum StreamLabel {
    RandRing = 1,
    RandBits = 2,
    RandGf8 = 3,
    RandGf64 = 4,
    RandGf128 = 5,
    ZeroRing = 6,
    ZeroBits = 7,
    ZeroGf8 = 8,
    ZeroGf64 = 9,
    ZeroGf128 = 10,
    ConversionMask = 11,
    Coin = 12,
    TruncBits = 13,
}

/// The two pairwise seeds a party holds. Parties i and j derive identical
/// streams from seed_{i,j}; the third party cannot.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PairSeeds {
    /// Seed for the pair (i-1, i), hex-encoded 32 bytes.
    pub prev: [u8; 32],
    /// Seed for the pair (i, i+1).
    pub next: [u8; 32],
}

impl PairSeeds {
    /// Dealer helper: produces the seed triple (s12, s23, s31) and the view
    /// of each party.
    pub fn deal<R: rand::Rng + ?Sized>(rng: &mut R) -> [PairSeeds; 3] {
        let mut s12 = [0u8; 32];
        let mut s23 = [0u8; 32];
        let mut s31 = [0u8; 32];
        rng.fill(&mut s12);
        rng.fill(&mut s23);
        rng.fill(&mut s31);
        [
            PairSeeds { prev: s31, next: s12 }, // party 1: pairs (3,1) and (1,2)
            PairSeeds { prev: s12, next: s23 }, // party 2
            PairSeeds { prev: s23, next: s31 }, // party 3
        ]
    }
}

/// Per-session PRF state: lazily instantiated extendable counter-mode
/// keystreams per (pair, label).
pub struct PrfSetup {
    seeds: PairSeeds,
    session: SessionId,
    streams: HashMap<(PairSide, StreamLabel), ChaCha12Rng>,
}

impl PrfSetup {
    pub fn new(seeds: PairSeeds, session: SessionId) -> PrfSetup {
        PrfSetup {
            seeds,
            session,
            streams: HashMap::new(),
        }
    }

    pub fn stream(&mut self, side: PairSide, label: StreamLabel) -> &mut ChaCha12Rng {
        let seeds = &self.seeds;
        let session = &self.session;
        self.streams.entry((side, label)).or_insert_with(|| {
            let base = match side {
                PairSide::Prev => &seeds.prev,
                PairSide::Next => &seeds.next,
            };
            let mut hasher = Sha256::new();
            hasher.update(base);
            hasher.update(session);
            hasher.update([label as u8]);
            let digest: [u8; 32] = hasher.finalize().into();
            ChaCha12Rng::from_seed(digest)
        })
    }
}

/// Communication and consumption accounting, for tests and benchmarks.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Counters {
    pub messages_sent: u64,
    pub messages_received: u64,
    pub elements_opened: u64,
    /// Column-level AND gates evaluated inside boolean circuits.
    pub and_gates: u64,
    pub triples_consumed: u64,
    pub triples_generated: u64,
}

/// Options beyond the defaults; `zero_conversion_masks` exists for tests
/// that pin down the share layout of the boolean-to-arithmetic conversion.
#[derive(Clone, Debug, Default)]
pub struct SessionOptions {
    #[doc(hidden)]
    pub zero_conversion_masks: bool,
}

/// One party's view of a running protocol session.
pub struct Session {
    party: PartyId,
    mode: SecurityMode,
    transport: Box<dyn SessionTransport>,
    prf: PrfSetup,
    transcript: Sha256,
    pub(crate) counters: Counters,
    pub(crate) pools: crate::rss::TriplePools,
    pub(crate) gf128_queue: Vec<crate::rss::ProductWitness>,
    pub(crate) options: SessionOptions,
}

impl Session {
    pub fn new(
        party: PartyId,
        mode: SecurityMode,
        seeds: PairSeeds,
        session_id: SessionId,
        transport: Box<dyn SessionTransport>,
    ) -> Session {
        Session {
            party,
            mode,
            transport,
            prf: PrfSetup::new(seeds, session_id),
            transcript: Sha256::new(),
            counters: Counters::default(),
            pools: Default::default(),
            gf128_queue: Vec::new(),
            options: SessionOptions::default(),
        }
    }

    pub fn with_options(mut self, options: SessionOptions) -> Session {
        self.options = options;
        self
    }

    pub fn party(&self) -> PartyId {
        self.party
    }

    pub fn mode(&self) -> SecurityMode {
        self.mode
    }

    pub fn malicious_checks(&self) -> bool {
        self.mode == SecurityMode::MalLite
    }

    pub fn counters(&self) -> Counters {
        self.counters
    }

    pub fn prf(&mut self) -> &mut PrfSetup {
        &mut self.prf
    }

    pub(crate) fn send(&mut self, to: PartyId, tag: MsgTag, payload: &[u8]) -> MpcResult<()> {
        self.counters.messages_sent += 1;
        self.transport.send(to, tag, payload)
    }

    pub(crate) fn recv(&mut self, from: PartyId, tag: MsgTag) -> MpcResult<Vec<u8>> {
        let payload = self.transport.recv(from, tag)?;
        self.counters.messages_received += 1;
        Ok(payload)
    }

    pub(crate) fn note_opened(&mut self, bytes: &[u8]) {
        self.transcript.update(bytes);
    }

    /// Ends the session. In detection mode the parties exchange and compare
    /// transcript hashes of all opened values, and any still-queued GF(2^128)
    /// products are verified first.
    pub fn finish(mut self) -> MpcResult<Counters> {
        if self.malicious_checks() {
            crate::rss::verify_queued_gf128_products(&mut self)?;
            let digest: [u8; 32] = self.transcript.clone().finalize().into();
            self.send(self.party.next(), MsgTag::Transcript, &digest)?;
            self.send(self.party.prev(), MsgTag::Transcript, &digest)?;
            let from_prev = self.recv(self.party.prev(), MsgTag::Transcript)?;
            let from_next = self.recv(self.party.next(), MsgTag::Transcript)?;
            if from_prev != digest || from_next != digest {
                return Err(MpcError::TranscriptMismatch);
            }
        }
        Ok(self.counters)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn party_arithmetic() {
        let [p1, p2, p3] = PartyId::ALL;
        assert_eq!(p1.next(), p2);
        assert_eq!(p2.next(), p3);
        assert_eq!(p3.next(), p1);
        assert_eq!(p1.prev(), p3);
        assert_eq!(p2.prev(), p1);
        assert_eq!(p3.prev(), p2);
        assert!(PartyId::new(0).is_none());
        assert!(PartyId::new(4).is_none());
    }

    #[test]
    fn pairwise_streams_agree() {
        let mut rng = rand::thread_rng();
        let views = PairSeeds::deal(&mut rng);
        let sid = [9u8; 16];
        let mut prf1 = PrfSetup::new(views[0].clone(), sid);
        let mut prf2 = PrfSetup::new(views[1].clone(), sid);
        let mut prf3 = PrfSetup::new(views[2].clone(), sid);
        // pair (1,2): party 1's Next == party 2's Prev
        use rand::Rng;
        let a: u64 = prf1.stream(PairSide::Next, StreamLabel::RandRing).gen();
        let b: u64 = prf2.stream(PairSide::Prev, StreamLabel::RandRing).gen();
        assert_eq!(a, b);
        // the third party's streams differ
        let c: u64 = prf3.stream(PairSide::Prev, StreamLabel::RandRing).gen();
        let d: u64 = prf3.stream(PairSide::Next, StreamLabel::RandRing).gen();
        assert_ne!(a, c);
        assert_ne!(a, d);
        // different labels give independent streams
        let e: u64 = prf1.stream(PairSide::Next, StreamLabel::Coin).gen();
        assert_ne!(a, e);
    }
}
