//! 2-out-of-3 replicated secret sharing over the share algebras.
//!
//! A secret `x` splits into components `x_1, x_2, x_3` with
//! `x = x_1 + x_2 + x_3` (XOR for the binary algebras); party `i` holds
//! the pair `(x_i, x_{i+1 mod 3})`, so any two parties reconstruct.
//!
//! Multiplication uses Beaver triples. Semi-honest triples come from the
//! local cross-term re-sharing trick re-randomized with a PRF zero
//! sharing; detection mode upgrades them by pairwise sacrifice. Openings
//! in detection mode deliver each missing component twice (from both
//! holders) and abort on mismatch, and GF(2^128) products feeding GHASH
//! are verified in batches through the tower decomposition.

use crate::algebra::{BitWord, Gf128, Gf64, Gf8, Ring, RingEl64, TowerCtx};
use crate::error::{MpcError, MpcResult};
use crate::net::MsgTag;
use crate::session::{PairSide, PartyId, Session, StreamLabel};
use rand::Rng;

/// One party's share: its own component and the next party's.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default)]
pub struct RssShare<T: Ring> {
    pub own: T,
    pub next: T,
}

impl<T: Ring> RssShare<T> {
    pub const ZERO: RssShare<T> = RssShare { own: T::ZERO, next: T::ZERO };

    pub fn new(own: T, next: T) -> Self {
        RssShare { own, next }
    }

    pub fn add(self, other: Self) -> Self {
        RssShare::new(self.own.add(other.own), self.next.add(other.next))
    }

    pub fn sub(self, other: Self) -> Self {
        RssShare::new(self.own.sub(other.own), self.next.sub(other.next))
    }

    pub fn neg(self) -> Self {
        RssShare::new(self.own.neg(), self.next.neg())
    }

    /// Multiplication by a public constant is local.
    pub fn mul_public(self, k: T) -> Self {
        RssShare::new(self.own.mul(k), self.next.mul(k))
    }
}

/// Adds a public constant to a sharing by adjusting component 1, which is
/// held by party 1 (own) and party 3 (next).
pub fn add_public<T: Ring>(party: PartyId, share: RssShare<T>, k: T) -> RssShare<T> {
    match party.number() {
        1 => RssShare::new(share.own.add(k), share.next),
        3 => RssShare::new(share.own, share.next.add(k)),
        _ => share,
    }
}

/// Dealer-side sharing: components `(c_1, c_2)` drawn at random,
/// `c_3 = x - c_1 - c_2`. Returns the three party shares in order.
pub fn share<T: Ring, R: Rng + ?Sized>(secret: T, rng: &mut R) -> [RssShare<T>; 3] {
    let c1 = T::random(rng);
    let c2 = T::random(rng);
    share_with_components(secret, c1, c2)
}

/// Sharing with explicit first two components (tests pin layouts with it).
pub fn share_with_components<T: Ring>(secret: T, c1: T, c2: T) -> [RssShare<T>; 3] {
    let c3 = secret.sub(c1).sub(c2);
    [
        RssShare::new(c1, c2),
        RssShare::new(c2, c3),
        RssShare::new(c3, c1),
    ]
}

/// Reconstructs from all three shares (test/dealer helper).
pub fn reconstruct<T: Ring>(shares: &[RssShare<T>; 3]) -> T {
    shares[0].own.add(shares[1].own).add(shares[2].own)
}

/// Reconstructs from any two distinct parties' shares.
pub fn reconstruct_pair<T: Ring>(
    party_a: PartyId,
    a: RssShare<T>,
    party_b: PartyId,
    b: RssShare<T>,
) -> T {
    assert_ne!(party_a, party_b);
    // party a holds (x_a, x_{a+1}); the missing component is the one b owns
    // that a does not hold.
    if party_b == party_a.next() {
        a.own.add(a.next).add(b.next)
    } else {
        a.own.add(a.next).add(b.own)
    }
}

/// Checks the replication invariant across a full share triple.
pub fn replication_consistent<T: Ring>(shares: &[RssShare<T>; 3]) -> bool {
    (0..3).all(|i| shares[i].next == shares[(i + 1) % 3].own)
}

// ---------------------------------------------------------------------------
// PRF-based correlated randomness

/// A fresh random sharing with zero communication: component `x_j` comes
/// from the stream of pair `(j-1, j)`.
pub fn rand_share<T: Ring>(s: &mut Session, label: StreamLabel) -> RssShare<T> {
    let own = T::random(s.prf().stream(PairSide::Prev, label));
    let next = T::random(s.prf().stream(PairSide::Next, label));
    RssShare::new(own, next)
}

/// An additive share of zero: `α_i = F_{(i,i+1)} - F_{(i-1,i)}`.
pub fn zero_add_share<T: Ring>(s: &mut Session, label: StreamLabel) -> T {
    let from_next = T::random(s.prf().stream(PairSide::Next, label));
    let from_prev = T::random(s.prf().stream(PairSide::Prev, label));
    from_next.sub(from_prev)
}

/// A public coin no single party could predict: a PRF sharing, opened.
pub fn coin<T: Ring>(s: &mut Session) -> MpcResult<T> {
    let share = rand_share::<T>(s, StreamLabel::Coin);
    Ok(open_vec(s, &[share])?[0])
}

// ---------------------------------------------------------------------------
// Openings

fn encode_els<T: Ring>(els: impl Iterator<Item = T>) -> Vec<u8> {
    let mut out = Vec::new();
    for el in els {
        el.append_bytes(&mut out);
    }
    out
}

fn decode_els<T: Ring>(bytes: &[u8], expect: usize) -> MpcResult<Vec<T>> {
    if bytes.len() != expect * T::BYTES {
        return Err(MpcError::Format(format!(
            "expected {} elements of {} bytes, got {} bytes",
            expect,
            T::BYTES,
            bytes.len()
        )));
    }
    Ok(bytes.chunks_exact(T::BYTES).map(T::from_bytes).collect())
}

/// Opens shares to every party. Each party learns the missing component
/// from the previous party; in detection mode the next party sends a
/// redundant copy which must agree.
pub fn open_vec<T: Ring>(s: &mut Session, shares: &[RssShare<T>]) -> MpcResult<Vec<T>> {
    let me = s.party();
    let own_bytes = encode_els(shares.iter().map(|sh| sh.own));
    s.send(me.next(), MsgTag::OpenOwn, &own_bytes)?;
    if s.malicious_checks() {
        let next_bytes = encode_els(shares.iter().map(|sh| sh.next));
        s.send(me.prev(), MsgTag::OpenNext, &next_bytes)?;
    }
    let missing_bytes = s.recv(me.prev(), MsgTag::OpenOwn)?;
    let missing: Vec<T> = decode_els(&missing_bytes, shares.len())?;
    if s.malicious_checks() {
        let redundant = s.recv(me.next(), MsgTag::OpenNext)?;
        if redundant != missing_bytes {
            return Err(MpcError::OpenInconsistent(me));
        }
    }
    let values: Vec<T> = shares
        .iter()
        .zip(&missing)
        .map(|(sh, m)| sh.own.add(sh.next).add(*m))
        .collect();
    let opened = encode_els(values.iter().copied());
    s.note_opened(&opened);
    s.counters.elements_opened += values.len() as u64;
    Ok(values)
}

/// Reveals shares only to `recipients`. For recipient `j`, party `j-1`
/// sends its own components; in detection mode party `j+1` additionally
/// sends its redundant copy. Non-recipients return `None`.
pub fn open_to<T: Ring>(
    s: &mut Session,
    recipients: &[PartyId],
    shares: &[RssShare<T>],
) -> MpcResult<Option<Vec<T>>> {
    let me = s.party();
    // Send phase: deterministic order (next first, then prev).
    if recipients.contains(&me.next()) {
        let own_bytes = encode_els(shares.iter().map(|sh| sh.own));
        s.send(me.next(), MsgTag::OpenOwn, &own_bytes)?;
    }
    if s.malicious_checks() && recipients.contains(&me.prev()) {
        let next_bytes = encode_els(shares.iter().map(|sh| sh.next));
        s.send(me.prev(), MsgTag::OpenNext, &next_bytes)?;
    }
    if !recipients.contains(&me) {
        return Ok(None);
    }
    let missing_bytes = s.recv(me.prev(), MsgTag::OpenOwn)?;
    let missing: Vec<T> = decode_els(&missing_bytes, shares.len())?;
    if s.malicious_checks() {
        let redundant = s.recv(me.next(), MsgTag::OpenNext)?;
        if redundant != missing_bytes {
            return Err(MpcError::OpenInconsistent(me));
        }
    }
    s.counters.elements_opened += shares.len() as u64;
    Ok(Some(
        shares
            .iter()
            .zip(&missing)
            .map(|(sh, m)| sh.own.add(sh.next).add(*m))
            .collect(),
    ))
}

// ---------------------------------------------------------------------------
// Beaver triples

/// A preprocessed multiplication triple. Deliberately neither `Clone` nor
/// `Copy`: consuming a triple moves it, so reuse is rejected at compile
/// time.
#[derive(Debug)]
pub struct BeaverTriple<T: Ring> {
    pub a: RssShare<T>,
    pub b: RssShare<T>,
    pub c: RssShare<T>,
}

pub struct TriplePool<T: Ring> {
    ready: Vec<BeaverTriple<T>>,
}

impl<T: Ring> Default for TriplePool<T> {
    fn default() -> Self {
        TriplePool { ready: Vec::new() }
    }
}

#[derive(Default)]
pub struct TriplePools {
    pub(crate) ring: TriplePool<RingEl64>,
    pub(crate) bits: TriplePool<BitWord>,
    pub(crate) gf8: TriplePool<Gf8>,
    pub(crate) gf64: TriplePool<Gf64>,
    pub(crate) gf128: TriplePool<Gf128>,
}

/// Maps an algebra to its triple pool and PRF stream labels.
pub trait PoolKey: Ring {
    const RAND_LABEL: StreamLabel;
    const ZERO_LABEL: StreamLabel;
    fn pool(pools: &mut TriplePools) -> &mut TriplePool<Self>;
}

macro_rules! pool_key {
    ($ty:ty, $field:ident, $rand:ident, $zero:ident) => {
        impl PoolKey for $ty {
            const RAND_LABEL: StreamLabel = StreamLabel::$rand;
            const ZERO_LABEL: StreamLabel = StreamLabel::$zero;
            fn pool(pools: &mut TriplePools) -> &mut TriplePool<Self> {
                &mut pools.$field
            }
        }
    };
}

pool_key!(RingEl64, ring, RandRing, ZeroRing);
pool_key!(BitWord, bits, RandBits, ZeroBits);
pool_key!(Gf8, gf8, RandGf8, ZeroGf8);
pool_key!(Gf64, gf64, RandGf64, ZeroGf64);
pool_key!(Gf128, gf128, RandGf128, ZeroGf128);

/// Reshares an additive sharing (one component per party) into replicated
/// form: each party sends its component to the previous party.
fn reshare_additive<T: Ring>(s: &mut Session, components: &[T]) -> MpcResult<Vec<RssShare<T>>> {
    let me = s.party();
    let bytes = encode_els(components.iter().copied());
    s.send(me.prev(), MsgTag::Reshare, &bytes)?;
    let next_bytes = s.recv(me.next(), MsgTag::Reshare)?;
    let next: Vec<T> = decode_els(&next_bytes, components.len())?;
    Ok(components
        .iter()
        .zip(next)
        .map(|(&own, next)| RssShare::new(own, next))
        .collect())
}

/// Generates `count` multiplication triples.
///
/// Random `a`, `b` come from PRF sharings; `c` is the locally computed
/// cross-term sum, re-randomized with a PRF zero sharing and reshared. In
/// detection mode triples are generated in pairs and the auxiliary triple
/// is sacrificed to check the survivor.
pub fn triple_gen<T: PoolKey>(s: &mut Session, count: usize) -> MpcResult<Vec<BeaverTriple<T>>> {
    if count == 0 {
        return Ok(Vec::new());
    }
    let raw_count = if s.malicious_checks() { count * 2 } else { count };
    let mut triples = Vec::with_capacity(raw_count);
    let mut cross = Vec::with_capacity(raw_count);
    let mut ab = Vec::with_capacity(raw_count);
    for _ in 0..raw_count {
        let a = rand_share::<T>(s, T::RAND_LABEL);
        let b = rand_share::<T>(s, T::RAND_LABEL);
        // x_i*y_i + x_i*y_{i+1} + x_{i+1}*y_i, re-randomized
        let local = a
            .own
            .mul(b.own)
            .add(a.own.mul(b.next))
            .add(a.next.mul(b.own));
        cross.push(local.add(zero_add_share::<T>(s, T::ZERO_LABEL)));
        ab.push((a, b));
    }
    let c_shares = reshare_additive(s, &cross)?;
    for ((a, b), c) in ab.into_iter().zip(c_shares) {
        triples.push(BeaverTriple { a, b, c });
    }
    let surviving = if s.malicious_checks() {
        sacrifice_pairs(s, triples)?
    } else {
        triples
    };
    s.counters.triples_generated += surviving.len() as u64;
    Ok(surviving)
}

/// Pairwise sacrifice: consumes the auxiliary triple of each pair to check
/// the survivor against a random public coin.
fn sacrifice_pairs<T: PoolKey>(
    s: &mut Session,
    mut triples: Vec<BeaverTriple<T>>,
) -> MpcResult<Vec<BeaverTriple<T>>> {
    let n = triples.len() / 2;
    let r = coin::<T>(s)?;
    let aux: Vec<BeaverTriple<T>> = triples.split_off(n);
    // open rho = r*a - f and sigma = b - g in one round
    let mut to_open = Vec::with_capacity(2 * n);
    for (t, x) in triples.iter().zip(&aux) {
        to_open.push(t.a.mul_public(r).sub(x.a));
        to_open.push(t.b.sub(x.b));
    }
    let opened = open_vec(s, &to_open)?;
    let mut taus = Vec::with_capacity(n);
    for (i, (t, x)) in triples.iter().zip(&aux).enumerate() {
        let rho = opened[2 * i];
        let sigma = opened[2 * i + 1];
        // tau = r*c - h - sigma*f - rho*g - rho*sigma
        let tau = t
            .c
            .mul_public(r)
            .sub(x.c)
            .sub(x.a.mul_public(sigma))
            .sub(x.b.mul_public(rho));
        taus.push(add_public(s.party(), tau, rho.mul(sigma).neg()));
    }
    let taus = open_vec(s, &taus)?;
    if taus.iter().any(|t| !t.is_zero()) {
        return Err(MpcError::PreprocessingCorrupt);
    }
    Ok(triples)
}

impl Session {
    /// Takes `n` triples from the pool, generating more if needed.
    pub fn take_triples<T: PoolKey>(&mut self, n: usize) -> MpcResult<Vec<BeaverTriple<T>>> {
        self.ensure_triples::<T>(n)?;
        let pool = T::pool(&mut self.pools);
        let at = pool.ready.len() - n;
        let taken = pool.ready.split_off(at);
        self.counters.triples_consumed += n as u64;
        Ok(taken)
    }

    /// Pre-generates triples so a following protocol phase consumes them
    /// without interleaving preprocessing rounds.
    pub fn ensure_triples<T: PoolKey>(&mut self, n: usize) -> MpcResult<()> {
        let have = T::pool(&mut self.pools).ready.len();
        if have < n {
            let fresh = triple_gen::<T>(self, n - have)?;
            T::pool(&mut self.pools).ready.extend(fresh);
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Multiplication

/// Beaver multiplication of a single pair; consumes the triple.
pub fn mul_beaver<T: Ring>(
    s: &mut Session,
    x: RssShare<T>,
    y: RssShare<T>,
    triple: BeaverTriple<T>,
) -> MpcResult<RssShare<T>> {
    Ok(mul_with_triples(s, &[x], &[y], vec![triple])?.pop().unwrap())
}

/// Element-wise product of two share vectors with explicit triples; all
/// `d`/`e` values are opened in one round.
pub fn mul_with_triples<T: Ring>(
    s: &mut Session,
    xs: &[RssShare<T>],
    ys: &[RssShare<T>],
    triples: Vec<BeaverTriple<T>>,
) -> MpcResult<Vec<RssShare<T>>> {
    assert_eq!(xs.len(), ys.len());
    assert_eq!(xs.len(), triples.len());
    let mut to_open = Vec::with_capacity(2 * xs.len());
    for ((x, y), t) in xs.iter().zip(ys).zip(&triples) {
        to_open.push(x.sub(t.a));
        to_open.push(y.sub(t.b));
    }
    let opened = open_vec(s, &to_open)?;
    let party = s.party();
    let mut out = Vec::with_capacity(xs.len());
    for (i, t) in triples.into_iter().enumerate() {
        let d = opened[2 * i];
        let e = opened[2 * i + 1];
        // z = d*[b] + e*[a] + [c] + d*e
        let z = t
            .b
            .mul_public(d)
            .add(t.a.mul_public(e))
            .add(t.c);
        out.push(add_public(party, z, d.mul(e)));
    }
    Ok(out)
}

/// Element-wise product drawing triples from the session pool.
pub fn mul_vec<T: PoolKey>(
    s: &mut Session,
    xs: &[RssShare<T>],
    ys: &[RssShare<T>],
) -> MpcResult<Vec<RssShare<T>>> {
    let triples = s.take_triples::<T>(xs.len())?;
    mul_with_triples(s, xs, ys, triples)
}

// ---------------------------------------------------------------------------
// GF(2^128) product verification

/// A multiplication `u·v = w` awaiting batched verification.
#[derive(Clone)]
pub struct ProductWitness {
    pub u: RssShare<Gf128>,
    pub v: RssShare<Gf128>,
    pub w: RssShare<Gf128>,
}

/// Queues a GHASH product for the next verification batch (detection mode).
pub fn queue_gf128_product(s: &mut Session, witness: ProductWitness) {
    s.gf128_queue.push(witness);
}

/// Verifies and drains all queued products.
pub fn verify_queued_gf128_products(s: &mut Session) -> MpcResult<()> {
    let queue = std::mem::take(&mut s.gf128_queue);
    verify_gf128_products(s, &queue)
}

fn phi_share(ctx: &TowerCtx, sh: RssShare<Gf128>) -> (RssShare<Gf64>, RssShare<Gf64>) {
    // XOR sharing + GF(2)-linear map: apply phi to each component locally.
    let own = ctx.phi(sh.own);
    let next = ctx.phi(sh.next);
    (
        RssShare::new(own.hi, next.hi),
        RssShare::new(own.lo, next.lo),
    )
}

/// Checks a batch of claimed products `u·v = w` over GF(2^128).
///
/// Each element is mapped share-wise through `φ` (local, GF(2)-linear)
/// into tower components `φ(u) = aX+b`, `φ(v) = cX+d`, `φ(w) = eX+f`, and
/// the two tower constraints
/// `a·d + b·c + β·a·c = e` and `b·d + γ·a·c = f` (β = 1) are folded into
/// one random linear combination over GF(2^64) whose value must open to
/// zero.
pub fn verify_gf128_products(s: &mut Session, batch: &[ProductWitness]) -> MpcResult<()> {
    if batch.is_empty() {
        return Ok(());
    }
    let ctx = TowerCtx::get();
    let theta = coin::<Gf64>(s)?;

    // Gather the four cross products per witness with coin weights folded
    // into the left operands.
    let mut lhs = Vec::with_capacity(batch.len() * 4);
    let mut rhs = Vec::with_capacity(batch.len() * 4);
    let mut linear = RssShare::<Gf64>::ZERO;
    let mut w1 = theta;
    for item in batch {
        let (a, b) = phi_share(ctx, item.u);
        let (c, d) = phi_share(ctx, item.v);
        let (e, f) = phi_share(ctx, item.w);
        let w2 = w1.mul(theta);
        // constraint 1, weight w1: a*d + b*c + a*c + e = 0
        // constraint 2, weight w2: b*d + gamma*a*c + f = 0
        lhs.push(a.mul_public(w1));
        rhs.push(d);
        lhs.push(b.mul_public(w1));
        rhs.push(c);
        lhs.push(a.mul_public(w1.add(Gf64::GAMMA.mul(w2))));
        rhs.push(c);
        lhs.push(b.mul_public(w2));
        rhs.push(d);
        linear = linear.add(e.mul_public(w1)).add(f.mul_public(w2));
        w1 = w2.mul(theta);
    }
    let products = mul_vec(s, &lhs, &rhs)?;
    let mut acc = linear;
    for p in products {
        acc = acc.add(p);
    }
    let value = open_vec(s, &[acc])?[0];
    if !value.is_zero() {
        return Err(MpcError::MulVerifyFailed);
    }
    Ok(())
}
