//! Boolean-circuit machinery shared by conversions and AES: bit-sliced
//! GF(2) shares, the ripple-carry adder, and the arithmetic/boolean share
//! conversions.
//!
//! Shares are bit-sliced: a `BitVecShare` holds `lanes` parallel values
//! of `width` bits each; column `b` packs bit `b` of every lane, 64 lanes
//! per word. AND gates consume packed bit triples from the preprocessing
//! pool, so one column-level AND costs one opening round regardless of
//! the lane count.

use crate::algebra::{BitWord, RingEl64};
use crate::error::{MpcError, MpcResult};
use crate::rss::{self, RssShare};
use crate::session::{PairSide, PartyId, Session, StreamLabel};
use rand::Rng;

fn words_for(lanes: usize) -> usize {
    lanes.div_ceil(64)
}

/// One bit-column over all lanes: a packed XOR sharing.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct BitRow {
    pub own: Vec<u64>,
    pub next: Vec<u64>,
}

impl BitRow {
    fn zero(words: usize) -> BitRow {
        BitRow {
            own: vec![0; words],
            next: vec![0; words],
        }
    }

    fn xor(&self, other: &BitRow) -> BitRow {
        BitRow {
            own: self.own.iter().zip(&other.own).map(|(a, b)| a ^ b).collect(),
            next: self
                .next
                .iter()
                .zip(&other.next)
                .map(|(a, b)| a ^ b)
                .collect(),
        }
    }

    fn to_shares(&self) -> Vec<RssShare<BitWord>> {
        self.own
            .iter()
            .zip(&self.next)
            .map(|(&o, &n)| RssShare::new(BitWord(o), BitWord(n)))
            .collect()
    }

    fn from_shares(shares: &[RssShare<BitWord>]) -> BitRow {
        BitRow {
            own: shares.iter().map(|s| s.own.0).collect(),
            next: shares.iter().map(|s| s.next.0).collect(),
        }
    }
}

/// `lanes` parallel values of `width` bits each, as replicated GF(2)
/// shares. Reconstructed bits, little-endian, encode an integer `< 2^w`.
#[derive(Clone, Debug)]
pub struct BitVecShare {
    pub lanes: usize,
    cols: Vec<BitRow>,
}

impl BitVecShare {
    pub fn width(&self) -> usize {
        self.cols.len()
    }

    pub fn col(&self, bit: usize) -> &BitRow {
        &self.cols[bit]
    }

    pub fn from_cols(lanes: usize, cols: Vec<BitRow>) -> BitVecShare {
        BitVecShare { lanes, cols }
    }

    /// Builds from per-lane packed share values (own, next), little-endian
    /// bit order.
    pub fn from_value_shares(width: usize, values: &[(u64, u64)]) -> BitVecShare {
        let lanes = values.len();
        let words = words_for(lanes);
        let mut cols = vec![BitRow::zero(words); width];
        for (lane, &(own, next)) in values.iter().enumerate() {
            let (w, b) = (lane / 64, lane % 64);
            for (bit, col) in cols.iter_mut().enumerate() {
                col.own[w] |= (own >> bit & 1) << b;
                col.next[w] |= (next >> bit & 1) << b;
            }
        }
        BitVecShare { lanes, cols }
    }

    /// Per-lane packed share values (own, next).
    pub fn to_value_shares(&self) -> Vec<(u64, u64)> {
        let mut out = vec![(0u64, 0u64); self.lanes];
        for (bit, col) in self.cols.iter().enumerate() {
            for (lane, v) in out.iter_mut().enumerate() {
                let (w, b) = (lane / 64, lane % 64);
                v.0 |= (col.own[w] >> b & 1) << bit;
                v.1 |= (col.next[w] >> b & 1) << bit;
            }
        }
        out
    }

    /// Extends with trivially-shared zero columns up to `width`.
    pub fn zero_extend(&self, width: usize) -> BitVecShare {
        assert!(width >= self.width());
        let words = words_for(self.lanes);
        let mut cols = self.cols.clone();
        cols.resize(width, BitRow::zero(words));
        BitVecShare {
            lanes: self.lanes,
            cols,
        }
    }

    /// Keeps columns `[from, to)` (a public right-shift by `from` bits).
    pub fn slice_bits(&self, from: usize, to: usize) -> BitVecShare {
        BitVecShare {
            lanes: self.lanes,
            cols: self.cols[from..to].to_vec(),
        }
    }

    /// Dealer-side sharing of plain values (tests and share tooling).
    pub fn share_values<R: Rng + ?Sized>(
        width: usize,
        values: &[u64],
        rng: &mut R,
    ) -> [BitVecShare; 3] {
        let mut per_party: [Vec<(u64, u64)>; 3] = Default::default();
        for &v in values {
            let shares = rss::share(BitWord(v), rng);
            for (p, sh) in shares.iter().enumerate() {
                per_party[p].push((sh.own.0, sh.next.0));
            }
        }
        per_party.map(|vals| BitVecShare::from_value_shares(width, &vals))
    }

    /// Reconstructs plain lane values from the three parties' shares.
    pub fn reconstruct(shares: &[BitVecShare; 3]) -> Vec<u64> {
        let vals: Vec<Vec<(u64, u64)>> = shares.iter().map(|s| s.to_value_shares()).collect();
        let width = shares[0].width();
        let mask = if width == 64 { u64::MAX } else { (1 << width) - 1 };
        (0..shares[0].lanes)
            .map(|l| (vals[0][l].0 ^ vals[1][l].0 ^ vals[2][l].0) & mask)
            .collect()
    }
}

fn and_rows(s: &mut Session, x: &BitRow, y: &BitRow) -> MpcResult<BitRow> {
    let products = rss::mul_vec::<BitWord>(s, &x.to_shares(), &y.to_shares())?;
    s.counters.and_gates += 1;
    Ok(BitRow::from_shares(&products))
}

/// Ripple-carry addition of two equal-width bit-shared vectors, mod `2^w`.
///
/// Carry recurrence `c_i = ((x_i ^ c_{i-1}) & (y_i ^ c_{i-1})) ^ c_{i-1}`
/// with `c_0 = 0`; exactly `w - 1` column ANDs (the final carry is
/// dropped).
pub fn rca(s: &mut Session, x: &BitVecShare, y: &BitVecShare) -> MpcResult<BitVecShare> {
    if x.width() != y.width() || x.lanes != y.lanes {
        return Err(MpcError::Format(format!(
            "rca operand mismatch: {}x{} vs {}x{}",
            x.lanes,
            x.width(),
            y.lanes,
            y.width()
        )));
    }
    let width = x.width();
    let words = words_for(x.lanes);
    let mut carry = BitRow::zero(words);
    let mut cols = Vec::with_capacity(width);
    for i in 0..width {
        cols.push(x.col(i).xor(y.col(i)).xor(&carry));
        if i + 1 < width {
            let t1 = x.col(i).xor(&carry);
            let t2 = y.col(i).xor(&carry);
            let and = and_rows(s, &t1, &t2)?;
            carry = and.xor(&carry);
        }
    }
    Ok(BitVecShare::from_cols(x.lanes, cols))
}

/// Arithmetic-to-boolean conversion: the arithmetic components are locally
/// re-interpreted as three boolean sharings which are then summed with two
/// ripple-carry adders.
pub fn a2b(s: &mut Session, xs: &[RssShare<RingEl64>]) -> MpcResult<BitVecShare> {
    let me = s.party();
    let component_sharing = |component: PartyId| -> BitVecShare {
        // Boolean sharing of arithmetic component x_j: the value sits in
        // slot j, so party i's own slot holds it iff i == j and party i's
        // next slot holds it iff i+1 == j.
        let values: Vec<(u64, u64)> = xs
            .iter()
            .map(|sh| {
                let own = if me == component { sh.own.0 } else { 0 };
                let next = if me.next() == component { sh.next.0 } else { 0 };
                (own, next)
            })
            .collect();
        BitVecShare::from_value_shares(64, &values)
    };
    let [p1, p2, p3] = PartyId::ALL;
    let b1 = component_sharing(p1);
    let b2 = component_sharing(p2);
    let b3 = component_sharing(p3);
    let partial = rca(s, &b1, &b2)?;
    rca(s, &partial, &b3)
}

/// Boolean-to-arithmetic conversion.
///
/// Pairwise masks `r_1` (parties 1,2) and `r_2` (parties 2,3) are added
/// with two ripple-carry adders to form `r_3 = x + r_1 + r_2`, which is
/// revealed to parties 1 and 3 only; the arithmetic sharing is then
/// `(r_3, -r_1, -r_2)`.
pub fn b2a(s: &mut Session, x: &BitVecShare) -> MpcResult<Vec<RssShare<RingEl64>>> {
    if x.width() != 64 {
        return Err(MpcError::Format(format!(
            "b2a expects width 64, got {}",
            x.width()
        )));
    }
    let me = s.party();
    let lanes = x.lanes;
    let zero = vec![0u64; lanes];
    let draw = |s: &mut Session, side: PairSide| -> Vec<u64> {
        if s.options.zero_conversion_masks {
            return vec![0; lanes];
        }
        let rng = s.prf().stream(side, StreamLabel::ConversionMask);
        (0..lanes).map(|_| rng.gen()).collect()
    };
    // r_1 lives in component 2 (the slot parties 1 and 2 share); r_2 in
    // component 3 (parties 2 and 3).
    let (r1, r2) = match me.number() {
        1 => (draw(s, PairSide::Next), zero.clone()),
        2 => (draw(s, PairSide::Prev), draw(s, PairSide::Next)),
        3 => (zero.clone(), draw(s, PairSide::Prev)),
        _ => unreachable!(),
    };
    let bool_sharing = |vals: &[u64], own_holder: PartyId| -> BitVecShare {
        // value in component `own_holder`: that party's own slot and the
        // previous party's next slot.
        let values: Vec<(u64, u64)> = vals
            .iter()
            .map(|&v| {
                let own = if me == own_holder { v } else { 0 };
                let next = if me.next() == own_holder { v } else { 0 };
                (own, next)
            })
            .collect();
        BitVecShare::from_value_shares(64, &values)
    };
    let [p1, p2, p3] = PartyId::ALL;
    let br1 = bool_sharing(&r1, p2);
    let br2 = bool_sharing(&r2, p3);
    let partial = rca(s, x, &br1)?;
    let r3_bool = rca(s, &partial, &br2)?;

    // Reveal r_3 to parties 1 and 3.
    let r3_value_shares: Vec<RssShare<BitWord>> = r3_bool
        .to_value_shares()
        .into_iter()
        .map(|(o, n)| RssShare::new(BitWord(o), BitWord(n)))
        .collect();
    let revealed = rss::open_to(s, &[p1, p3], &r3_value_shares)?;

    let out = match me.number() {
        1 => {
            let r3 = revealed.unwrap();
            r3.iter()
                .zip(&r1)
                .map(|(r3, &r1)| RssShare::new(RingEl64(r3.0), RingEl64(r1.wrapping_neg())))
                .collect()
        }
        2 => r1
            .iter()
            .zip(&r2)
            .map(|(&r1, &r2)| {
                RssShare::new(RingEl64(r1.wrapping_neg()), RingEl64(r2.wrapping_neg()))
            })
            .collect(),
        3 => {
            let r3 = revealed.unwrap();
            r3.iter()
                .zip(&r2)
                .map(|(r3, &r2)| RssShare::new(RingEl64(r2.wrapping_neg()), RingEl64(r3.0)))
                .collect()
        }
        _ => unreachable!(),
    };
    Ok(out)
}
