//! The isomorphism `φ: GF(2^128) → (GF(2^64))²`.
//!
//! `GF(2^128)` is re-expressed as the degree-2 extension of `GF(2^64)`
//! modulo `P(X) = X² + βX + γ` with `β = 1` and `γ = z^61`, so a
//! multiplication `u·v = w` in the GCM field can be verified through two
//! constraints over `GF(2^64)` on the tower components.
//!
//! Construction (runs once at startup):
//!  1. `y := (x² + x)^(2^64 + 1)` lands in the 64-element-degree subfield
//!     (the norm map); its minimal polynomial is exactly the `Gf64`
//!     reduction polynomial, so `a ↦ Σ aⱼ·yʲ` embeds `Gf64` into the GCM
//!     field.
//!  2. A root `λ` of `P` is found by solving the GF(2)-linear system
//!     `λ² + λ = ι(γ)` over the 128-dimensional bit space (squaring is
//!     GF(2)-linear).
//!  3. `φ⁻¹(a, b) = ι(a)·λ + ι(b)` yields a 128×128 bit change-of-basis
//!     matrix; `φ` is its inverse.

use super::{Gf128, Gf64, Ring};
use crate::error::MpcError;
use std::sync::OnceLock;

/// Tower representation `hi·X + lo` of a GCM-field element.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default)]
pub struct TowerRep {
    pub hi: Gf64,
    pub lo: Gf64,
}

impl TowerRep {
    pub const ZERO: TowerRep = TowerRep { hi: Gf64(0), lo: Gf64(0) };

    pub fn add(self, other: Self) -> Self {
        TowerRep {
            hi: self.hi.add(other.hi),
            lo: self.lo.add(other.lo),
        }
    }

    /// Product modulo `X² + X + γ`:
    /// `(aX + b)(cX + d) = (ad + bc + ac)X + (bd + γ·ac)`.
    pub fn mul(self, other: Self) -> Self {
        let (a, b) = (self.hi, self.lo);
        let (c, d) = (other.hi, other.lo);
        let ac = a.mul(c);
        TowerRep {
            hi: a.mul(d).add(b.mul(c)).add(ac),
            lo: b.mul(d).add(Gf64::GAMMA.mul(ac)),
        }
    }
}

/// Row-major 128×128 bit matrix; `rows[r]` holds row `r`.
#[derive(Clone)]
struct BitMatrix {
    rows: Vec<u128>,
}

impl BitMatrix {
    fn apply(&self, v: u128) -> u128 {
        let mut out = 0u128;
        for (r, row) in self.rows.iter().enumerate() {
            if (row & v).count_ones() & 1 != 0 {
                out |= 1 << r;
            }
        }
        out
    }

    fn from_columns(cols: &[u128; 128]) -> Self {
        let mut rows = vec![0u128; 128];
        for (c, col) in cols.iter().enumerate() {
            for (r, row) in rows.iter_mut().enumerate() {
                if col >> r & 1 != 0 {
                    *row |= 1 << c;
                }
            }
        }
        BitMatrix { rows }
    }

    /// Gauss-Jordan inversion; `None` if singular.
    fn invert(&self) -> Option<BitMatrix> {
        let mut a = self.rows.clone();
        let mut inv: Vec<u128> = (0..128).map(|i| 1u128 << i).collect();
        for col in 0..128 {
            let pivot = (col..128).find(|&r| a[r] >> col & 1 != 0)?;
            a.swap(col, pivot);
            inv.swap(col, pivot);
            for r in 0..128 {
                if r != col && a[r] >> col & 1 != 0 {
                    a[r] ^= a[col];
                    inv[r] ^= inv[col];
                }
            }
        }
        Some(BitMatrix { rows: inv })
    }
}

/// Solves `A·x = rhs` over GF(2); returns any solution.
fn solve_linear(a_rows: &[u128; 128], rhs: u128) -> Option<u128> {
    let mut rows: Vec<(u128, bool)> = a_rows
        .iter()
        .enumerate()
        .map(|(r, &row)| (row, rhs >> r & 1 != 0))
        .collect();
    let mut pivots: Vec<(usize, usize)> = Vec::new(); // (row, col)
    let mut rank = 0usize;
    for col in 0..128 {
        let Some(pr) = (rank..128).find(|&r| rows[r].0 >> col & 1 != 0) else {
            continue;
        };
        rows.swap(rank, pr);
        for r in 0..128 {
            if r != rank && rows[r].0 >> col & 1 != 0 {
                rows[r].0 ^= rows[rank].0;
                rows[r].1 ^= rows[rank].1;
            }
        }
        pivots.push((rank, col));
        rank += 1;
    }
    if rows[rank..].iter().any(|&(row, b)| row == 0 && b) {
        return None;
    }
    let mut x = 0u128;
    for &(row, col) in &pivots {
        if rows[row].1 {
            x |= 1 << col;
        }
    }
    Some(x)
}

/// Precomputed change of basis for `φ` and `φ⁻¹`.
pub struct TowerCtx {
    to_gcm: BitMatrix,   // tower coordinates -> GCM bits
    from_gcm: BitMatrix, // GCM bits -> tower coordinates
}

impl TowerCtx {
    pub fn build() -> Result<TowerCtx, MpcError> {
        // Step 1: embed GF(2^64) via the norm of u = x^2 + x.
        let u = Gf128::X.add(Gf128::X.mul(Gf128::X));
        let y = u.pow((1u128 << 64) | 1);
        let mut frob = y;
        for _ in 0..64 {
            frob = frob.square();
        }
        if frob != y || y.is_zero() {
            return Err(MpcError::TowerConstruction(
                "norm element not in subfield".into(),
            ));
        }
        let mut ypow = [Gf128::ZERO; 64];
        ypow[0] = Gf128::ONE;
        for j in 1..64 {
            ypow[j] = ypow[j - 1].mul(y);
        }
        // The Gf64 reduction polynomial must vanish at y.
        let mut qy = ypow[63].mul(y); // y^64
        for (j, &p) in ypow.iter().enumerate() {
            if super::gf64::REDUCTION >> j & 1 != 0 {
                qy = qy.add(p);
            }
        }
        if !qy.is_zero() {
            return Err(MpcError::TowerConstruction(
                "embedding root does not satisfy the reduction polynomial".into(),
            ));
        }
        let embed = |a: Gf64| -> Gf128 {
            let mut acc = Gf128::ZERO;
            for (j, &p) in ypow.iter().enumerate() {
                if a.0 >> j & 1 != 0 {
                    acc = acc.add(p);
                }
            }
            acc
        };

        // Step 2: solve λ² + λ = ι(γ).
        let mut sq_cols = [0u128; 128];
        for (j, col) in sq_cols.iter_mut().enumerate() {
            *col = Gf128(1 << j).square().0;
        }
        let sq = BitMatrix::from_columns(&sq_cols);
        let mut a_rows = [0u128; 128];
        for (r, row) in a_rows.iter_mut().enumerate() {
            *row = sq.rows[r] ^ (1 << r); // squaring + identity
        }
        let gamma_emb = embed(Gf64::GAMMA);
        let lambda = Gf128(
            solve_linear(&a_rows, gamma_emb.0)
                .ok_or_else(|| MpcError::TowerConstruction("no root of P(X) found".into()))?,
        );
        let mut lam_frob = lambda;
        for _ in 0..64 {
            lam_frob = lam_frob.square();
        }
        if lam_frob == lambda {
            return Err(MpcError::TowerConstruction(
                "root of P(X) fell inside the subfield".into(),
            ));
        }

        // Step 3: change of basis {y^j·λ} ∪ {y^j}.
        let mut cols = [0u128; 128];
        for j in 0..64 {
            cols[j] = ypow[j].mul(lambda).0;
            cols[64 + j] = ypow[j].0;
        }
        let to_gcm = BitMatrix::from_columns(&cols);
        let from_gcm = to_gcm
            .invert()
            .ok_or_else(|| MpcError::TowerConstruction("basis matrix singular".into()))?;
        Ok(TowerCtx { to_gcm, from_gcm })
    }

    /// The process-wide context; built on first use.
    pub fn get() -> &'static TowerCtx {
        static CTX: OnceLock<TowerCtx> = OnceLock::new();
        CTX.get_or_init(|| TowerCtx::build().expect("tower isomorphism construction"))
    }

    pub fn phi(&self, u: Gf128) -> TowerRep {
        let coords = self.from_gcm.apply(u.0);
        TowerRep {
            hi: Gf64(coords as u64),
            lo: Gf64((coords >> 64) as u64),
        }
    }

    pub fn phi_inv(&self, t: TowerRep) -> Gf128 {
        let coords = (t.hi.0 as u128) | ((t.lo.0 as u128) << 64);
        Gf128(self.to_gcm.apply(coords))
    }
}
