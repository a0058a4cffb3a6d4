//! `GF(2^64)` in polynomial basis, bit `j` = coefficient of `z^j`.
//!
//! The reduction polynomial is `z^64 + REDUCTION` where `REDUCTION` holds
//! the low 64 coefficients. It is the minimal polynomial over GF(2) of
//! `(x^2 + x)^(2^64 + 1)` in the GCM field, which makes the subfield
//! embedding used by [`super::tower`] constructible by exponentiation
//! alone, and it satisfies `Tr(z^61) = 1` so that `X^2 + X + z^61` is
//! irreducible over this field.

use super::Ring;
use rand::Rng;

/// Low 64 coefficients of the reduction polynomial.
pub const REDUCTION: u64 = 0xa630_5b89_c004_ed89;

/// An element of `GF(2^64)`.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default, Hash)]
pub struct Gf64(pub u64);

impl Gf64 {
    /// The verification constant `γ = z^61`.
    pub const GAMMA: Gf64 = Gf64(1 << 61);

    #[inline]
    fn times_z(self) -> Self {
        let carry = self.0 >> 63;
        let shifted = self.0 << 1;
        Gf64(if carry != 0 { shifted ^ REDUCTION } else { shifted })
    }

    pub fn square(self) -> Self {
        self.mul(self)
    }

    pub fn pow(self, mut exp: u128) -> Self {
        let mut base = self;
        let mut acc = Gf64::ONE;
        while exp != 0 {
            if exp & 1 != 0 {
                acc = acc.mul(base);
            }
            base = base.square();
            exp >>= 1;
        }
        acc
    }

    /// Inverse via exponentiation to `2^64 - 2`; 0 maps to 0.
    pub fn inv(self) -> Self {
        self.pow((u64::MAX - 1) as u128)
    }
}

impl Ring for Gf64 {
    const ZERO: Self = Gf64(0);
    const ONE: Self = Gf64(1);
    const BYTES: usize = 8;

    #[inline]
    fn add(self, other: Self) -> Self {
        Gf64(self.0 ^ other.0)
    }
    #[inline]
    fn sub(self, other: Self) -> Self {
        Gf64(self.0 ^ other.0)
    }
    #[inline]
    fn neg(self) -> Self {
        self
    }
    fn mul(self, other: Self) -> Self {
        let mut acc = 0u64;
        let mut shifted = self;
        let mut rhs = other.0;
        while rhs != 0 {
            if rhs & 1 != 0 {
                acc ^= shifted.0;
            }
            rhs >>= 1;
            shifted = shifted.times_z();
        }
        Gf64(acc)
    }

    fn append_bytes(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.0.to_le_bytes());
    }
    fn from_bytes(bytes: &[u8]) -> Self {
        Gf64(u64::from_le_bytes(bytes[..8].try_into().unwrap()))
    }
    fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Gf64(rng.gen())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{rngs::StdRng, SeedableRng};

    /// School multiplication in GF(2)[z] followed by long division.
    fn mul_oracle(a: u64, b: u64) -> u64 {
        let mut wide: u128 = 0;
        for i in 0..64 {
            if b >> i & 1 != 0 {
                wide ^= (a as u128) << i;
            }
        }
        let modulus = (1u128 << 64) | REDUCTION as u128;
        for bit in (64..128).rev() {
            if wide >> bit & 1 != 0 {
                wide ^= modulus << (bit - 64);
            }
        }
        wide as u64
    }

    #[test]
    fn matches_school_oracle() {
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..2000 {
            let a: u64 = rng.gen();
            let b: u64 = rng.gen();
            assert_eq!(Gf64(a).mul(Gf64(b)).0, mul_oracle(a, b));
        }
    }

    #[test]
    fn field_axioms_spot_check() {
        let mut rng = StdRng::seed_from_u64(8);
        for _ in 0..1000 {
            let a = Gf64::random(&mut rng);
            let b = Gf64::random(&mut rng);
            let c = Gf64::random(&mut rng);
            assert_eq!(a.mul(b.mul(c)), a.mul(b).mul(c));
            assert_eq!(a.mul(b.add(c)), a.mul(b).add(a.mul(c)));
        }
    }

    #[test]
    fn inverses() {
        let mut rng = StdRng::seed_from_u64(9);
        for _ in 0..200 {
            let a = Gf64::random(&mut rng);
            if a.is_zero() {
                continue;
            }
            assert_eq!(a.mul(a.inv()), Gf64::ONE);
        }
    }

    #[test]
    fn gamma_has_trace_one() {
        // Tr(γ) = 1 makes X^2 + X + γ irreducible over GF(2^64).
        let mut tr = Gf64::ZERO;
        let mut p = Gf64::GAMMA;
        for _ in 0..64 {
            tr = tr.add(p);
            p = p.square();
        }
        assert_eq!(tr, Gf64::ONE);
    }
}
