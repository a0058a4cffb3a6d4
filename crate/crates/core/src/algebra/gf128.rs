//! The GCM field `GF(2^128)` with the NIST SP 800-38D bit convention.
//!
//! A block maps to a `u128` via big-endian byte order, so the "first" bit
//! of the GCM bit string (the coefficient of `x^0`) is the most
//! significant bit of the integer. The reduction polynomial is
//! `x^128 + x^7 + x^2 + x + 1`.

use super::Ring;
use rand::Rng;

/// `R = 11100001 || 0^120`, the reduction constant of the right-shift
/// multiplication algorithm.
const R: u128 = 0xE1 << 120;

/// An element of the GCM field.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default, Hash)]
pub struct Gf128(pub u128);

impl Gf128 {
    /// The monomial `x` (bit 1 of the GCM bit string).
    pub const X: Gf128 = Gf128(1 << 126);

    pub fn from_be_bytes(bytes: [u8; 16]) -> Self {
        Gf128(u128::from_be_bytes(bytes))
    }

    pub fn to_be_bytes(self) -> [u8; 16] {
        self.0.to_be_bytes()
    }

    pub fn square(self) -> Self {
        self.mul(self)
    }

    pub fn pow(self, mut exp: u128) -> Self {
        let mut base = self;
        let mut acc = Gf128::ONE;
        while exp != 0 {
            if exp & 1 != 0 {
                acc = acc.mul(base);
            }
            base = base.square();
            exp >>= 1;
        }
        acc
    }

    /// Inverse via exponentiation to `2^128 - 2`; 0 maps to 0.
    pub fn inv(self) -> Self {
        // 2^128 - 2 = 1111...10 in binary: square-and-multiply over 127 ones.
        let mut acc = Gf128::ONE;
        let mut base = self.square(); // self^2
        for _ in 0..127 {
            acc = acc.mul(base);
            base = base.square();
        }
        acc
    }
}

impl Ring for Gf128 {
    const ZERO: Self = Gf128(0);
    /// The polynomial 1: first bit of the GCM bit string set.
    const ONE: Self = Gf128(1 << 127);
    const BYTES: usize = 16;

    #[inline]
    fn add(self, other: Self) -> Self {
        Gf128(self.0 ^ other.0)
    }
    #[inline]
    fn sub(self, other: Self) -> Self {
        Gf128(self.0 ^ other.0)
    }
    #[inline]
    fn neg(self) -> Self {
        self
    }
    fn mul(self, other: Self) -> Self {
        let mut z = 0u128;
        let mut v = other.0;
        let x = self.0;
        for i in 0..128 {
            if x >> (127 - i) & 1 != 0 {
                z ^= v;
            }
            let lsb = v & 1;
            v >>= 1;
            if lsb != 0 {
                v ^= R;
            }
        }
        Gf128(z)
    }

    fn append_bytes(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.0.to_le_bytes());
    }
    fn from_bytes(bytes: &[u8]) -> Self {
        Gf128(u128::from_le_bytes(bytes[..16].try_into().unwrap()))
    }
    fn random<R2: Rng + ?Sized>(rng: &mut R2) -> Self {
        Gf128(rng.gen())
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::{rngs::StdRng, SeedableRng};

    /// Independent oracle: school multiplication on GCM-ordered coefficient
    /// vectors followed by explicit long division by the GCM polynomial.
    pub(crate) fn mul_oracle(a: Gf128, b: Gf128) -> Gf128 {
        // coefficient of x^j lives at integer bit (127 - j)
        let coeff = |v: u128, j: usize| v >> (127 - j) & 1;
        let mut wide = [0u8; 256]; // wide[j] = coefficient of x^j
        for i in 0..128 {
            if coeff(a.0, i) == 0 {
                continue;
            }
            for j in 0..128 {
                wide[i + j] ^= coeff(b.0, j) as u8;
            }
        }
        // reduce by x^128 + x^7 + x^2 + x + 1
        for j in (128..256).rev() {
            if wide[j] != 0 {
                wide[j] = 0;
                wide[j - 128] ^= 1;
                wide[j - 128 + 1] ^= 1;
                wide[j - 128 + 2] ^= 1;
                wide[j - 128 + 7] ^= 1;
            }
        }
        let mut out = 0u128;
        for (j, &c) in wide.iter().take(128).enumerate() {
            if c != 0 {
                out |= 1 << (127 - j);
            }
        }
        Gf128(out)
    }

    #[test]
    fn identity_and_zero() {
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..50 {
            let b = Gf128::random(&mut rng);
            assert_eq!(Gf128::ONE.mul(b), b);
            assert_eq!(Gf128::ZERO.mul(b), Gf128::ZERO);
        }
    }

    #[test]
    fn x_squared() {
        // x * x = x^2: coefficient bit moves from 126 to 125
        assert_eq!(Gf128::X.mul(Gf128::X), Gf128(1 << 125));
    }

    #[test]
    fn matches_school_oracle() {
        let mut rng = StdRng::seed_from_u64(4);
        for _ in 0..500 {
            let a = Gf128::random(&mut rng);
            let b = Gf128::random(&mut rng);
            assert_eq!(a.mul(b), mul_oracle(a, b));
        }
    }

    #[test]
    fn associativity_and_distributivity() {
        let mut rng = StdRng::seed_from_u64(5);
        for _ in 0..1000 {
            let a = Gf128::random(&mut rng);
            let b = Gf128::random(&mut rng);
            let c = Gf128::random(&mut rng);
            assert_eq!(a.mul(b.mul(c)), a.mul(b).mul(c));
            assert_eq!(a.mul(b.add(c)), a.mul(b).add(a.mul(c)));
        }
    }

    #[test]
    fn inverses() {
        let mut rng = StdRng::seed_from_u64(6);
        for _ in 0..1000 {
            let a = Gf128::random(&mut rng);
            if a.is_zero() {
                continue;
            }
            assert_eq!(a.mul(a.inv()), Gf128::ONE);
        }
    }
}
