//! Exact arithmetic for every ring and field the protocols touch.

mod gf128;
mod gf64;
mod gf8;
mod ring64;
pub mod tower;

pub use gf128::Gf128;
pub use gf64::Gf64;
pub use gf8::Gf8;
pub use ring64::{fp_decode, fp_encode, FixedPoint, RingEl64, FRACTION_BITS};
pub use tower::{TowerCtx, TowerRep};

use rand::Rng;

/// Common interface of the share algebras: `Z_{2^64}`, the binary fields,
/// and 64-wide packed GF(2) lanes.
///
/// `add`/`sub` coincide with XOR for the binary algebras; `mul` is the
/// field product, except for [`BitWord`] where it acts lane-wise (AND).
pub trait Ring:
    Copy + Clone + Eq + PartialEq + std::fmt::Debug + Send + Sync + 'static
{
    const ZERO: Self;
    const ONE: Self;
    /// Fixed wire width in bytes (little-endian).
    const BYTES: usize;

    fn add(self, other: Self) -> Self;
    fn sub(self, other: Self) -> Self;
    fn neg(self) -> Self;
    fn mul(self, other: Self) -> Self;

    fn append_bytes(&self, out: &mut Vec<u8>);
    /// Reads `Self::BYTES` bytes; callers guarantee the slice length.
    fn from_bytes(bytes: &[u8]) -> Self;

    fn random<R: Rng + ?Sized>(rng: &mut R) -> Self;

    fn is_zero(&self) -> bool {
        *self == Self::ZERO
    }
}

/// 64 packed GF(2) lanes: addition is XOR, multiplication is lane-wise AND.
///
/// Beaver triples over `BitWord` are the bit-triples consumed by AND gates
/// in the ripple-carry adder; one word carries 64 independent lanes.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default)]
pub struct BitWord(pub u64);

impl Ring for BitWord {
    const ZERO: Self = BitWord(0);
    const ONE: Self = BitWord(u64::MAX);
    const BYTES: usize = 8;

    #[inline]
    fn add(self, other: Self) -> Self {
        BitWord(self.0 ^ other.0)
    }
    #[inline]
    fn sub(self, other: Self) -> Self {
        BitWord(self.0 ^ other.0)
    }
    #[inline]
    fn neg(self) -> Self {
        self
    }
    #[inline]
    fn mul(self, other: Self) -> Self {
        BitWord(self.0 & other.0)
    }

    fn append_bytes(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.0.to_le_bytes());
    }
    fn from_bytes(bytes: &[u8]) -> Self {
        BitWord(u64::from_le_bytes(bytes[..8].try_into().unwrap()))
    }
    fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        BitWord(rng.gen())
    }
}
