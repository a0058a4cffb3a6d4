//! `GF(2^8)` with the AES reduction polynomial `x^8 + x^4 + x^3 + x + 1`.

use super::Ring;
use rand::Rng;

/// The AES polynomial as a 9-bit value (0x11B).
const POLY: u16 = 0x11B;

/// An element of the AES field.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default)]
pub struct Gf8(pub u8);

/// `EXP[i] = g^i` for the generator g = 0x03, extended to 510 entries so
/// `EXP[LOG[a] + LOG[b]]` needs no reduction.
const EXP: [u8; 510] = {
    let mut table = [0u8; 510];
    let mut val: u16 = 1;
    let mut i = 0;
    while i < 255 {
        table[i] = val as u8;
        let doubled = val << 1;
        let doubled = if doubled & 0x100 != 0 { doubled ^ POLY } else { doubled };
        val = doubled ^ val; // times 0x03 = x + 1
        i += 1;
    }
    let mut i = 255;
    while i < 510 {
        table[i] = table[i - 255];
        i += 1;
    }
    table
};

const LOG: [u8; 256] = {
    let mut table = [0u8; 256];
    let mut i = 0;
    while i < 255 {
        table[EXP[i] as usize] = i as u8;
        i += 1;
    }
    table
};

impl Gf8 {
    #[inline]
    pub fn square(self) -> Self {
        self.mul(self)
    }

    /// Multiplicative inverse; 0 maps to 0 (the AES convention).
    pub fn inv(self) -> Self {
        if self.0 == 0 {
            return Gf8(0);
        }
        Gf8(EXP[255 - LOG[self.0 as usize] as usize])
    }

    /// Multiplication by x (the AES `xtime` step).
    #[inline]
    pub fn xtime(self) -> Self {
        let shifted = (self.0 as u16) << 1;
        Gf8(if shifted & 0x100 != 0 {
            (shifted ^ POLY) as u8
        } else {
            shifted as u8
        })
    }
}

impl Ring for Gf8 {
    const ZERO: Self = Gf8(0);
    const ONE: Self = Gf8(1);
    const BYTES: usize = 1;

    #[inline]
    fn add(self, other: Self) -> Self {
        Gf8(self.0 ^ other.0)
    }
    #[inline]
    fn sub(self, other: Self) -> Self {
        Gf8(self.0 ^ other.0)
    }
    #[inline]
    fn neg(self) -> Self {
        self
    }
    #[inline]
    fn mul(self, other: Self) -> Self {
        if self.0 == 0 || other.0 == 0 {
            return Gf8(0);
        }
        Gf8(EXP[LOG[self.0 as usize] as usize + LOG[other.0 as usize] as usize])
    }

    fn append_bytes(&self, out: &mut Vec<u8>) {
        out.push(self.0);
    }
    fn from_bytes(bytes: &[u8]) -> Self {
        Gf8(bytes[0])
    }
    fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Gf8(rng.gen())
    }
}
