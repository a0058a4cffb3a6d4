//! The ring `Z_{2^64}` and its fixed-point encoding.

use super::Ring;
use crate::error::MpcError;
use rand::Rng;

/// Number of fractional bits in the fixed-point encoding.
pub const FRACTION_BITS: u32 = 8;

/// A residue mod `2^64`; all arithmetic wraps.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default, Hash)]
pub struct RingEl64(pub u64);

impl Ring for RingEl64 {
    const ZERO: Self = RingEl64(0);
    const ONE: Self = RingEl64(1);
    const BYTES: usize = 8;

    #[inline]
    fn add(self, other: Self) -> Self {
        RingEl64(self.0.wrapping_add(other.0))
    }
    #[inline]
    fn sub(self, other: Self) -> Self {
        RingEl64(self.0.wrapping_sub(other.0))
    }
    #[inline]
    fn neg(self) -> Self {
        RingEl64(self.0.wrapping_neg())
    }
    #[inline]
    fn mul(self, other: Self) -> Self {
        RingEl64(self.0.wrapping_mul(other.0))
    }

    fn append_bytes(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.0.to_le_bytes());
    }
    fn from_bytes(bytes: &[u8]) -> Self {
        RingEl64(u64::from_le_bytes(bytes[..8].try_into().unwrap()))
    }
    fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        RingEl64(rng.gen())
    }
}

impl RingEl64 {
    /// Two's-complement interpretation.
    #[inline]
    pub fn as_signed(self) -> i64 {
        self.0 as i64
    }
}

/// A fixed-point number: `raw` holds `⌊value · 2^f⌋` in two's complement.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct FixedPoint {
    pub raw: RingEl64,
    pub fraction_bits: u32,
}

impl FixedPoint {
    pub fn encode(value: f64, fraction_bits: u32) -> Result<Self, MpcError> {
        Ok(FixedPoint {
            raw: fp_encode(value, fraction_bits)?,
            fraction_bits,
        })
    }

    pub fn decode(self) -> f64 {
        fp_decode(self.raw, self.fraction_bits)
    }
}

/// Encodes a real as `⌊x · 2^f⌋` in `Z_{2^64}`, two's complement for
/// negatives. Values outside `|x| < 2^(63-f)` are a range error.
pub fn fp_encode(value: f64, fraction_bits: u32) -> Result<RingEl64, MpcError> {
    if !value.is_finite() {
        return Err(MpcError::Range(format!("non-finite value {value}")));
    }
    let limit = (63 - fraction_bits) as i32;
    if value.abs() >= 2f64.powi(limit) {
        return Err(MpcError::Range(format!(
            "|{value}| exceeds 2^{limit} for f={fraction_bits}"
        )));
    }
    let scaled = (value * 2f64.powi(fraction_bits as i32)).floor();
    Ok(RingEl64(scaled as i64 as u64))
}

/// Inverse of [`fp_encode`]: signed interpretation divided by `2^f`.
pub fn fp_decode(raw: RingEl64, fraction_bits: u32) -> f64 {
    raw.as_signed() as f64 / 2f64.powi(fraction_bits as i32)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encode_known_values() {
        assert_eq!(fp_encode(1.5, 8).unwrap().0, 384);
        assert_eq!(fp_encode(0.0, 8).unwrap().0, 0);
        assert_eq!(fp_encode(-1.0, 8).unwrap().0, u64::MAX - 255); // 2^64 - 256
    }

    #[test]
    fn encode_rejects_out_of_range() {
        assert!(fp_encode(2f64.powi(55), 8).is_err());
        assert!(fp_encode(f64::NAN, 8).is_err());
        assert!(fp_encode(2f64.powi(54), 8).is_ok());
    }

    #[test]
    fn decode_error_bound_on_grid() {
        // |decode(encode(x)) - x| <= 2^-8 over a 10^3-point grid in [-100, 100].
        for i in 0..1000 {
            let x = -100.0 + 200.0 * (i as f64) / 999.0;
            let back = fp_decode(fp_encode(x, 8).unwrap(), 8);
            assert!(
                (back - x).abs() <= 2f64.powi(-8),
                "x={x} back={back}"
            );
            assert!(back <= x + 1e-12, "floor encoding never rounds up");
        }
    }

    #[test]
    fn negation_cancels() {
        let x = RingEl64(0xdead_beef_1234_5678);
        assert_eq!(x.add(x.neg()), RingEl64::ZERO);
    }
}
