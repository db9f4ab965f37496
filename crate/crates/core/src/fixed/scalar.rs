use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{rne_shift, saturate_i32};

/// Total word width including the sign bit.
pub const WORD_BITS: u8 = 32;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum QFormatError {
    #[error("integer and fraction bits must sum to 31, got {int_bits} + {frac_bits}")]
    BadSplit { int_bits: u8, frac_bits: u8 },
    #[error("Q-format needs at least one integer and one fraction bit")]
    DegenerateSplit,
    #[error("malformed Q-format string {0:?}, expected \"Qi.f\" such as \"Q15.16\"")]
    Parse(String),
}

/// Bit split of a signed 32-bit fixed-point word: one implicit sign bit,
/// `int_bits` integer bits and `frac_bits` fraction bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct QFormat {
    int_bits: u8,
    frac_bits: u8,
}

impl QFormat {
    /// Default hardware format: 1 sign, 15 integer, 16 fraction bits.
    pub const Q15_16: QFormat = QFormat {
        int_bits: 15,
        frac_bits: 16,
    };

    pub fn new(int_bits: u8, frac_bits: u8) -> Result<Self, QFormatError> {
        if int_bits == 0 || frac_bits == 0 {
            return Err(QFormatError::DegenerateSplit);
        }
        if int_bits + frac_bits != WORD_BITS - 1 {
            return Err(QFormatError::BadSplit {
                int_bits,
                frac_bits,
            });
        }
        Ok(QFormat {
            int_bits,
            frac_bits,
        })
    }

    pub fn int_bits(&self) -> u8 {
        self.int_bits
    }

    pub fn frac_bits(&self) -> u8 {
        self.frac_bits
    }

    /// `2^frac_bits`, the raw units per real unit.
    pub fn scale(&self) -> f64 {
        (1u64 << self.frac_bits) as f64
    }

    /// Value of one least-significant bit, `2^-frac_bits`.
    pub fn resolution(&self) -> f64 {
        0.5f64.powi(self.frac_bits as i32)
    }

    /// Largest representable value, `2^int_bits - 2^-frac_bits`.
    pub fn max_value(&self) -> f64 {
        i32::MAX as f64 * self.resolution()
    }

    /// Most negative representable value, `-2^int_bits`.
    pub fn min_value(&self) -> f64 {
        i32::MIN as f64 * self.resolution()
    }
}

impl Default for QFormat {
    fn default() -> Self {
        QFormat::Q15_16
    }
}

impl fmt::Display for QFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Q{}.{}", self.int_bits, self.frac_bits)
    }
}

impl FromStr for QFormat {
    type Err = QFormatError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let body = s
            .strip_prefix('Q')
            .or_else(|| s.strip_prefix('q'))
            .ok_or_else(|| QFormatError::Parse(s.to_owned()))?;
        let (i, f) = body
            .split_once('.')
            .ok_or_else(|| QFormatError::Parse(s.to_owned()))?;
        let int_bits: u8 = i.parse().map_err(|_| QFormatError::Parse(s.to_owned()))?;
        let frac_bits: u8 = f.parse().map_err(|_| QFormatError::Parse(s.to_owned()))?;
        QFormat::new(int_bits, frac_bits)
    }
}

impl TryFrom<String> for QFormat {
    type Error = QFormatError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<QFormat> for String {
    fn from(fmt: QFormat) -> String {
        fmt.to_string()
    }
}

/// Sticky saturation record. `saturated` is true iff at least one
/// operation since construction clamped its result.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct OverflowFlags {
    saturated: bool,
    count: u64,
}

impl OverflowFlags {
    pub fn record_saturation(&mut self) {
        self.saturated = true;
        self.count += 1;
    }

    pub fn merge(&mut self, other: &OverflowFlags) {
        self.saturated |= other.saturated;
        self.count += other.count;
    }

    pub fn saturated(&self) -> bool {
        self.saturated
    }

    pub fn count(&self) -> u64 {
        self.count
    }
}

/// A signed 32-bit fixed-point scalar: `value = raw / 2^frac_bits`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fixed32 {
    raw: i32,
    fmt: QFormat,
}

impl Fixed32 {
    pub fn from_raw(raw: i32, fmt: QFormat) -> Self {
        Fixed32 { raw, fmt }
    }

    pub fn zero(fmt: QFormat) -> Self {
        Fixed32 { raw: 0, fmt }
    }

    /// Quantize a real value: round to nearest even at `2^frac_bits`
    /// granularity, saturating to the representable range. Non-finite
    /// inputs saturate (NaN maps to zero) and are flagged.
    pub fn from_real(x: f64, fmt: QFormat, flags: &mut OverflowFlags) -> Self {
        if x.is_nan() {
            flags.record_saturation();
            return Fixed32 { raw: 0, fmt };
        }
        let scaled = (x * fmt.scale()).round_ties_even();
        let raw = if scaled > i32::MAX as f64 {
            flags.record_saturation();
            i32::MAX
        } else if scaled < i32::MIN as f64 {
            flags.record_saturation();
            i32::MIN
        } else {
            scaled as i32
        };
        Fixed32 { raw, fmt }
    }

    /// Exact conversion back to double precision.
    pub fn to_real(self) -> f64 {
        self.raw as f64 * self.fmt.resolution()
    }

    pub fn raw(self) -> i32 {
        self.raw
    }

    pub fn fmt(self) -> QFormat {
        self.fmt
    }

    /// Saturating fixed-point addition.
    ///
    /// Panics if the operands carry different Q-formats; mixing formats
    /// is a programming error, not a data error.
    #[track_caller]
    pub fn saturating_add(self, rhs: Fixed32, flags: &mut OverflowFlags) -> Fixed32 {
        assert_eq!(
            self.fmt, rhs.fmt,
            "fixed-point format mismatch: {} vs {}",
            self.fmt, rhs.fmt
        );
        let sum = self.raw as i128 + rhs.raw as i128;
        Fixed32 {
            raw: saturate_i32(sum, flags),
            fmt: self.fmt,
        }
    }

    /// Saturating fixed-point multiply: exact 64-bit product, one
    /// round-to-nearest-even shift by `frac_bits`, saturate to 32 bits.
    #[track_caller]
    pub fn saturating_mul(self, rhs: Fixed32, flags: &mut OverflowFlags) -> Fixed32 {
        assert_eq!(
            self.fmt, rhs.fmt,
            "fixed-point format mismatch: {} vs {}",
            self.fmt, rhs.fmt
        );
        let product = self.raw as i128 * rhs.raw as i128;
        let raw = saturate_i32(rne_shift(product, self.fmt.frac_bits() as u32), flags);
        Fixed32 { raw, fmt: self.fmt }
    }
}

impl fmt::Display for Fixed32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_real())
    }
}

/// Hexadecimal of the raw two's-complement word, for bit-exact debugging.
impl fmt::LowerHex for Fixed32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:08x}", self.raw as u32)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const Q: QFormat = QFormat::Q15_16;

    fn fx(x: f64) -> Fixed32 {
        let mut flags = OverflowFlags::default();
        let v = Fixed32::from_real(x, Q, &mut flags);
        assert!(!flags.saturated(), "unexpected saturation for {x}");
        v
    }

    #[test]
    fn qformat_validation() {
        assert!(QFormat::new(15, 16).is_ok());
        assert_eq!(
            QFormat::new(16, 16),
            Err(QFormatError::BadSplit {
                int_bits: 16,
                frac_bits: 16
            })
        );
        assert_eq!(QFormat::new(0, 31), Err(QFormatError::DegenerateSplit));
        assert_eq!(QFormat::new(31, 0), Err(QFormatError::DegenerateSplit));
    }

    #[test]
    fn qformat_parse_display_round_trip() {
        let q: QFormat = "Q15.16".parse().unwrap();
        assert_eq!(q, QFormat::Q15_16);
        assert_eq!(q.to_string(), "Q15.16");
        let q: QFormat = "Q7.24".parse().unwrap();
        assert_eq!((q.int_bits(), q.frac_bits()), (7, 24));
        assert!("Q16.16".parse::<QFormat>().is_err());
        assert!("15.16".parse::<QFormat>().is_err());
        assert!("Qx.y".parse::<QFormat>().is_err());
    }

    #[test]
    fn from_real_exact_half() {
        assert_eq!(fx(0.5).raw(), 32768);
        assert_eq!(fx(0.0).raw(), 0);
        assert_eq!(fx(-1.0).raw(), -65536);
    }

    #[test]
    fn from_real_saturates_out_of_range() {
        let mut flags = OverflowFlags::default();
        let v = Fixed32::from_real(40000.0, Q, &mut flags);
        assert_eq!(v.raw(), i32::MAX);
        assert!(flags.saturated());
        let w = Fixed32::from_real(-40000.0, Q, &mut flags);
        assert_eq!(w.raw(), i32::MIN);
        assert_eq!(flags.count(), 2);
    }

    #[test]
    fn from_real_non_finite() {
        let mut flags = OverflowFlags::default();
        assert_eq!(Fixed32::from_real(f64::NAN, Q, &mut flags).raw(), 0);
        assert_eq!(
            Fixed32::from_real(f64::INFINITY, Q, &mut flags).raw(),
            i32::MAX
        );
        assert_eq!(
            Fixed32::from_real(f64::NEG_INFINITY, Q, &mut flags).raw(),
            i32::MIN
        );
        assert_eq!(flags.count(), 3);
    }

    #[test]
    fn from_real_ties_to_even() {
        // 1.5 LSB lies halfway between raw 1 and raw 2 -> even raw 2;
        // 0.5 LSB halfway between 0 and 1 -> 0.
        let lsb = Q.resolution();
        assert_eq!(fx(1.5 * lsb).raw(), 2);
        assert_eq!(fx(0.5 * lsb).raw(), 0);
        assert_eq!(fx(-0.5 * lsb).raw(), 0);
        assert_eq!(fx(-1.5 * lsb).raw(), -2);
    }

    #[test]
    fn to_real_examples() {
        assert_eq!(Fixed32::from_raw(32768, Q).to_real(), 0.5);
        assert_eq!(Fixed32::from_raw(-65536, Q).to_real(), -1.0);
        assert_eq!(Fixed32::from_raw(1, Q).to_real(), 2f64.powi(-16));
    }

    #[test]
    fn add_examples() {
        let mut flags = OverflowFlags::default();
        let sum = fx(0.5).saturating_add(fx(0.25), &mut flags);
        assert_eq!(sum.raw(), 49152);
        assert_eq!(sum.to_real(), 0.75);
        // additive identity
        for raw in [0, 7, -31_000, i32::MAX, i32::MIN] {
            let x = Fixed32::from_raw(raw, Q);
            assert_eq!(x.saturating_add(Fixed32::zero(Q), &mut flags).raw(), raw);
        }
        assert!(!flags.saturated());
    }

    #[test]
    fn add_saturates_at_max() {
        let mut flags = OverflowFlags::default();
        let max = Fixed32::from_raw(i32::MAX, Q);
        let lsb = Fixed32::from_raw(1, Q);
        let sum = max.saturating_add(lsb, &mut flags);
        assert_eq!(sum.raw(), i32::MAX);
        assert!(flags.saturated());
    }

    #[test]
    #[should_panic(expected = "format mismatch")]
    fn add_rejects_mixed_formats() {
        let mut flags = OverflowFlags::default();
        let a = Fixed32::from_raw(1, QFormat::Q15_16);
        let b = Fixed32::from_raw(1, QFormat::new(7, 24).unwrap());
        let _ = a.saturating_add(b, &mut flags);
    }

    #[test]
    fn mul_examples() {
        let mut flags = OverflowFlags::default();
        assert_eq!(fx(0.5).saturating_mul(fx(0.5), &mut flags).to_real(), 0.25);
        // one LSB squared underflows to zero
        let lsb = Fixed32::from_raw(1, Q);
        assert_eq!(lsb.saturating_mul(lsb, &mut flags).raw(), 0);
        assert!(!flags.saturated());
    }

    #[test]
    fn mul_identity() {
        let mut flags = OverflowFlags::default();
        let one = fx(1.0);
        for raw in [0, 1, -1, 12345, -99999, i32::MAX, i32::MIN] {
            let x = Fixed32::from_raw(raw, Q);
            assert_eq!(x.saturating_mul(one, &mut flags).raw(), raw);
        }
        assert!(!flags.saturated());
    }

    #[test]
    fn hex_and_display() {
        let v = Fixed32::from_raw(-1, Q);
        assert_eq!(format!("{v:x}"), "ffffffff");
        assert_eq!(format!("{}", fx(0.5)), "0.5");
    }

    proptest! {
        #[test]
        fn round_trip_representable(raw in any::<i32>()) {
            let mut flags = OverflowFlags::default();
            let x = Fixed32::from_raw(raw, Q).to_real();
            let back = Fixed32::from_real(x, Q, &mut flags);
            prop_assert_eq!(back.raw(), raw);
            prop_assert!(!flags.saturated());
        }

        #[test]
        fn quantization_bound(x in -32000.0f64..32000.0) {
            let mut flags = OverflowFlags::default();
            let q = Fixed32::from_real(x, Q, &mut flags);
            prop_assert!((q.to_real() - x).abs() <= 0.5 * Q.resolution());
        }

        #[test]
        fn add_commutes(a in any::<i32>(), b in any::<i32>()) {
            let mut f1 = OverflowFlags::default();
            let mut f2 = OverflowFlags::default();
            let x = Fixed32::from_raw(a, Q);
            let y = Fixed32::from_raw(b, Q);
            prop_assert_eq!(
                x.saturating_add(y, &mut f1).raw(),
                y.saturating_add(x, &mut f2).raw()
            );
            prop_assert_eq!(f1, f2);
        }

        #[test]
        fn mul_commutes(a in any::<i32>(), b in any::<i32>()) {
            let mut f1 = OverflowFlags::default();
            let mut f2 = OverflowFlags::default();
            let x = Fixed32::from_raw(a, Q);
            let y = Fixed32::from_raw(b, Q);
            prop_assert_eq!(
                x.saturating_mul(y, &mut f1).raw(),
                y.saturating_mul(x, &mut f2).raw()
            );
        }

        #[test]
        fn add_associative_absent_saturation(
            a in -100_000i32..100_000,
            b in -100_000i32..100_000,
            c in -100_000i32..100_000,
        ) {
            let mut flags = OverflowFlags::default();
            let (x, y, z) = (
                Fixed32::from_raw(a, Q),
                Fixed32::from_raw(b, Q),
                Fixed32::from_raw(c, Q),
            );
            let left = x.saturating_add(y, &mut flags).saturating_add(z, &mut flags);
            let right = x.saturating_add(y.saturating_add(z, &mut flags), &mut flags);
            prop_assert!(!flags.saturated());
            prop_assert_eq!(left.raw(), right.raw());
        }

        #[test]
        fn saturation_lands_on_nearest_bound(x in any::<f64>()) {
            prop_assume!(x.is_finite());
            let mut flags = OverflowFlags::default();
            let q = Fixed32::from_real(x, Q, &mut flags);
            if x > Q.max_value() {
                prop_assert_eq!(q.raw(), i32::MAX);
            } else if x < Q.min_value() {
                prop_assert_eq!(q.raw(), i32::MIN);
            }
        }
    }
}
