//! Signed Q-format fixed-point arithmetic.
//!
//! Weights and activations are 16-bit signed values with different radix
//! (fractional bit) counts. Products are accumulated exactly in a wide
//! accumulator whose radix is the sum of the operand radices, then narrowed
//! back with round-to-nearest-even and saturation. Nothing here ever wraps.

use std::fmt;

use thiserror::Error;

/// Usable magnitude bits of an [`Accumulator`]. Exceeding this is a contract
/// violation (checked with `debug_assert!`).
pub const ACCUMULATOR_BITS: u32 = 48;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum FormatError {
    #[error("invalid Q format: bit width {bit_width}, radix {radix} (need 0 < radix < bit_width <= 32)")]
    InvalidFormat { bit_width: u8, radix: u8 },
    #[error("raw value {raw} does not fit in {bit_width} signed bits")]
    OutOfRange { raw: i64, bit_width: u8 },
}

/// A signed fixed-point format: `bit_width` total bits including sign, of
/// which `radix` are fractional.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct QFormat {
    bit_width: u8,
    radix: u8,
}

impl QFormat {
    /// 16-bit weights with 13 fractional bits.
    pub const WEIGHTS: QFormat = QFormat { bit_width: 16, radix: 13 };
    /// 16-bit activations with 6 fractional bits.
    pub const ACTIVATIONS: QFormat = QFormat { bit_width: 16, radix: 6 };

    pub fn new(bit_width: u8, radix: u8) -> Result<Self, FormatError> {
        if radix == 0 || radix >= bit_width || bit_width > 32 {
            return Err(FormatError::InvalidFormat { bit_width, radix });
        }
        Ok(QFormat { bit_width, radix })
    }

    pub const fn bit_width(self) -> u8 {
        self.bit_width
    }

    pub const fn radix(self) -> u8 {
        self.radix
    }

    pub fn raw_min(self) -> i64 {
        -(1i64 << (self.bit_width - 1))
    }

    pub fn raw_max(self) -> i64 {
        (1i64 << (self.bit_width - 1)) - 1
    }

    /// Smallest representable real value.
    pub fn real_min(self) -> f64 {
        self.raw_min() as f64 / self.scale()
    }

    /// Largest representable real value.
    pub fn real_max(self) -> f64 {
        self.raw_max() as f64 / self.scale()
    }

    /// Value of one raw unit.
    pub fn step(self) -> f64 {
        1.0 / self.scale()
    }

    fn scale(self) -> f64 {
        (1u64 << self.radix) as f64
    }

    pub fn saturate(self, raw: i64) -> i32 {
        raw.clamp(self.raw_min(), self.raw_max()) as i32
    }
}

impl fmt::Display for QFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Q{}.{}", self.bit_width - self.radix, self.radix)
    }
}

/// A raw fixed-point value tagged with its format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct QValue {
    raw: i32,
    format: QFormat,
}

impl QValue {
    pub fn new(raw: i64, format: QFormat) -> Result<Self, FormatError> {
        if raw < format.raw_min() || raw > format.raw_max() {
            return Err(FormatError::OutOfRange { raw, bit_width: format.bit_width });
        }
        Ok(QValue { raw: raw as i32, format })
    }

    pub fn raw(self) -> i32 {
        self.raw
    }

    pub fn format(self) -> QFormat {
        self.format
    }

    pub fn to_f64(self) -> f64 {
        dequantize(self)
    }
}

/// Round-to-nearest-even of `x * 2^radix`, saturated to the format range.
/// NaN maps to zero.
pub fn quantize(x: f64, fmt: QFormat) -> QValue {
    QValue { raw: quantize_raw(x, fmt), format: fmt }
}

pub fn quantize_raw(x: f64, fmt: QFormat) -> i32 {
    if x.is_nan() {
        return 0;
    }
    let scaled = (x * fmt.scale()).round_ties_even();
    if scaled >= fmt.raw_max() as f64 {
        fmt.raw_max() as i32
    } else if scaled <= fmt.raw_min() as f64 {
        fmt.raw_min() as i32
    } else {
        scaled as i32
    }
}

/// Exact: `raw / 2^radix`.
pub fn dequantize(q: QValue) -> f64 {
    q.raw as f64 / q.format.scale()
}

/// Arithmetic shift right by `shift` bits with round-to-nearest-even.
#[inline]
pub fn shift_round_even(raw: i64, shift: u32) -> i64 {
    if shift == 0 {
        return raw;
    }
    let floor = raw >> shift;
    let rem = raw - (floor << shift);
    let half = 1i64 << (shift - 1);
    if rem > half || (rem == half && floor & 1 == 1) {
        floor + 1
    } else {
        floor
    }
}

/// Exact wide accumulator for products of weights and activations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Accumulator {
    raw: i64,
    radix: u8,
}

impl Accumulator {
    pub fn zero(radix: u8) -> Self {
        Accumulator { raw: 0, radix }
    }

    /// Accumulator sized for weight x activation dot products.
    pub fn for_dot() -> Self {
        Self::zero(QFormat::WEIGHTS.radix + QFormat::ACTIVATIONS.radix)
    }

    pub fn from_raw(raw: i64, radix: u8) -> Self {
        debug_assert!(fits_accumulator(raw), "accumulator overflow: {raw}");
        Accumulator { raw, radix }
    }

    pub fn raw(self) -> i64 {
        self.raw
    }

    pub const fn radix(self) -> u8 {
        self.radix
    }

    pub fn to_f64(self) -> f64 {
        self.raw as f64 / (1u64 << self.radix) as f64
    }

    /// `self + w * a`, exact.
    #[inline]
    pub fn mac(self, w: QValue, a: QValue) -> Self {
        debug_assert_eq!(
            self.radix,
            w.format.radix + a.format.radix,
            "accumulator radix must equal the sum of operand radices"
        );
        let raw = self.raw + i64::from(w.raw) * i64::from(a.raw);
        debug_assert!(fits_accumulator(raw), "accumulator overflow: {raw}");
        Accumulator { raw, radix: self.radix }
    }
}

#[inline]
fn fits_accumulator(raw: i64) -> bool {
    raw.unsigned_abs() < (1u64 << (ACCUMULATOR_BITS - 1))
}

/// Narrow an accumulator to `out_fmt` without an activation function.
pub fn requantize(acc: Accumulator, out_fmt: QFormat) -> QValue {
    QValue { raw: requantize_raw(acc.raw, acc.radix, out_fmt), format: out_fmt }
}

/// ReLU, then narrow to `out_fmt` (round-to-nearest-even, saturate).
pub fn requantize_relu(acc: Accumulator, out_fmt: QFormat) -> QValue {
    QValue { raw: requantize_relu_raw(acc.raw, acc.radix, out_fmt), format: out_fmt }
}

#[inline]
pub fn requantize_raw(raw: i64, radix: u8, out_fmt: QFormat) -> i32 {
    assert!(radix >= out_fmt.radix, "cannot requantize to a finer radix");
    out_fmt.saturate(shift_round_even(raw, u32::from(radix - out_fmt.radix)))
}

#[inline]
pub fn requantize_relu_raw(raw: i64, radix: u8, out_fmt: QFormat) -> i32 {
    if raw <= 0 {
        return 0;
    }
    requantize_raw(raw, radix, out_fmt)
}

#[cfg(test)]
mod tests {
    use super::*;

    const W: QFormat = QFormat::WEIGHTS;
    const A: QFormat = QFormat::ACTIVATIONS;

    #[test]
    fn format_validation() {
        assert!(QFormat::new(16, 13).is_ok());
        assert!(QFormat::new(16, 0).is_err());
        assert!(QFormat::new(16, 16).is_err());
        assert!(QFormat::new(33, 8).is_err());
        assert!(QFormat::new(32, 31).is_ok());
        assert_eq!(W.real_min(), -4.0);
        assert_eq!(W.real_max(), 32767.0 / 8192.0);
        assert_eq!(A.real_min(), -512.0);
    }

    #[test]
    fn qvalue_construction_checks_range() {
        assert!(QValue::new(32767, W).is_ok());
        assert!(QValue::new(-32768, W).is_ok());
        assert_eq!(
            QValue::new(32768, W),
            Err(FormatError::OutOfRange { raw: 32768, bit_width: 16 })
        );
    }

    #[test]
    fn quantize_examples() {
        assert_eq!(quantize(1.0, W).raw(), 8192);
        assert_eq!(quantize(4.0, W).raw(), 32767);
        assert_eq!(quantize(0.5, A).raw(), 32);
        assert_eq!(quantize(-4.0, W).raw(), -32768);
        assert_eq!(quantize(-100.0, W).raw(), -32768);
        assert_eq!(quantize(f64::NAN, W).raw(), 0);
    }

    #[test]
    fn quantize_ties_to_even() {
        // 0.5 and 1.5 raw units
        assert_eq!(quantize(0.5 / 64.0, A).raw(), 0);
        assert_eq!(quantize(1.5 / 64.0, A).raw(), 2);
        assert_eq!(quantize(-0.5 / 64.0, A).raw(), 0);
        assert_eq!(quantize(-1.5 / 64.0, A).raw(), -2);
        assert_eq!(quantize(2.5 / 64.0, A).raw(), 2);
    }

    #[test]
    fn dequantize_examples() {
        assert_eq!(dequantize(QValue::new(8192, W).unwrap()), 1.0);
        assert_eq!(dequantize(QValue::new(-8192, W).unwrap()), -1.0);
        assert_eq!(dequantize(QValue::new(33, A).unwrap()), 0.515625);
    }

    #[test]
    fn mac_examples() {
        let acc = Accumulator::for_dot();
        assert_eq!(acc.radix(), 19);
        let one_w = QValue::new(8192, W).unwrap();
        let one_a = QValue::new(64, A).unwrap();
        assert_eq!(acc.mac(one_w, one_a).raw(), 524288);
        let neg_half = QValue::new(-4096, W).unwrap();
        let two = QValue::new(128, A).unwrap();
        let r = acc.mac(neg_half, two);
        assert_eq!(r.raw(), -524288);
        assert_eq!(r.to_f64(), -1.0);
    }

    #[test]
    #[should_panic(expected = "radix")]
    #[cfg(debug_assertions)]
    fn mac_rejects_mismatched_radix() {
        let acc = Accumulator::zero(10);
        acc.mac(quantize(1.0, W), quantize(1.0, A));
    }

    #[test]
    fn requantize_relu_examples() {
        assert_eq!(requantize_relu(Accumulator::from_raw(-1000, 19), A).raw(), 0);
        assert_eq!(requantize_relu(Accumulator::from_raw(-1000, 6), A).raw(), 0);
        assert_eq!(requantize_relu(Accumulator::from_raw(524288, 19), A).raw(), 64);
        // 2^30 * 2^(6-19) = 2^17 = 131072 > 32767
        assert_eq!(1i64 << 17, 131072);
        assert_eq!(requantize_relu(Accumulator::from_raw(1 << 30, 19), A).raw(), 32767);
    }

    #[test]
    fn requantize_signed_saturates_both_ways() {
        assert_eq!(requantize(Accumulator::from_raw(-(1 << 30), 19), A).raw(), -32768);
        assert_eq!(requantize(Accumulator::from_raw(-524288, 19), A).raw(), -64);
    }

    #[test]
    fn shift_round_even_matches_float_rounding() {
        for raw in -5000i64..5000 {
            for shift in 0..6u32 {
                let expect = (raw as f64 / (1u64 << shift) as f64).round_ties_even() as i64;
                assert_eq!(shift_round_even(raw, shift), expect, "raw {raw} shift {shift}");
            }
        }
    }
}
