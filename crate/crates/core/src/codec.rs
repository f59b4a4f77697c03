//! FP16/FP32 bit-pattern codec and operand decomposition.
//!
//! The multiplier side of the IPU consumes a sign plus three 4-bit nibble
//! slices of the 11-bit magnitude (implied leading one for normals). The
//! decomposition inserts a zero in the least significant position so the
//! slices line up on the 12-bit signed-magnitude grid used by the
//! datapath; right shifting then only ever discards true fraction bits.

use crate::exact::ExactValue;
use crate::{Error, Result};
use num_bigint::BigInt;
use num_traits::{One, Signed};

/// Classification of a decoded FP16 pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FpClass {
    Zero,
    Subnormal,
    Normal,
    Inf,
    Nan,
}

/// A decoded half-precision number.
///
/// For finite values the reconstructed real value is
/// `sign * magnitude * 2^(exp_unbiased - 10)`, where `magnitude` is the
/// 11-bit significand (bit 10 set for normals, clear for subnormals) and
/// subnormals carry the fixed exponent −14.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fp16Value {
    pub sign: i8,
    pub exp_unbiased: i32,
    pub magnitude: u16,
    pub class: FpClass,
}

impl Fp16Value {
    pub fn is_finite(&self) -> bool {
        !matches!(self.class, FpClass::Inf | FpClass::Nan)
    }

    /// Exact value of a finite pattern.
    pub fn to_exact(&self) -> ExactValue {
        debug_assert!(self.is_finite());
        ExactValue::new(
            BigInt::from(self.sign as i64 * self.magnitude as i64),
            self.exp_unbiased as i64 - 10,
        )
    }

    pub fn to_f64(&self) -> f64 {
        match self.class {
            FpClass::Inf => self.sign as f64 * f64::INFINITY,
            FpClass::Nan => f64::NAN,
            _ => self.sign as f64 * self.magnitude as f64 * 2f64.powi(self.exp_unbiased - 10),
        }
    }
}

/// Decode any 16-bit pattern. Total: INF and NaN come back tagged and are
/// rejected later, at the IPU input.
pub fn decode_fp16(bits: u16) -> Fp16Value {
    let sign = if bits >> 15 == 1 { -1i8 } else { 1 };
    let exp_field = (bits >> 10) & 0x1f;
    let frac = bits & 0x3ff;
    match (exp_field, frac) {
        (0, 0) => Fp16Value { sign, exp_unbiased: -14, magnitude: 0, class: FpClass::Zero },
        (0, m) => Fp16Value { sign, exp_unbiased: -14, magnitude: m, class: FpClass::Subnormal },
        (31, 0) => Fp16Value { sign, exp_unbiased: 16, magnitude: 0, class: FpClass::Inf },
        (31, m) => Fp16Value { sign, exp_unbiased: 16, magnitude: m, class: FpClass::Nan },
        (e, m) => Fp16Value {
            sign,
            exp_unbiased: e as i32 - 15,
            magnitude: 0x400 | m,
            class: FpClass::Normal,
        },
    }
}

/// The multiplier-side representation: one sign per operand plus three
/// 4-bit slices of the shifted 12-bit magnitude.
///
/// `nibbles[0]` is the least significant slice (the one with the inserted
/// zero bit); `nibbles[2]` holds magnitude bits 10..7. The invariant is
/// `(nibbles[2]*2^8 + nibbles[1]*2^4 + nibbles[0]) * 2^(exp_unbiased - 11)
/// * sign == value`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecomposedOperand {
    pub sign: i8,
    pub nibbles: [u8; 3],
    pub exp_unbiased: i32,
}

impl DecomposedOperand {
    /// Nibble `i` (0 = least significant).
    pub fn nibble(&self, i: usize) -> u8 {
        self.nibbles[i]
    }
}

/// Slice a finite FP16 value into nibble operands.
pub fn decompose_fp16(v: &Fp16Value) -> Result<DecomposedOperand> {
    if !v.is_finite() {
        return Err(Error::NonFiniteInput);
    }
    let m = v.magnitude;
    Ok(DecomposedOperand {
        sign: v.sign,
        nibbles: [((m & 0x7) << 1) as u8, ((m >> 3) & 0xf) as u8, ((m >> 7) & 0xf) as u8],
        exp_unbiased: v.exp_unbiased,
    })
}

/// Integer operand widths supported by temporal decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum IntWidth {
    Int4,
    Int8,
    Int12,
}

impl IntWidth {
    pub fn bits(&self) -> u32 {
        match self {
            IntWidth::Int4 => 4,
            IntWidth::Int8 => 8,
            IntWidth::Int12 => 12,
        }
    }

    pub fn nibble_count(&self) -> u32 {
        self.bits() / 4
    }
}

/// Split an integer into little-endian nibble slices: unsigned slices in
/// [0,15] below a two's-complement top slice in [−8,7] (or [0,15] when the
/// operand is unsigned). The 5-bit signed multiplier covers both ranges.
pub fn decompose_int(value: i64, width: IntWidth, signed: bool) -> Result<Vec<i8>> {
    let bits = width.bits();
    let (lo, hi) = if signed {
        (-(1i64 << (bits - 1)), (1i64 << (bits - 1)) - 1)
    } else {
        (0, (1i64 << bits) - 1)
    };
    if value < lo || value > hi {
        return Err(Error::IntOutOfRange { value, width: bits, signed });
    }
    let k = width.nibble_count() as usize;
    let mut nibbles = Vec::with_capacity(k);
    for i in 0..k - 1 {
        nibbles.push(((value >> (4 * i)) & 0xf) as i8);
    }
    // arithmetic shift keeps the top slice two's-complement for signed
    nibbles.push((value >> (4 * (k - 1))) as i8);
    Ok(nibbles)
}

/// Rounding/storage formats for results and accumulators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FpFormat {
    Fp16,
    Fp32,
}

impl FpFormat {
    fn mant_bits(&self) -> u32 {
        match self {
            FpFormat::Fp16 => 10,
            FpFormat::Fp32 => 23,
        }
    }

    fn min_exp(&self) -> i64 {
        match self {
            FpFormat::Fp16 => -14,
            FpFormat::Fp32 => -126,
        }
    }

    fn max_exp(&self) -> i64 {
        match self {
            FpFormat::Fp16 => 15,
            FpFormat::Fp32 => 127,
        }
    }

    fn bias(&self) -> i64 {
        match self {
            FpFormat::Fp16 => 15,
            FpFormat::Fp32 => 127,
        }
    }

    fn sign_shift(&self) -> u32 {
        match self {
            FpFormat::Fp16 => 15,
            FpFormat::Fp32 => 31,
        }
    }

    fn inf_bits(&self) -> u32 {
        match self {
            FpFormat::Fp16 => 0x7c00,
            FpFormat::Fp32 => 0x7f80_0000,
        }
    }

    /// Number of bits in a stored pattern.
    pub fn pattern_bits(&self) -> u32 {
        match self {
            FpFormat::Fp16 => 16,
            FpFormat::Fp32 => 32,
        }
    }
}

/// Round an exact value to the given format, nearest-even, returning the
/// bit pattern (low 16 bits used for FP16). Overflow goes to infinity,
/// underflow to subnormals and then zero, per IEEE 754.
pub fn round_to_format(v: &ExactValue, fmt: FpFormat) -> u32 {
    if v.is_zero() {
        return 0;
    }
    let sign_bit: u32 = if v.mantissa().is_negative() { 1 << fmt.sign_shift() } else { 0 };
    let a = v.mantissa().abs();
    let e = v.exponent();
    let bitlen = a.bits() as i64;
    let top = e + bitlen - 1; // floor(log2 |v|)
    let quantum = if top >= fmt.min_exp() {
        top - fmt.mant_bits() as i64
    } else {
        fmt.min_exp() - fmt.mant_bits() as i64
    };
    if top < quantum - 1 {
        // below half the smallest quantum
        return sign_bit;
    }
    let shift = quantum - e;
    let scaled: BigInt = if shift <= 0 {
        &a << (-shift) as u64
    } else {
        let int_part: BigInt = &a >> shift as u64;
        let rem: BigInt = &a - (&int_part << shift as u64);
        let half: BigInt = BigInt::one() << (shift - 1) as u64;
        let round_up = rem > half || (rem == half && (&int_part & BigInt::one()) == BigInt::one());
        if round_up {
            int_part + 1
        } else {
            int_part
        }
    };
    let implied = BigInt::one() << fmt.mant_bits();
    if top >= fmt.min_exp() {
        let mut exp = top;
        let mut sig = scaled;
        if sig == &implied << 1u32 {
            sig >>= 1;
            exp += 1;
        }
        if exp > fmt.max_exp() {
            return sign_bit | fmt.inf_bits();
        }
        let mant: u32 = (sig - implied).try_into().expect("significand fits");
        sign_bit | (((exp + fmt.bias()) as u32) << fmt.mant_bits()) | mant
    } else if scaled == implied {
        // rounded up into the smallest normal
        sign_bit | (1 << fmt.mant_bits())
    } else {
        let mant: u32 = scaled.try_into().expect("subnormal fits");
        sign_bit | mant
    }
}

/// Round an exact value to an FP16 pattern.
pub fn round_to_fp16(v: &ExactValue) -> u16 {
    round_to_format(v, FpFormat::Fp16) as u16
}

/// Round an exact value to an FP32 pattern.
pub fn round_to_fp32(v: &ExactValue) -> u32 {
    round_to_format(v, FpFormat::Fp32)
}

/// Real value of a pattern in the given format (f64 holds both exactly).
pub fn pattern_to_f64(bits: u32, fmt: FpFormat) -> f64 {
    match fmt {
        FpFormat::Fp16 => decode_fp16(bits as u16).to_f64(),
        FpFormat::Fp32 => f32::from_bits(bits) as f64,
    }
}

/// Exact value of a finite pattern in the given format.
pub fn pattern_to_exact(bits: u32, fmt: FpFormat) -> ExactValue {
    match fmt {
        FpFormat::Fp16 => decode_fp16(bits as u16).to_exact(),
        FpFormat::Fp32 => {
            let x = f32::from_bits(bits);
            assert!(x.is_finite());
            ExactValue::from_f64(x as f64)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decode_one() {
        let v = decode_fp16(0x3c00);
        assert_eq!(v.sign, 1);
        assert_eq!(v.exp_unbiased, 0);
        assert_eq!(v.magnitude, 0b100_0000_0000);
        assert_eq!(v.class, FpClass::Normal);
    }

    #[test]
    fn decode_zero_and_smallest_subnormal() {
        let z = decode_fp16(0x0000);
        assert_eq!((z.sign, z.exp_unbiased, z.magnitude, z.class), (1, -14, 0, FpClass::Zero));
        let s = decode_fp16(0x0001);
        assert_eq!((s.sign, s.exp_unbiased, s.magnitude, s.class), (1, -14, 1, FpClass::Subnormal));
        // value check through the exact decode: 1 * 2^(-14-10) = 2^-24
        assert_eq!(s.to_exact(), ExactValue::new(1, -24));
    }

    #[test]
    fn decode_specials() {
        assert_eq!(decode_fp16(0x7c00).class, FpClass::Inf);
        assert_eq!(decode_fp16(0xfc00).class, FpClass::Inf);
        assert_eq!(decode_fp16(0xfc00).sign, -1);
        assert_eq!(decode_fp16(0x7e00).class, FpClass::Nan);
        assert_eq!(decode_fp16(0x8000).class, FpClass::Zero);
        assert_eq!(decode_fp16(0x8000).sign, -1);
    }

    #[test]
    fn decompose_examples() {
        // 1.0 -> only the implied bit
        let d = decompose_fp16(&decode_fp16(0x3c00)).unwrap();
        assert_eq!(d.nibbles, [0, 0, 8]);
        // 1 + 2^-10 (M = 1025): reconstruction (8*256 + 2) * 2^-11
        let d = decompose_fp16(&decode_fp16(0x3c01)).unwrap();
        assert_eq!(d.nibbles, [2, 0, 8]);
        let recon = (8 * 256 + 2) as f64 * 2f64.powi(-11);
        assert_eq!(recon, 1.0009765625);
        assert_eq!(decode_fp16(0x3c01).to_f64(), recon);
        // 1.5 (M = 1536)
        let d = decompose_fp16(&decode_fp16(0x3e00)).unwrap();
        assert_eq!(d.nibbles, [0, 0, 12]);
        assert_eq!((12 * 256) as f64 * 2f64.powi(-11), 1.5);
    }

    #[test]
    fn decompose_rejects_non_finite() {
        assert!(decompose_fp16(&decode_fp16(0x7c00)).is_err());
        assert!(decompose_fp16(&decode_fp16(0x7e01)).is_err());
    }

    #[test]
    fn decompose_int_examples() {
        assert_eq!(decompose_int(-2, IntWidth::Int4, true).unwrap(), vec![-2]);
        // -7*16 + 12 = -100
        assert_eq!(decompose_int(-100, IntWidth::Int8, true).unwrap(), vec![12, -7]);
        // 1*256 + 2*16 + 12 = 300
        assert_eq!(decompose_int(300, IntWidth::Int12, false).unwrap(), vec![12, 2, 1]);
    }

    #[test]
    fn decompose_int_range_checks() {
        assert!(decompose_int(8, IntWidth::Int4, true).is_err());
        assert!(decompose_int(-1, IntWidth::Int8, false).is_err());
        assert!(decompose_int(4096, IntWidth::Int12, false).is_err());
        assert_eq!(decompose_int(255, IntWidth::Int8, false).unwrap(), vec![15, 15]);
    }

    #[test]
    fn round_trivial_and_ties() {
        assert_eq!(round_to_fp16(&ExactValue::from_f64(1.0)), 0x3c00);
        // 2^-25 is half the subnormal quantum: ties-to-even gives zero
        assert_eq!(round_to_fp16(&ExactValue::new(1, -25)), 0x0000);
        // 2049 * 2^-11 sits midway between 1.0 and 1.0+ulp: even wins
        assert_eq!(round_to_fp16(&ExactValue::new(2049, -11)), 0x3c00);
        // one past the midpoint rounds up
        assert_eq!(round_to_fp16(&ExactValue::new(2049 * 2 + 1, -12)), 0x3c01);
    }

    #[test]
    fn round_overflow_and_boundaries() {
        assert_eq!(round_to_fp16(&ExactValue::from_f64(65504.0)), 0x7bff);
        // halfway to the next (unrepresentable) binade: even side is inf
        assert_eq!(round_to_fp16(&ExactValue::from_f64(65520.0)), 0x7c00);
        assert_eq!(round_to_fp16(&ExactValue::from_f64(65519.0)), 0x7bff);
        assert_eq!(round_to_fp16(&ExactValue::from_f64(-1e6)), 0xfc00);
        // largest subnormal and smallest normal
        assert_eq!(round_to_fp16(&ExactValue::new(1023, -24)), 0x03ff);
        assert_eq!(round_to_fp16(&ExactValue::new(1, -14)), 0x0400);
    }

    #[test]
    fn round_fp32_basics() {
        assert_eq!(round_to_fp32(&ExactValue::from_f64(1.0)), 1.0f32.to_bits());
        assert_eq!(round_to_fp32(&ExactValue::from_f64(-0.1)), (-0.1f32).to_bits());
        assert_eq!(round_to_fp32(&ExactValue::from_f64(3.5e38)), f32::INFINITY.to_bits());
        let tiny = ExactValue::new(1, -149);
        assert_eq!(round_to_fp32(&tiny), 0x0000_0001);
        assert_eq!(round_to_fp32(&ExactValue::new(1, -150)), 0);
    }
}
