//! Exact dyadic arithmetic used by the reference oracle.
//!
//! Every finite FP16/FP32 value and every intermediate of an inner product
//! over such values is a dyadic rational `m * 2^e`. Summation here is done
//! without any width limit, so it realizes the arbitrarily-wide-adder
//! reference that the truncating datapath is measured against.

use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive, Zero};
use std::cmp::Ordering;

/// An exact dyadic rational: `mantissa * 2^exponent`.
///
/// Canonical form: the mantissa is odd, or zero with exponent zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExactValue {
    mantissa: BigInt,
    exponent: i64,
}

impl ExactValue {
    pub fn zero() -> Self {
        ExactValue { mantissa: BigInt::zero(), exponent: 0 }
    }

    /// Build `mantissa * 2^exponent` and canonicalize.
    pub fn new<M: Into<BigInt>>(mantissa: M, exponent: i64) -> Self {
        let mut v = ExactValue { mantissa: mantissa.into(), exponent };
        v.canonicalize();
        v
    }

    fn canonicalize(&mut self) {
        if self.mantissa.is_zero() {
            self.exponent = 0;
            return;
        }
        let shift = self.mantissa.trailing_zeros().unwrap_or(0);
        if shift > 0 {
            self.mantissa >>= shift;
            self.exponent += shift as i64;
        }
    }

    /// Exact conversion from an `f64` (every finite double is dyadic).
    ///
    /// Panics on INF/NaN; callers gate non-finite values before this point.
    pub fn from_f64(x: f64) -> Self {
        assert!(x.is_finite(), "non-finite f64 has no dyadic value");
        if x == 0.0 {
            return Self::zero();
        }
        let bits = x.to_bits();
        let sign = if bits >> 63 == 1 { -1i64 } else { 1 };
        let exp_field = ((bits >> 52) & 0x7ff) as i64;
        let frac = (bits & ((1u64 << 52) - 1)) as i64;
        let (mant, exp) = if exp_field == 0 {
            (frac, -1074)
        } else {
            (frac | (1i64 << 52), exp_field - 1075)
        };
        Self::new(BigInt::from(sign * mant), exp)
    }

    pub fn is_zero(&self) -> bool {
        self.mantissa.is_zero()
    }

    pub fn mantissa(&self) -> &BigInt {
        &self.mantissa
    }

    pub fn exponent(&self) -> i64 {
        self.exponent
    }

    pub fn neg(&self) -> Self {
        ExactValue { mantissa: -&self.mantissa, exponent: self.exponent }
    }

    pub fn abs(&self) -> Self {
        ExactValue { mantissa: self.mantissa.abs(), exponent: self.exponent }
    }

    pub fn add(&self, other: &Self) -> Self {
        if self.is_zero() {
            return other.clone();
        }
        if other.is_zero() {
            return self.clone();
        }
        let exp = self.exponent.min(other.exponent);
        let a = &self.mantissa << (self.exponent - exp) as u64;
        let b = &other.mantissa << (other.exponent - exp) as u64;
        Self::new(a + b, exp)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &Self) -> Self {
        Self::new(&self.mantissa * &other.mantissa, self.exponent + other.exponent)
    }

    /// Multiply by a power of two (exponent shift).
    pub fn scale_pow2(&self, k: i64) -> Self {
        if self.is_zero() {
            return Self::zero();
        }
        ExactValue { mantissa: self.mantissa.clone(), exponent: self.exponent + k }
    }

    pub fn cmp_value(&self, other: &Self) -> Ordering {
        let diff = self.sub(other);
        if diff.mantissa.is_zero() {
            Ordering::Equal
        } else if diff.mantissa.is_negative() {
            Ordering::Less
        } else {
            Ordering::Greater
        }
    }

    /// Nearest `f64`, for reporting only. Exact comparisons never go
    /// through this.
    pub fn to_f64(&self) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        // Reduce to ~64 significant bits first so that huge exponents do
        // not overflow the intermediate conversion.
        let bits = self.mantissa.bits() as i64;
        let drop = (bits - 64).max(0);
        let m = (&self.mantissa >> drop as u64).to_f64().unwrap_or(f64::NAN);
        let e = self.exponent + drop;
        if e > 2000 {
            return if m > 0.0 { f64::INFINITY } else { f64::NEG_INFINITY };
        }
        if e < -2000 {
            return 0.0;
        }
        m * 2f64.powi(e as i32)
    }
}

impl std::ops::Neg for ExactValue {
    type Output = ExactValue;
    fn neg(self) -> ExactValue {
        ExactValue { mantissa: -self.mantissa, exponent: self.exponent }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_form() {
        let v = ExactValue::new(BigInt::from(12), 0);
        assert_eq!(v.mantissa(), &BigInt::from(3));
        assert_eq!(v.exponent(), 2);
        let z = ExactValue::new(BigInt::from(0), 99);
        assert!(z.is_zero());
        assert_eq!(z.exponent(), 0);
    }

    #[test]
    fn add_aligns_exponents() {
        // 1.5 + 0.25 = 1.75 = 7 * 2^-2
        let a = ExactValue::new(BigInt::from(3), -1);
        let b = ExactValue::new(BigInt::from(1), -2);
        let s = a.add(&b);
        assert_eq!(s, ExactValue::new(BigInt::from(7), -2));
    }

    #[test]
    fn mul_and_scale() {
        let a = ExactValue::new(BigInt::from(3), -1); // 1.5
        let b = ExactValue::new(BigInt::from(1), 1); // 2.0
        assert_eq!(a.mul(&b), ExactValue::new(BigInt::from(3), 0)); // 3.0
        assert_eq!(a.scale_pow2(2).to_f64(), 6.0);
    }

    #[test]
    fn from_f64_exact() {
        assert_eq!(ExactValue::from_f64(0.375), ExactValue::new(BigInt::from(3), -3));
        assert_eq!(ExactValue::from_f64(-2.0), ExactValue::new(BigInt::from(-1), 1));
        assert_eq!(ExactValue::from_f64(0.0), ExactValue::zero());
        // smallest positive subnormal double
        let tiny = f64::from_bits(1);
        assert_eq!(ExactValue::from_f64(tiny), ExactValue::new(BigInt::from(1), -1074));
    }

    #[test]
    fn ordering() {
        let a = ExactValue::from_f64(1.0);
        let b = ExactValue::from_f64(1.0 + 2f64.powi(-50));
        assert_eq!(a.cmp_value(&b), Ordering::Less);
        assert_eq!(b.cmp_value(&a), Ordering::Greater);
        assert_eq!(a.cmp_value(&a.clone()), Ordering::Equal);
    }

    #[test]
    fn to_f64_roundtrip_on_representables() {
        for x in [1.0, -0.5, 1234.5678, 2f64.powi(-30), -65504.0] {
            assert_eq!(ExactValue::from_f64(x).to_f64(), x);
        }
    }
}
