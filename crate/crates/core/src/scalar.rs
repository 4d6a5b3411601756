//! Carrier scalar abstraction.
//!
//! Emulated low-precision values live inside a wider binary "carrier" type.
//! Everything in this crate is generic over the carrier so that the same
//! code runs in `f64` (the default, exact for fp16/bf16) or in `f32`.

use std::fmt::{Debug, Display, LowerExp};
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use rand::distr::uniform::SampleUniform;
use rand::Rng;

/// A binary IEEE carrier type.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + SampleUniform
    + Debug
    + Display
    + LowerExp
    + FromStr
    + Default
    + Send
    + Sync
    + 'static
{
    /// Significand bits including the implicit bit.
    const MANTISSA_DIGITS: u32;
    /// Exponent of the smallest positive normal value.
    const MIN_NORMAL_EXP: i32;
    /// Exponent of the largest finite binade.
    const MAX_FINITE_EXP: i32;

    /// Exponent of the smallest positive subnormal value.
    const MIN_SUBNORMAL_EXP: i32 = Self::MIN_NORMAL_EXP - Self::MANTISSA_DIGITS as i32 + 1;

    /// Exactly `2^k`; zero or infinity outside the carrier's range.
    fn pow2(k: i32) -> Self;

    /// `floor(log2(|self|))` for finite nonzero values (subnormals included).
    fn binade(self) -> i32;

    /// One uniform variate in `[0, 1)`.
    fn unit_draw<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Converts an `f64` literal, rounding to nearest when narrowing.
    fn cast(v: f64) -> Self;

    fn count(n: usize) -> Self {
        Self::cast(n as f64)
    }

    /// `self * 2^k`, exact whenever the result is representable.
    fn ldexp(self, k: i32) -> Self {
        if (Self::MIN_SUBNORMAL_EXP..=Self::MAX_FINITE_EXP).contains(&k) {
            self * Self::pow2(k)
        } else {
            let half = k / 2;
            self * Self::pow2(half) * Self::pow2(k - half)
        }
    }
}

macro_rules! impl_scalar {
    ($t:ty, $bits:ty, $frac_bits:expr, $bias:expr) => {
        impl Scalar for $t {
            const MANTISSA_DIGITS: u32 = <$t>::MANTISSA_DIGITS;
            const MIN_NORMAL_EXP: i32 = <$t>::MIN_EXP - 1;
            const MAX_FINITE_EXP: i32 = <$t>::MAX_EXP - 1;

            #[inline]
            fn pow2(k: i32) -> Self {
                if k > Self::MAX_FINITE_EXP {
                    <$t>::INFINITY
                } else if k >= Self::MIN_NORMAL_EXP {
                    <$t>::from_bits(((k + $bias) as $bits) << $frac_bits)
                } else if k >= Self::MIN_SUBNORMAL_EXP {
                    <$t>::from_bits((1 as $bits) << (k - Self::MIN_SUBNORMAL_EXP))
                } else {
                    0.0
                }
            }

            #[inline]
            fn binade(self) -> i32 {
                let bits = self.to_bits();
                let field = ((bits >> $frac_bits) & ((1 << (<$bits>::BITS - 1 - $frac_bits)) - 1)) as i32;
                if field == 0 {
                    let frac = bits & (((1 as $bits) << $frac_bits) - 1);
                    Self::MIN_SUBNORMAL_EXP + (<$bits>::BITS - 1 - frac.leading_zeros()) as i32
                } else {
                    field - $bias
                }
            }

            #[inline]
            fn unit_draw<R: Rng + ?Sized>(rng: &mut R) -> Self {
                rng.random::<$t>()
            }

            #[inline]
            fn cast(v: f64) -> Self {
                v as $t
            }
        }
    };
}

impl_scalar!(f64, u64, 52, 1023);
impl_scalar!(f32, u32, 23, 127);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pow2_matches_powi_in_normal_range() {
        for k in -1022..=1023 {
            assert_eq!(f64::pow2(k), 2f64.powi(k), "k = {k}");
        }
        for k in -126..=127 {
            assert_eq!(f32::pow2(k), 2f32.powi(k), "k = {k}");
        }
    }

    #[test]
    fn pow2_subnormal_and_out_of_range() {
        assert_eq!(f64::pow2(-1074), f64::from_bits(1));
        assert_eq!(f32::pow2(-149), f32::from_bits(1));
        assert_eq!(f64::pow2(-1075), 0.0);
        assert_eq!(f64::pow2(1024), f64::INFINITY);
    }

    #[test]
    fn binade_of_normals_and_subnormals() {
        assert_eq!(1.0f64.binade(), 0);
        assert_eq!(1.999f64.binade(), 0);
        assert_eq!(2.0f64.binade(), 1);
        assert_eq!(0.75f64.binade(), -1);
        assert_eq!((-3.0f64).binade(), 1);
        assert_eq!(f64::from_bits(1).binade(), -1074);
        assert_eq!(f64::from_bits(3).binade(), -1073);
        assert_eq!(f32::from_bits(1).binade(), -149);
        assert_eq!(f32::MAX.binade(), 127);
    }

    #[test]
    fn ldexp_splits_large_shifts() {
        let tiny = f64::pow2(-1070);
        assert_eq!(tiny.ldexp(1070), 1.0);
        assert_eq!(3.0f64.ldexp(-1073), f64::from_bits(3) * 2.0);
    }
}
