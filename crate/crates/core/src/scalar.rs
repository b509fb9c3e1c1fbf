//! Scalar abstractions.
//!
//! Matrix and sampling code is written against [`Real`] (implemented for
//! `f32` and `f64`). The exact classical closed forms are written against
//! [`Field`], which additionally admits arbitrary-precision rationals.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Float, FloatConst, FromPrimitive, Num, NumAssign, ToPrimitive};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Floating point scalar usable by the dense complex linear algebra.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + Default
    + Sum
    + NumAssign
    + Send
    + Sync
    + 'static
{
    /// One draw from the standard real normal distribution.
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    /// Lossy conversion to `f64`, used for reporting.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Working tolerance: the requested double-precision tolerance, widened to
    /// a few ulps of this type when the type is coarser.
    #[inline]
    fn tol(requested: f64) -> Self {
        let floor = Self::epsilon() * Self::lit(64.0);
        Self::lit(requested).max(floor)
    }
}

impl Real for f32 {
    #[inline]
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }
}

impl Real for f64 {
    #[inline]
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }
}

/// Ordered field used by the exact likelihood closed forms.
///
/// `f64` gives the fast path; [`BigRational`] gives bit-exact values for
/// cross-checking the floating point results.
pub trait Field: Num + Clone + PartialOrd + Debug {
    fn from_u64(n: u64) -> Self;
    fn to_f64(&self) -> f64;

    fn from_i64(n: i64) -> Self {
        if n >= 0 {
            Self::from_u64(n as u64)
        } else {
            Self::zero() - Self::from_u64(n.unsigned_abs())
        }
    }

    fn powi(&self, exp: u64) -> Self {
        num_traits::pow::pow(self.clone(), exp as usize)
    }
}

impl Field for f64 {
    fn from_u64(n: u64) -> Self {
        n as f64
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn powi(&self, exp: u64) -> Self {
        f64::powi(*self, exp as i32)
    }
}

impl Field for BigRational {
    fn from_u64(n: u64) -> Self {
        BigRational::from_integer(BigInt::from(n))
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
}

/// Exact rational from a decimal-free ratio, e.g. `ratio(1, 2)` for ε = 0.5.
pub fn ratio(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}
