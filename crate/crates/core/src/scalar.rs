//! Scalar abstractions: a floating-point trait for the field numerics and a
//! ring trait for polynomial/combinatorial algebra.
//!
//! The numerical layers (grids, kernels, solvers, estimators) are generic over
//! [`Real`], implemented for `f32` and `f64`. The symbolic layers (polynomials,
//! Hermite/Wick algebra) are generic over [`Ring`], which is additionally
//! implemented by exact rationals so identities can be checked without rounding.

use num::BigRational;
use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, One, ToPrimitive, Zero};
use rand_distr::{Distribution, StandardNormal};
use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::Neg;

/// Floating-point scalar for grid fields, kernels and solvers: `f32` or `f64`.
///
/// The FFT bound comes from `rustfft`; the sampling bound lets white-noise
/// generation draw standard normals directly in the target precision.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + rustfft::FftNum
    + Display
    + Send
    + Sync
    + 'static
where
    StandardNormal: Distribution<Self>,
{
    /// Lossless-enough conversion from `f64` literals and precomputed tables.
    fn from_f64_lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in Real type")
    }

    /// Conversion to `f64` for reporting and serialization.
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("Real value representable as f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Commutative ring scalar for polynomial and Wick/Hermite algebra.
///
/// Implemented for floats and for [`BigRational`] (exact mode). Division is
/// deliberately absent: every identity in this crate is polynomial.
pub trait Ring:
    Clone
    + Debug
    + PartialEq
    + Zero
    + One
    + Neg<Output = Self>
    + NumAssign
    + Sum
    + Send
    + Sync
    + 'static
{
    /// Embed a (small) signed integer, e.g. binomial coefficients and the
    /// `N − 1` factors of the Hermite recursion.
    fn from_int(n: i64) -> Self;
}

impl Ring for f64 {
    fn from_int(n: i64) -> Self {
        n as f64
    }
}

impl Ring for f32 {
    fn from_int(n: i64) -> Self {
        n as f32
    }
}

impl Ring for BigRational {
    fn from_int(n: i64) -> Self {
        BigRational::from_integer(n.into())
    }
}
