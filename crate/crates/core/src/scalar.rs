//! Scalar abstraction shared by the tensor, model and optimizer code.
//!
//! Everything numeric in the training path is generic over [`Scalar`], which
//! is implemented for `f32` and `f64`. The accountant is not: it needs the
//! dynamic range of `f64` for its log-space sums and is written against it
//! directly.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`; used for constants and sampled noise.
    fn from_f64_lossy(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("f64 is representable in every Scalar")
    }

    fn to_f64_lossy(self) -> f64 {
        ToPrimitive::to_f64(&self).expect("every Scalar converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
