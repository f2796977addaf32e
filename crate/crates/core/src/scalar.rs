//! Scalar abstraction for the numeric kernels.
//!
//! Everything downstream of the data loaders computes in `S: Scalar`; the
//! experiments instantiate `f64` (gradient-check tolerances assume it), and
//! `f32` is available for quick smoke runs.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::Float;

pub trait Scalar:
    Float + AddAssign + SubAssign + MulAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from `f64`; used for constants and RNG output.
    fn from_f64(x: f64) -> Self {
        <Self as num_traits::NumCast>::from(x).expect("finite f64 converts to any Scalar")
    }

    /// Widening (or identity) conversion to `f64`. Named apart from
    /// `ToPrimitive::to_f64` to keep method resolution unambiguous.
    fn as_f64(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).expect("Scalar converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
