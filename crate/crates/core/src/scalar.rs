//! Floating-point abstraction shared by every numerical module.
//!
//! All grids, Hamiltonians, operators and states are generic over [`Scalar`],
//! implemented for `f32` and `f64`. The conservation tolerances quoted in the
//! acceptance suite assume `f64`.

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign};
use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::str::FromStr;

pub trait Scalar:
    'static
    + Float
    + FloatConst
    + FromPrimitive
    + NumAssign
    + Sum
    + Default
    + Send
    + Sync
    + Debug
    + Display
    + LowerExp
    + FromStr
{
    /// Converts an `f64` literal; infallible for the supported float types.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("finite float converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Pairwise (tree) summation with a fixed split order.
///
/// The reduction order depends only on the slice length, so repeated runs
/// produce bit-identical totals.
pub fn pairwise_sum<T: Scalar>(xs: &[T]) -> T {
    const LEAF: usize = 32;
    if xs.len() <= LEAF {
        let mut s = T::zero();
        for &x in xs {
            s += x;
        }
        return s;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Relative error with a floor on the reference magnitude.
pub fn relative_error<T: Scalar>(value: T, reference: T) -> T {
    let floor = T::lit(1e-300).max(T::min_positive_value());
    (value - reference).abs() / reference.abs().max(floor)
}
