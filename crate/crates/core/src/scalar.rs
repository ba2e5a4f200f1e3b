//! Floating-point scalar abstraction shared by every numeric routine.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Real scalar usable by the solvers: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Send + Sync + 'static
{
    /// Converts an `f64` literal. Panics only for types that cannot represent
    /// ordinary finite constants, which no implementor does.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("finite literal")
    }

    /// Converts a count.
    #[inline]
    fn count(v: usize) -> Self {
        Self::from_usize(v).expect("finite count")
    }

    /// A tolerance of `v`, floored at a small multiple of machine epsilon so
    /// that thresholds tuned for `f64` stay meaningful for `f32`.
    #[inline]
    fn tolerance(v: f64) -> Self {
        Self::lit(v).max(Self::epsilon() * Self::lit(1e3))
    }

    /// Largest Gram condition number the solvers accept.
    #[inline]
    fn max_condition() -> Self {
        Self::lit(1e12).min(Self::one() / (Self::epsilon() * Self::lit(1e2)))
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
