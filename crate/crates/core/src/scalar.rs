//! Floating-point scalar abstraction shared by every numeric routine.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, NumCast, ToPrimitive};

/// Real scalar used for flow components, angles and losses: `f32` or `f64`.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumCast
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + crate::grid::Cell
    + 'static
{
    /// Lossy conversion from `f64`; exact for values representable in `Self`.
    fn of(v: f64) -> Self {
        <Self as NumCast>::from(v).expect("f64 converts to every Scalar")
    }

    /// Widening conversion used by metrics and logs.
    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).expect("Scalar converts to f64")
    }

    fn two_pi() -> Self {
        Self::PI() + Self::PI()
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
