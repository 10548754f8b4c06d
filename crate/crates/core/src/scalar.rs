//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use rustfft::FftNum;

/// Floating-point sample type: `f32` or `f64`.
///
/// Geometry and delay computation are always carried out in `f64`; only
/// signal values (datacubes, RF data, spectra, solver iterates) are generic.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + FftNum + Sum + Default + Debug + Display
{
    /// Lossy conversion from `f64` (configuration values, constants).
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 is representable in every Scalar")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("Scalar converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
