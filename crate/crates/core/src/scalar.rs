use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point scalar the engine is generic over: `f32` or `f64`.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal. Every literal used by the engine is representable in `f32`.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal converts to every Real")
    }

    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count converts to every Real")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("Real converts to f64")
    }

    /// Tolerance for unit-norm and geometric equality checks.
    ///
    /// `1e-9` for `f64`; widened to a few ulps for narrower types.
    #[inline]
    fn geom_tol() -> Self {
        Self::lit(1e-9).max(Self::epsilon() * Self::lit(16.0))
    }

    /// Snaps a value in `[0, 1]` onto a grid of spacing `sqrt(eps)` so that
    /// quantities that are equal in exact arithmetic compare equal.
    #[inline]
    fn snap_unit(self) -> Self {
        let grid = Self::epsilon().sqrt();
        (self / grid).round() * grid
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snap_identifies_ulp_neighbours() {
        let a = 0.1f64 + 0.2;
        let b = 0.3f64;
        assert_ne!(a, b);
        assert_eq!(a.snap_unit(), b.snap_unit());
        assert_eq!(1.0f64.snap_unit(), 1.0);
        assert_eq!(0.0f64.snap_unit(), 0.0);
    }

    #[test]
    fn geom_tol_widens_for_f32() {
        assert_eq!(f64::geom_tol(), 1e-9);
        assert!(f32::geom_tol() > 1e-9);
    }
}
