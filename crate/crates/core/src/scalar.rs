//! Floating-point abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Real scalar the estimators, gap machinery and metrics are generic over.
///
/// The associated tolerances are the numerical thresholds used by rank
/// decisions (greedy basis selection, conditioning checks). They are tuned
/// per precision: the values for `f64` are the canonical ones, `f32` gets
/// looser thresholds that make sense at single precision.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Residual norm below which a vector counts as linearly dependent.
    const RANK_TOL: f64;
    /// Largest condition number accepted before a system is called singular.
    const MAX_CONDITION: f64;

    /// Lossy conversion from `f64`.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable in scalar type")
    }

    fn of_usize(v: usize) -> Self {
        Self::from_usize(v).expect("usize representable in scalar type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    const RANK_TOL: f64 = 1e-9;
    const MAX_CONDITION: f64 = 1e12;
}

impl Scalar for f32 {
    const RANK_TOL: f64 = 1e-4;
    const MAX_CONDITION: f64 = 1e6;
}
