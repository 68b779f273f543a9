//! Floating point abstraction for cost arithmetic.
//!
//! Resources, capacities, control values and mesh weights are exact
//! integers everywhere in this crate. Only edge weights, objective values
//! and Lagrange multipliers go through [`Scalar`].

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssignOps};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real number type used for costs.
pub trait Scalar:
    Float
    + FromPrimitive
    + NumAssignOps
    + Sum
    + Default
    + Debug
    + Display
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Absolute tolerance used wherever a strict inequality between
    /// accumulated costs has to be decided.
    const TOLERANCE: Self;

    #[inline]
    fn from_int(v: i64) -> Self {
        <Self as FromPrimitive>::from_i64(v).unwrap()
    }

    #[inline]
    fn from_uint(v: u64) -> Self {
        <Self as FromPrimitive>::from_u64(v).unwrap()
    }

    #[inline]
    fn lit(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).unwrap()
    }

    #[inline]
    fn as_f64(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).unwrap()
    }

    #[inline]
    fn two() -> Self {
        Self::one() + Self::one()
    }
}

impl Scalar for f64 {
    const TOLERANCE: Self = 1e-9;
}

impl Scalar for f32 {
    const TOLERANCE: Self = 1e-4;
}
