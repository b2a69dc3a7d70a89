//! Scalar abstraction used throughout the crate.
//!
//! All numeric code is generic over [`Float`], which bundles the `num-traits`
//! float operations with the conversion, formatting and serde bounds the
//! library needs. `f32` and `f64` are the intended instantiations; the crate
//! root exports `*64` aliases for the common `f64` case.

use std::fmt::{Debug, Display};

use num_traits::{FromPrimitive, NumAssignOps, NumCast};
use serde::{de::DeserializeOwned, Serialize};

pub trait Float:
    num_traits::Float
    + FromPrimitive
    + NumAssignOps
    + std::iter::Sum
    + Debug
    + Display
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Infallible cast from another numeric type; panics only on values that
    /// do not fit, which never happens for the in-range constants and counts
    /// this crate converts.
    fn cast<U: NumCast>(u: U) -> Self {
        NumCast::from(u).expect("numeric cast out of range")
    }
}

impl Float for f32 {}
impl Float for f64 {}

/// Sorts a slice of floats ascending. Callers guarantee the values are
/// finite; NaN would make the requested order meaningless.
pub(crate) fn sort_floats<T: Float>(xs: &mut [T]) {
    xs.sort_unstable_by(|a, b| a.partial_cmp(b).expect("NaN in sort"));
}
