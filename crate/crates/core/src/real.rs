//! Scalar abstraction: the whole stack is generic over the floating type.

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating scalar the planner runs on: `f32` or `f64`.
pub trait Real:
    Float
    + NumAssign
    + FromPrimitive
    + ToPrimitive
    + std::iter::Sum
    + std::fmt::Debug
    + std::fmt::Display
    + Default
    + Send
    + Sync
    + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Shorthand for embedding an `f64` literal into the working scalar type.
#[inline]
pub fn real<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 literal representable in scalar type")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn literals_embed_in_both_lanes() {
        let a: f32 = real(0.3);
        let b: f64 = real(0.3);
        assert_eq!(a, 0.3f32);
        assert_eq!(b, 0.3f64);
    }
}
