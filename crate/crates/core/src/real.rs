use std::fmt;

/// Scalar type the whole crate is generic over: `f32` or `f64`.
///
/// Everything needed is bundled here so downstream signatures stay short.
/// `cst` converts literal constants; it is lossy for `f32` in the usual way.
pub trait Real:
    num_traits::Float
    + num_traits::FromPrimitive
    + fmt::Debug
    + fmt::Display
    + fmt::LowerExp
    + std::iter::Sum
    + Send
    + Sync
    + 'static
{
    fn cst(x: f64) -> Self {
        Self::from_f64(x).expect("constant not representable")
    }

    fn to_f64_lossy(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).expect("scalar not representable as f64")
    }
}

impl<T> Real for T where
    T: num_traits::Float
        + num_traits::FromPrimitive
        + fmt::Debug
        + fmt::Display
        + fmt::LowerExp
        + std::iter::Sum
        + Send
        + Sync
        + 'static
{
}
