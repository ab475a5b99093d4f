//! Dense row-major matrices, a seeded random stream and a Jacobi SVD.
//!
//! Everything is `f64`; the invariance checks elsewhere in the crate are
//! asserted at 1e-12 relative, which single precision cannot reach.

mod matrix;
mod rng;
mod svd;

pub use matrix::{dot, norm, Matrix};
pub use rng::Rng;
pub use svd::{svd, Svd};
