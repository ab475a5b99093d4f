//! A desk-scale laboratory for single-hidden-layer ReLU networks.
//!
//! The crate covers the whole loop of the network-size experiments: a bias-free
//! two-layer ReLU model trained by mini-batch SGD with momentum on a truncated
//! soft-max loss, dataset ingestion and mutilation (censoring, label noise), and a
//! sweep harness over hidden-layer sizes. Alongside it live the norm-based
//! views of the same model: the weight-decay/ℓ1 rescaling, a finite-library convex
//! network solver, the trace-norm factorization identity, and a compiler from
//! intersections of halfspaces to ReLU networks.

pub mod convexnn;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod hardness;
pub mod loss;
pub mod model;
pub mod numerics;
pub mod optim;
pub mod sweep;

pub use error::{Error, Result};
pub use numerics::{Matrix, Rng};
