//! Convex neural networks over a finite library of unit-norm hidden units.
//!
//! Hidden units are not learned but selected: the prediction is
//! `Σ_i v_i · max(⟨u_i, x⟩, 0)` over a fixed library `{u_i}` with an ℓ1
//! penalty on `v`. With squared loss this is a lasso on the ReLU feature
//! matrix, solved here by accelerated proximal gradient with certified
//! optimality. The module also compares that solution against local search
//! on a weight-decay network, and hosts the trace-norm factorization check
//! for the linear-activation analogue.

mod equivalence;
mod library;
mod solver;
mod tracenorm;

pub use equivalence::{equivalence_check, EquivalenceConfig, EquivalenceReport, LibraryPoint};
pub use library::{features, sample_library, LibraryScheme, UnitLibrary};
pub use solver::{
    kkt_residual, soft_threshold, solve_l1, solve_l1_features, solve_l1_from, ConvexNNSolution,
    SmoothLoss, SolverOptions, SquaredLoss, TruncatedLogistic,
};
pub use tracenorm::{balanced_factorization, factorization_penalty, trace_norm};
