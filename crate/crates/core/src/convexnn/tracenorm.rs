//! Trace norm of a linear map and its variational form over factorizations
//! `W = V·Uᵀ`, the linear-activation analogue of weight decay.

use crate::error::{Error, Result};
use crate::numerics::{svd, Matrix};

/// Sum of singular values.
pub fn trace_norm(w: &Matrix) -> Result<f64> {
    Ok(svd(w)?.nuclear_norm())
}

/// `½(‖U‖_F² + ‖V‖_F²)` for `U` of shape d×r and `V` of shape k×r.
pub fn factorization_penalty(u: &Matrix, v: &Matrix) -> Result<f64> {
    Error::check_dim("factorization inner dimension", u.cols(), v.cols())?;
    if !u.is_finite() || !v.is_finite() {
        return Err(Error::NonFinite("factorization"));
    }
    Ok(0.5 * (u.frobenius_sq() + v.frobenius_sq()))
}

/// The factorization `W = V·Uᵀ` with `U = Q√Σ`, `V = P√Σ` from `W = PΣQᵀ`,
/// whose penalty equals the trace norm.
pub fn balanced_factorization(w: &Matrix) -> Result<(Matrix, Matrix)> {
    let dec = svd(w)?;
    let roots: Vec<f64> = dec.s.iter().map(|s| s.sqrt()).collect();
    let scale = |m: &Matrix| Matrix::from_fn(m.rows(), m.cols(), |i, j| m[(i, j)] * roots[j]);
    Ok((scale(&dec.v), scale(&dec.u)))
}
