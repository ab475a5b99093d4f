use super::matrix::{dot, Matrix};
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100;

/// Thin singular value decomposition `a = u · diag(s) · vᵀ`, with `s`
/// sorted in decreasing order. For an `m×n` input, `u` is `m×r`, `v` is `n×r`
/// with `r = min(m, n)`. Columns of `u` belonging to zero singular values are
/// left at zero.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub v: Matrix,
}

impl Svd {
    pub fn nuclear_norm(&self) -> f64 {
        self.s.iter().sum()
    }

    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for i in 0..us.rows() {
            for (x, s) in us.row_mut(i).iter_mut().zip(&self.s) {
                *x *= s;
            }
        }
        us.matmul(&self.v.transpose())
            .expect("svd factors have matching shapes")
    }
}

/// One-sided (Hestenes) Jacobi SVD.
pub fn svd(a: &Matrix) -> Result<Svd> {
    if !a.is_finite() {
        return Err(Error::NonFinite("svd input"));
    }
    if a.rows() < a.cols() {
        let t = svd(&a.transpose())?;
        return Ok(Svd {
            u: t.v,
            s: t.s,
            v: t.u,
        });
    }
    let (m, n) = a.shape();
    let mut g: Vec<Vec<f64>> = (0..n).map(|j| a.column(j)).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    let mut converged = n < 2;
    for _ in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = dot(&g[p], &g[p]);
                let beta = dot(&g[q], &g[q]);
                let gamma = dot(&g[p], &g[q]);
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut g, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        converged = !rotated;
    }
    if !converged {
        return Err(Error::NotConverged {
            what: "Jacobi SVD",
            iterations: MAX_SWEEPS,
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    let sigma: Vec<f64> = g.iter().map(|col| dot(col, col).sqrt()).collect();
    order.sort_by(|&i, &j| sigma[j].total_cmp(&sigma[i]));

    let scale = sigma.iter().cloned().fold(0.0, f64::max);
    let mut u = Matrix::zeros(m, n);
    let mut vm = Matrix::zeros(n, n);
    let mut s = Vec::with_capacity(n);
    for (k, &j) in order.iter().enumerate() {
        let sj = sigma[j];
        s.push(sj);
        if sj > scale * f64::EPSILON * (m as f64) && sj > 0.0 {
            for i in 0..m {
                u[(i, k)] = g[j][i] / sj;
            }
        }
        for i in 0..n {
            vm[(i, k)] = v[j][i];
        }
    }
    Ok(Svd { u, s, v: vm })
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (left, right) = cols.split_at_mut(q);
    let (cp, cq) = (&mut left[p], &mut right[0]);
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (a, b) = (*x, *y);
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}
