use serde::{Deserialize, Serialize};

use super::library::{features, sample_library, LibraryScheme};
use super::solver::{solve_l1_from, SolverOptions, SquaredLoss};
use crate::error::{Error, Result};
use crate::model::{Gradients, NetParams};
use crate::numerics::{Matrix, Rng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EquivalenceConfig {
    pub hidden: usize,
    pub lambda: f64,
    /// Equiangular grid sizes, solved in the given order.
    pub library_sizes: Vec<usize>,
    pub restarts: usize,
    pub local_iters: usize,
    pub local_step: f64,
    pub init_sigma: f64,
    pub solver: SolverOptions,
}

impl Default for EquivalenceConfig {
    fn default() -> Self {
        EquivalenceConfig {
            hidden: 11,
            lambda: 0.1,
            library_sizes: vec![16, 32, 64, 128, 256, 512],
            restarts: 10,
            local_iters: 100_000,
            local_step: 0.003,
            init_sigma: 0.5,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LibraryPoint {
    pub m: usize,
    pub objective: f64,
    pub kkt_residual: f64,
    pub converged: bool,
    /// `objective - j_local`.
    pub gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    /// Weight-decay objective of the best locally trained network.
    pub j_weight_decay: f64,
    /// The same network after balancing, still in weight-decay form.
    pub j_weight_decay_balanced: f64,
    /// ℓ1 form of the balanced network with unit-norm hidden weights.
    pub j_local: f64,
    /// `|j_weight_decay_balanced - j_local| / j_local`.
    pub identity_rel_error: f64,
    pub local_grad_norm: f64,
    pub points: Vec<LibraryPoint>,
}

/// Squared-loss fit `½ Σ_t (y_t - f(x_t))²`.
fn fit(p: &NetParams, x: &Matrix, y: &[f64]) -> Result<f64> {
    let out = p.forward_batch(x)?;
    Ok(out
        .as_slice()
        .iter()
        .zip(y)
        .map(|(f, y)| 0.5 * (y - f) * (y - f))
        .sum())
}

fn weight_decay_objective(p: &NetParams, x: &Matrix, y: &[f64], lambda: f64) -> Result<f64> {
    Ok(fit(p, x, y)? + lambda * p.half_squared_norm())
}

/// Objective with penalty `λ Σ_h |v_h|`, meaningful for unit-norm `u_h`.
fn l1_objective(p: &NetParams, x: &Matrix, y: &[f64], lambda: f64) -> Result<f64> {
    let l1: f64 = p.v().as_slice().iter().map(|v| v.abs()).sum();
    Ok(fit(p, x, y)? + lambda * l1)
}

fn objective_and_gradient(
    p: &NetParams,
    x: &Matrix,
    y: &[f64],
    lambda: f64,
) -> Result<(f64, Gradients)> {
    let mut g = Gradients::zeros_like(p);
    let mut value = lambda * p.half_squared_norm();
    for (xt, &yt) in x.row_iter().zip(y) {
        let f = p.forward(xt)?[0];
        value += 0.5 * (yt - f) * (yt - f);
        p.accumulate_backward(xt, &[f - yt], 1.0, &mut g)?;
    }
    g.du.add_scaled(lambda, p.u())?;
    g.dv.add_scaled(lambda, p.v())?;
    Ok((value, g))
}

fn grad_norm(g: &Gradients) -> f64 {
    (g.du.frobenius_sq() + g.dv.frobenius_sq()).sqrt()
}

/// Full-batch gradient descent on the weight-decay objective with step
/// `step0 / sqrt(1 + t/10⁴)`. The objective has kinks wherever a unit's
/// hyperplane meets a sample, and optimal units tend to sit on them, so a
/// slowly decaying step gets much closer than line-search descent, which
/// stalls there. Returns the final network, objective and gradient norm.
fn local_search(
    mut p: NetParams,
    x: &Matrix,
    y: &[f64],
    lambda: f64,
    iters: usize,
    step0: f64,
) -> Result<(NetParams, f64, f64)> {
    for t in 0..iters {
        let (value, g) = objective_and_gradient(&p, x, y, lambda)?;
        if !value.is_finite() || !g.is_finite() {
            return Err(Error::Diverged {
                epoch: t,
                message: "local search produced a non-finite objective".into(),
            });
        }
        let step = step0 / (1.0 + t as f64 / 1e4).sqrt();
        let (mut u, mut v) = p.into_parts();
        u.add_scaled(-step, &g.du)?;
        v.add_scaled(-step, &g.dv)?;
        p = NetParams::new(u, v)?;
    }
    let (value, g) = objective_and_gradient(&p, x, y, lambda)?;
    if !value.is_finite() {
        return Err(Error::Diverged {
            epoch: iters,
            message: "local search produced a non-finite objective".into(),
        });
    }
    Ok((p, value, grad_norm(&g)))
}

/// Trains a weight-decay network by local search and compares it with the
/// ℓ1 convex network solved on successively finer equiangular libraries.
/// Inputs must be two-dimensional and `hidden` must exceed the sample count.
pub fn equivalence_check(
    x: &Matrix,
    y: &[f64],
    cfg: &EquivalenceConfig,
    rng: &mut Rng,
) -> Result<EquivalenceReport> {
    let n = x.rows();
    Error::check_dim("targets", n, y.len())?;
    Error::check_dim("input dimension", 2, x.cols())?;
    if cfg.hidden <= n {
        return Err(Error::InvalidArgument(format!(
            "hidden = {} must exceed the sample count {n}",
            cfg.hidden
        )));
    }
    if !(cfg.lambda > 0.0) || !(cfg.local_step > 0.0) {
        return Err(Error::InvalidArgument(
            "lambda and local_step must be > 0".into(),
        ));
    }

    let mut best: Option<(NetParams, f64, f64)> = None;
    for r in 0..cfg.restarts.max(1) {
        let mut local = rng.derive(&[r as u64]);
        let init = NetParams::init(2, cfg.hidden, 1, cfg.init_sigma, &mut local)?;
        let run = local_search(init, x, y, cfg.lambda, cfg.local_iters, cfg.local_step)?;
        if best.as_ref().is_none_or(|b| run.1 < b.1) {
            best = Some(run);
        }
    }
    let (trained, j_weight_decay, local_grad_norm) = best.expect("at least one restart");

    let balanced = trained.balance()?;
    let unit = balanced.normalize_to_unit()?;
    let j_weight_decay_balanced = weight_decay_objective(&balanced, x, y, cfg.lambda)?;
    let j_local = l1_objective(&unit, x, y, cfg.lambda)?;
    let identity_rel_error =
        (j_weight_decay_balanced - j_local).abs() / j_local.abs().max(f64::MIN_POSITIVE);

    let mut points = Vec::with_capacity(cfg.library_sizes.len());
    let mut previous: Option<(usize, Vec<f64>)> = None;
    for &m in &cfg.library_sizes {
        let lib = sample_library(2, m, LibraryScheme::GridSphere2d, rng)?;
        let phi = features(&lib, x)?;
        // a coarser grid whose size divides m is a subset; start from its solution
        let mut v0 = vec![0.0; m];
        if let Some((pm, pv)) = &previous {
            if m % pm == 0 {
                let stride = m / pm;
                for (i, &vi) in pv.iter().enumerate() {
                    v0[i * stride] = vi;
                }
            }
        }
        let sol = solve_l1_from(&phi, y, cfg.lambda, &SquaredLoss, &cfg.solver, &v0)?;
        points.push(LibraryPoint {
            m,
            objective: sol.objective,
            kkt_residual: sol.kkt_residual,
            converged: sol.converged,
            gap: sol.objective - j_local,
        });
        previous = Some((m, sol.v));
    }

    Ok(EquivalenceReport {
        j_weight_decay,
        j_weight_decay_balanced,
        j_local,
        identity_rel_error,
        local_grad_norm,
        points,
    })
}
