use serde::{Deserialize, Serialize};

use super::library::{features, UnitLibrary};
use crate::error::{Error, Result};
use crate::loss::{f_trunc, f_trunc_derivative};
use crate::numerics::{dot, Matrix};

/// Per-example smooth loss `L(prediction, target)`.
pub trait SmoothLoss: Sync {
    fn value(&self, prediction: f64, target: f64) -> f64;
    fn derivative(&self, prediction: f64, target: f64) -> f64;
    /// `value(p + dp, y) - value(p, y)`; implementations should keep this
    /// accurate when `dp` is tiny relative to `p`.
    fn value_change(&self, p: f64, dp: f64, target: f64) -> f64 {
        self.value(p + dp, target) - self.value(p, target)
    }
    /// Upper bound on the second derivative in the prediction.
    fn curvature_bound(&self) -> f64;
}

/// `½(p - y)²`.
#[derive(Clone, Copy, Debug, Default)]
pub struct SquaredLoss;

impl SmoothLoss for SquaredLoss {
    fn value(&self, p: f64, y: f64) -> f64 {
        0.5 * (p - y) * (p - y)
    }

    fn derivative(&self, p: f64, y: f64) -> f64 {
        p - y
    }

    fn value_change(&self, p: f64, dp: f64, y: f64) -> f64 {
        dp * (p - y + 0.5 * dp)
    }

    fn curvature_bound(&self) -> f64 {
        1.0
    }
}

/// Two-class truncated logistic loss `ln(1 + f(-y·p))` for labels `y = ±1`.
#[derive(Clone, Copy, Debug, Default)]
pub struct TruncatedLogistic;

impl SmoothLoss for TruncatedLogistic {
    fn value(&self, p: f64, y: f64) -> f64 {
        let z = -y * p;
        if z > 30.0 {
            z + (-z).exp().ln_1p()
        } else {
            f_trunc(z).ln_1p()
        }
    }

    fn derivative(&self, p: f64, y: f64) -> f64 {
        let z = -y * p;
        let slope = if z > 30.0 {
            1.0 / (1.0 + (-z).exp())
        } else {
            f_trunc_derivative(z) / (1.0 + f_trunc(z))
        };
        -y * slope
    }

    fn curvature_bound(&self) -> f64 {
        0.25
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Target KKT residual.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-9,
            max_iter: 100_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvexNNSolution {
    /// Signed top-layer weight of each library unit.
    pub v: Vec<f64>,
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after every accepted iterate, starting with the initial
    /// point, accumulated from the computed changes.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub objective_trace: Vec<f64>,
}

pub fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Largest violation of the ℓ1 optimality conditions, given the gradient of
/// the smooth part at `v`.
pub fn kkt_residual(grad: &[f64], v: &[f64], lambda: f64) -> f64 {
    grad.iter()
        .zip(v)
        .map(|(&g, &vi)| {
            if vi > 0.0 {
                (g + lambda).abs()
            } else if vi < 0.0 {
                (g - lambda).abs()
            } else {
                (g.abs() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// Squared-loss ℓ1 selection over a unit library.
pub fn solve_l1(
    lib: &UnitLibrary,
    x: &Matrix,
    y: &[f64],
    lambda: f64,
    opts: &SolverOptions,
) -> Result<ConvexNNSolution> {
    let phi = features(lib, x)?;
    solve_l1_features(&phi, y, lambda, &SquaredLoss, opts)
}

/// Minimizes `Σ_t L((Φv)_t, y_t) + λ‖v‖₁` from `v = 0`.
pub fn solve_l1_features(
    phi: &Matrix,
    y: &[f64],
    lambda: f64,
    loss: &dyn SmoothLoss,
    opts: &SolverOptions,
) -> Result<ConvexNNSolution> {
    solve_l1_from(phi, y, lambda, loss, opts, &vec![0.0; phi.cols()])
}

/// Accelerated proximal gradient with function-value restart, started at
/// `v0`. Every accepted iterate has objective no larger than the previous
/// one, so the returned objective never exceeds that of `v0`. Objective
/// changes are computed from `Φ·Δv` rather than as differences of two
/// objective values, which keeps the comparisons meaningful long after the
/// changes drop below the rounding error of the objective itself.
pub fn solve_l1_from(
    phi: &Matrix,
    y: &[f64],
    lambda: f64,
    loss: &dyn SmoothLoss,
    opts: &SolverOptions,
    v0: &[f64],
) -> Result<ConvexNNSolution> {
    Error::check_dim("targets", phi.rows(), y.len())?;
    Error::check_dim("initial weights", phi.cols(), v0.len())?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "lambda must be >= 0, got {lambda}"
        )));
    }
    if !(opts.tol >= 0.0) {
        return Err(Error::InvalidArgument("tol must be >= 0".into()));
    }
    if !phi.is_finite() || y.iter().any(|t| !t.is_finite()) || v0.iter().any(|t| !t.is_finite()) {
        return Err(Error::NonFinite("convex solver input"));
    }
    let problem = Problem {
        phi,
        y,
        lambda,
        loss,
    };

    let mut v = Point::new(&problem, v0.to_vec())?;
    let mut tracked = v.smooth + lambda * l1(&v.x);
    let mut kkt = kkt_residual(&v.grad, &v.x, lambda);
    let mut trace = vec![tracked];
    if kkt <= opts.tol {
        return problem.solution(v.x, kkt, 0, true, trace);
    }

    let mut lip = loss.curvature_bound() * top_eigenvalue(phi);
    if !(lip > 0.0) {
        lip = 1.0;
    }
    let mut w = v.clone();
    let mut theta = 1.0f64;
    let mut restarted = true;

    for iter in 1..=opts.max_iter {
        let cand = loop {
            let cand: Vec<f64> =
                w.x.iter()
                    .zip(&w.grad)
                    .map(|(&wi, &gi)| soft_threshold(wi - gi / lip, lambda / lip))
                    .collect();
            let diff: Vec<f64> = cand.iter().zip(&w.x).map(|(c, w)| c - w).collect();
            let change = problem.smooth_change(&w.p, &diff)?;
            let bound = dot(&w.grad, &diff) + 0.5 * lip * dot(&diff, &diff);
            if change <= bound || lip > 1e300 {
                break cand;
            }
            lip *= 2.0;
        };
        let step: Vec<f64> = cand.iter().zip(&v.x).map(|(c, p)| c - p).collect();
        let change = problem.smooth_change(&v.p, &step)?
            + lambda
                * cand
                    .iter()
                    .zip(&v.x)
                    .map(|(c, p)| c.abs() - p.abs())
                    .sum::<f64>();
        if !change.is_finite() {
            return Err(Error::NonFinite("convex solver objective"));
        }

        if change > 0.0 {
            if restarted {
                // a plain proximal step from v made no progress: at the noise floor
                return problem.solution(v.x, kkt, iter, kkt <= opts.tol, trace);
            }
            w = v.clone();
            theta = 1.0;
            restarted = true;
            continue;
        }

        let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
        let beta = (theta - 1.0) / theta_next;
        let extrapolated: Vec<f64> = cand
            .iter()
            .zip(&v.x)
            .map(|(c, p)| c + beta * (c - p))
            .collect();
        theta = theta_next;
        restarted = false;
        v = Point::new(&problem, cand)?;
        tracked += change;
        trace.push(tracked);
        kkt = kkt_residual(&v.grad, &v.x, lambda);
        if kkt <= opts.tol {
            return problem.solution(v.x, kkt, iter, true, trace);
        }
        w = Point::new(&problem, extrapolated)?;
    }
    problem.solution(v.x, kkt, opts.max_iter, false, trace)
}

struct Problem<'a> {
    phi: &'a Matrix,
    y: &'a [f64],
    lambda: f64,
    loss: &'a dyn SmoothLoss,
}

/// An iterate with its predictions, smooth loss and smooth gradient.
#[derive(Clone)]
struct Point {
    x: Vec<f64>,
    p: Vec<f64>,
    smooth: f64,
    grad: Vec<f64>,
}

impl Point {
    fn new(problem: &Problem, x: Vec<f64>) -> Result<Point> {
        let p = problem.phi.matvec(&x)?;
        let smooth = p
            .iter()
            .zip(problem.y)
            .map(|(&p, &y)| problem.loss.value(p, y))
            .sum();
        let r: Vec<f64> = p
            .iter()
            .zip(problem.y)
            .map(|(&p, &y)| problem.loss.derivative(p, y))
            .collect();
        let grad = problem.phi.tr_matvec(&r)?;
        Ok(Point { x, p, smooth, grad })
    }
}

impl Problem<'_> {
    fn smooth_change(&self, p: &[f64], dx: &[f64]) -> Result<f64> {
        let dp = self.phi.matvec(dx)?;
        Ok(p.iter()
            .zip(&dp)
            .zip(self.y)
            .map(|((&p, &dp), &y)| self.loss.value_change(p, dp, y))
            .sum())
    }

    fn solution(
        &self,
        v: Vec<f64>,
        kkt_residual: f64,
        iterations: usize,
        converged: bool,
        objective_trace: Vec<f64>,
    ) -> Result<ConvexNNSolution> {
        let p = self.phi.matvec(&v)?;
        let smooth: f64 = p
            .iter()
            .zip(self.y)
            .map(|(&p, &y)| self.loss.value(p, y))
            .sum();
        let objective = smooth + self.lambda * l1(&v);
        if !objective.is_finite() {
            return Err(Error::NonFinite("convex solver objective"));
        }
        Ok(ConvexNNSolution {
            v,
            objective,
            kkt_residual,
            iterations,
            converged,
            objective_trace,
        })
    }
}

fn l1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

/// Estimate of the largest eigenvalue of `ΦᵀΦ` by power iteration, inflated
/// slightly. Backtracking in the solver corrects any underestimate.
fn top_eigenvalue(phi: &Matrix) -> f64 {
    let m = phi.cols();
    if m == 0 || phi.rows() == 0 {
        return 0.0;
    }
    let mut x = vec![1.0 / (m as f64).sqrt(); m];
    let mut est = 0.0;
    for _ in 0..50 {
        let px = phi.matvec(&x).expect("square by construction");
        let y = phi.tr_matvec(&px).expect("square by construction");
        let n = dot(&y, &y).sqrt();
        if n == 0.0 {
            return phi.frobenius_sq();
        }
        est = n;
        x = y.iter().map(|t| t / n).collect();
    }
    1.05 * est
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convexnn::{sample_library, LibraryScheme};
    use crate::numerics::Rng;
    use nalgebra::{DMatrix, DVector};

    fn tight() -> SolverOptions {
        SolverOptions {
            tol: 1e-11,
            max_iter: 200_000,
        }
    }

    fn random_instance(rng: &mut Rng, n: usize, m: usize) -> (Matrix, Vec<f64>) {
        let lib = sample_library(3, m, LibraryScheme::GaussianNormalized, rng).unwrap();
        let x = Matrix::from_vec(n, 3, rng.gaussian(n * 3, 1.0)).unwrap();
        (features(&lib, &x).unwrap(), rng.gaussian(n, 1.0))
    }

    fn objective(phi: &Matrix, y: &[f64], lambda: f64, v: &[f64]) -> f64 {
        let p = phi.matvec(v).unwrap();
        let fit: f64 = p.iter().zip(y).map(|(p, y)| 0.5 * (p - y) * (p - y)).sum();
        fit + lambda * l1(v)
    }

    /// Exact lasso optimum by enumerating every sign/zero pattern and solving
    /// the reduced normal equations.
    fn enumeration_oracle(phi: &Matrix, y: &[f64], lambda: f64) -> f64 {
        let (n, m) = phi.shape();
        let a = DMatrix::from_row_slice(n, m, phi.as_slice());
        let yv = DVector::from_column_slice(y);
        let mut best = objective(phi, y, lambda, &vec![0.0; m]);
        for code in 0..3usize.pow(m as u32) {
            let mut signs = vec![0i32; m];
            let mut c = code;
            for s in signs.iter_mut() {
                *s = (c % 3) as i32 - 1;
                c /= 3;
            }
            let active: Vec<usize> = (0..m).filter(|&i| signs[i] != 0).collect();
            if active.is_empty() {
                continue;
            }
            let sub = a.select_columns(&active);
            let s = DVector::from_iterator(active.len(), active.iter().map(|&i| signs[i] as f64));
            let rhs = sub.transpose() * &yv - s * lambda;
            let Some(chol) = (sub.transpose() * &sub).cholesky() else {
                continue;
            };
            let va = chol.solve(&rhs);
            if active
                .iter()
                .zip(va.iter())
                .all(|(&i, &x)| x * signs[i] as f64 > 0.0)
            {
                let mut v = vec![0.0; m];
                for (&i, &x) in active.iter().zip(va.iter()) {
                    v[i] = x;
                }
                best = best.min(objective(phi, y, lambda, &v));
            }
        }
        best
    }

    #[test]
    fn soft_threshold_cases() {
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(-3.0, 1.0), -2.0);
        assert_eq!(soft_threshold(0.5, 1.0), 0.0);
        assert_eq!(soft_threshold(-1.0, 1.0), 0.0);
    }

    #[test]
    fn zero_is_optimal_at_the_threshold() {
        let mut rng = Rng::new(1);
        let (phi, y) = random_instance(&mut rng, 12, 6);
        let g = phi.tr_matvec(&y).unwrap();
        let lam = g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for l in [lam, 2.0 * lam] {
            let sol = solve_l1_features(&phi, &y, l, &SquaredLoss, &tight()).unwrap();
            assert!(sol.v.iter().all(|&x| x == 0.0));
            assert_eq!(sol.iterations, 0);
            assert_eq!(sol.kkt_residual, 0.0);
        }
        let below = solve_l1_features(&phi, &y, 0.99 * lam, &SquaredLoss, &tight()).unwrap();
        assert!(below.v.iter().any(|&x| x != 0.0));
    }

    #[test]
    fn single_feature_matches_closed_form() {
        let mut rng = Rng::new(2);
        for _ in 0..20 {
            let (phi, y) = random_instance(&mut rng, 9, 1);
            let col = phi.column(0);
            let a = dot(&col, &col);
            if a == 0.0 {
                continue;
            }
            let c = dot(&col, &y);
            let lambda = 0.3 * c.abs() * rng.uniform() * 3.0;
            let exact = soft_threshold(c, lambda) / a;
            let sol = solve_l1_features(&phi, &y, lambda, &SquaredLoss, &tight()).unwrap();
            assert!(sol.converged);
            assert!((sol.v[0] - exact).abs() <= 1e-10, "{} vs {exact}", sol.v[0]);
        }
    }

    #[test]
    fn matches_sign_pattern_enumeration() {
        let mut rng = Rng::new(3);
        for _ in 0..10 {
            let (phi, y) = random_instance(&mut rng, 8, 5);
            let zmax = phi
                .tr_matvec(&y)
                .unwrap()
                .iter()
                .fold(0.0f64, |m, x| m.max(x.abs()));
            let lambda = (0.05 + 0.5 * rng.uniform()) * zmax;
            let sol = solve_l1_features(&phi, &y, lambda, &SquaredLoss, &tight()).unwrap();
            let oracle = enumeration_oracle(&phi, &y, lambda);
            assert!(sol.converged);
            assert!(sol.kkt_residual <= 1e-6);
            assert!(
                (sol.objective - oracle).abs() <= 1e-8,
                "{} vs {oracle}",
                sol.objective
            );
        }
    }

    #[test]
    fn objective_trace_is_monotone() {
        let mut rng = Rng::new(4);
        let (phi, y) = random_instance(&mut rng, 40, 60);
        let sol = solve_l1_features(&phi, &y, 0.1, &SquaredLoss, &tight()).unwrap();
        assert!(sol.converged, "kkt {}", sol.kkt_residual);
        for w in sol.objective_trace.windows(2) {
            assert!(w[1] <= w[0]);
        }
        let last = *sol.objective_trace.last().unwrap();
        assert!((last - sol.objective).abs() <= 1e-12 * sol.objective);
    }

    #[test]
    fn max_iter_reports_non_convergence() {
        let mut rng = Rng::new(5);
        let (phi, y) = random_instance(&mut rng, 40, 60);
        let opts = SolverOptions {
            tol: 1e-14,
            max_iter: 3,
        };
        let sol = solve_l1_features(&phi, &y, 0.01, &SquaredLoss, &opts).unwrap();
        assert!(!sol.converged);
        assert!(sol.kkt_residual > 1e-14);
    }

    #[test]
    fn truncated_logistic_objective_decreases() {
        let mut rng = Rng::new(6);
        let (phi, y) = random_instance(&mut rng, 30, 20);
        let labels: Vec<f64> = y
            .iter()
            .map(|t| if *t > 0.0 { 1.0 } else { -1.0 })
            .collect();
        let sol = solve_l1_features(
            &phi,
            &labels,
            0.05,
            &TruncatedLogistic,
            &SolverOptions::default(),
        )
        .unwrap();
        for w in sol.objective_trace.windows(2) {
            assert!(w[1] <= w[0]);
        }
        assert!(sol.objective < 30.0 * 2f64.ln());
    }

    #[test]
    fn truncated_logistic_derivative_matches_differences() {
        let l = TruncatedLogistic;
        for &(p, y) in &[
            (0.3, 1.0),
            (-2.0, 1.0),
            (4.0, -1.0),
            (11.5, 1.0),
            (-40.0, 1.0),
            (12.5, 1.0),
        ] {
            let h = 1e-6;
            let fd = (l.value(p + h, y) - l.value(p - h, y)) / (2.0 * h);
            let an = l.derivative(p, y);
            assert!(
                (fd - an).abs() <= 1e-7 * an.abs().max(1e-3),
                "p={p} fd={fd} an={an}"
            );
        }
    }

    #[test]
    fn rejects_bad_input() {
        let phi = Matrix::zeros(3, 2);
        assert!(solve_l1_features(&phi, &[0.0; 2], 1.0, &SquaredLoss, &tight()).is_err());
        assert!(solve_l1_features(&phi, &[0.0; 3], -1.0, &SquaredLoss, &tight()).is_err());
        assert!(solve_l1_from(&phi, &[0.0; 3], 1.0, &SquaredLoss, &tight(), &[0.0]).is_err());
    }
}
