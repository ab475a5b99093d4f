//! Classification losses, regularization penalties and the zero-one error.
//!
//! The truncated soft-max replaces `exp` in the log-sum-exp with a function
//! that is `exp(x)` down to `x = -11`, then a quadratic reaching zero at
//! `x = -13`. A correct prediction with margin 13 or more therefore has loss
//! exactly zero, which makes the minimum attainable on separable data.

use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::model::{Gradients, NetParams};
use crate::numerics::norm;

/// Below this argument the truncated exponential switches to its quadratic tail.
pub const TRUNCATION_POINT: f64 = -11.0;
/// The quadratic tail reaches zero here.
pub const TRUNCATION_ZERO: f64 = -13.0;

/// `exp(x)` for `x ≥ -11`, `exp(-11)·max(x + 13, 0)²/4` below.
pub fn f_trunc(x: f64) -> f64 {
    if x >= TRUNCATION_POINT {
        x.exp()
    } else {
        let t = (x - TRUNCATION_ZERO).max(0.0);
        TRUNCATION_POINT.exp() * t * t / 4.0
    }
}

pub fn f_trunc_derivative(x: f64) -> f64 {
    if x >= TRUNCATION_POINT {
        x.exp()
    } else {
        let t = (x - TRUNCATION_ZERO).max(0.0);
        TRUNCATION_POINT.exp() * t / 2.0
    }
}

/// Per-class scores together with the index of the correct class.
#[derive(Clone, Copy, Debug)]
pub struct Scores<'a> {
    s: &'a [f64],
    correct: usize,
}

impl<'a> Scores<'a> {
    pub fn new(s: &'a [f64], correct: usize) -> Result<Self> {
        if s.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "scores need at least two classes, got {}",
                s.len()
            )));
        }
        if correct >= s.len() {
            return Err(Error::InvalidArgument(format!(
                "correct class {correct} out of range for {} classes",
                s.len()
            )));
        }
        if s.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("scores"));
        }
        Ok(Scores { s, correct })
    }

    pub fn scores(&self) -> &[f64] {
        self.s
    }

    pub fn correct(&self) -> usize {
        self.correct
    }
}

/// Truncated soft-max cross-entropy `ln Σ_i f(s_i - s_c)` and its gradient
/// with respect to the scores.
pub fn truncated_ce(sc: &Scores) -> (f64, Vec<f64>) {
    log_sum(sc, true)
}

/// Exact soft-max cross-entropy `ln Σ_i exp(s_i - s_c)` and its gradient,
/// computed with the largest score factored out.
pub fn softmax_ce(sc: &Scores) -> (f64, Vec<f64>) {
    log_sum(sc, false)
}

/// Shared evaluation of `ln Σ_i g(z_i)`, `z_i = s_i - s_c`, with
/// `shift = max_i z_i ≥ 0` factored out. Each truncated term is the exact
/// term times the ratio `f(z)/exp(z)`, clamped to at most 1, so in floating
/// point the truncated loss never exceeds the exact one.
fn log_sum(sc: &Scores, truncate: bool) -> (f64, Vec<f64>) {
    let s_c = sc.s[sc.correct];
    let z: Vec<f64> = sc.s.iter().map(|&si| si - s_c).collect();
    let shift = z.iter().cloned().fold(0.0, f64::max);
    let mut terms = Vec::with_capacity(z.len());
    let mut slopes = Vec::with_capacity(z.len());
    for &zi in &z {
        let e = (zi - shift).exp();
        if truncate && zi < TRUNCATION_POINT {
            // f(z)/exp(z) and f'(z)/exp(z)
            let t = (zi - TRUNCATION_ZERO).max(0.0);
            let back = (TRUNCATION_POINT - zi).exp();
            terms.push(e * (t * t / 4.0 * back).min(1.0));
            slopes.push(e * (t / 2.0 * back));
        } else {
            terms.push(e);
            slopes.push(e);
        }
    }
    let total: f64 = terms.iter().sum();
    let mut grad = vec![0.0; z.len()];
    let mut sum_wrong = 0.0;
    for (i, g) in grad.iter_mut().enumerate() {
        if i != sc.correct {
            *g = slopes[i] / total;
            sum_wrong += *g;
        }
    }
    grad[sc.correct] = -sum_wrong;
    (shift + total.ln(), grad)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    TruncatedSoftmax,
    Softmax,
}

impl LossKind {
    pub fn evaluate(self, sc: &Scores) -> (f64, Vec<f64>) {
        match self {
            LossKind::TruncatedSoftmax => truncated_ce(sc),
            LossKind::Softmax => softmax_ce(sc),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegKind {
    #[default]
    None,
    /// `λ/2 Σ_h (‖u_h‖² + ‖v_h‖²)`
    L2WeightDecay,
    /// `λ Σ_h |v_h|`, single output only
    L1Top,
    /// `λ Σ_h ‖v_h‖`
    GroupLassoTop,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RegConfig {
    pub lambda: f64,
    pub kind: RegKind,
}

impl RegConfig {
    pub fn none() -> Self {
        RegConfig::default()
    }

    pub fn weight_decay(lambda: f64) -> Self {
        RegConfig {
            lambda,
            kind: RegKind::L2WeightDecay,
        }
    }

    fn validate(&self, p: &NetParams) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "penalty weight must be a finite non-negative number, got {}",
                self.lambda
            )));
        }
        if self.kind == RegKind::L1Top && p.outputs() != 1 {
            return Err(Error::RequiresSingleOutput("the l1_top penalty"));
        }
        Ok(())
    }

    pub fn is_active(&self) -> bool {
        self.kind != RegKind::None && self.lambda > 0.0
    }
}

pub fn penalty(p: &NetParams, r: &RegConfig) -> Result<f64> {
    r.validate(p)?;
    let value = match r.kind {
        RegKind::None => 0.0,
        RegKind::L2WeightDecay => r.lambda * p.half_squared_norm(),
        RegKind::L1Top => r.lambda * p.v().as_slice().iter().map(|x| x.abs()).sum::<f64>(),
        RegKind::GroupLassoTop => r.lambda * p.v().row_iter().map(norm).sum::<f64>(),
    };
    Ok(value)
}

/// Gradient of the penalty; for the non-smooth kinds the subgradient that
/// is zero at the kink.
pub fn penalty_gradient(p: &NetParams, r: &RegConfig) -> Result<Gradients> {
    r.validate(p)?;
    let mut g = Gradients::zeros_like(p);
    match r.kind {
        RegKind::None => {}
        RegKind::L2WeightDecay => {
            g.du.add_scaled(r.lambda, p.u())?;
            g.dv.add_scaled(r.lambda, p.v())?;
        }
        RegKind::L1Top => {
            for (d, &v) in g.dv.as_mut_slice().iter_mut().zip(p.v().as_slice()) {
                *d = if v == 0.0 { 0.0 } else { r.lambda * v.signum() };
            }
        }
        RegKind::GroupLassoTop => {
            for h in 0..p.hidden() {
                let n = norm(p.v().row(h));
                if n > 0.0 {
                    for (d, &v) in g.dv.row_mut(h).iter_mut().zip(p.v().row(h)) {
                        *d = r.lambda * v / n;
                    }
                }
            }
        }
    }
    Ok(g)
}

/// Index of the largest entry, ties going to the lowest index.
pub fn argmax(y: &[f64]) -> usize {
    let mut best = 0;
    for (i, &yi) in y.iter().enumerate().skip(1) {
        if yi > y[best] {
            best = i;
        }
    }
    best
}

fn check_compatible(p: &NetParams, data: &LabeledDataset) -> Result<()> {
    Error::check_dim("dataset feature dimension", p.input_dim(), data.dim())?;
    Error::check_dim("network outputs vs. classes", data.classes(), p.outputs())
}

pub fn predict(p: &NetParams, data: &LabeledDataset) -> Result<Vec<usize>> {
    Error::check_dim("dataset feature dimension", p.input_dim(), data.dim())?;
    let out = p.forward_batch(data.features())?;
    Ok(out.row_iter().map(argmax).collect())
}

/// Fraction of examples whose predicted class differs from the label.
pub fn zero_one_error(p: &NetParams, data: &LabeledDataset) -> Result<f64> {
    check_compatible(p, data)?;
    if data.is_empty() {
        return Ok(0.0);
    }
    let wrong = predict(p, data)?
        .iter()
        .zip(data.labels())
        .filter(|(a, b)| a != b)
        .count();
    Ok(wrong as f64 / data.len() as f64)
}

/// Mean loss over `indices` and its gradient with respect to the weights.
pub fn batch_loss_and_gradient(
    p: &NetParams,
    data: &LabeledDataset,
    indices: &[usize],
    kind: LossKind,
) -> Result<(f64, Gradients)> {
    check_compatible(p, data)?;
    let mut g = Gradients::zeros_like(p);
    if indices.is_empty() {
        return Ok((0.0, g));
    }
    let scale = 1.0 / indices.len() as f64;
    let mut total = 0.0;
    for &t in indices {
        let x = data.features().row(t);
        let z = p.pre_activations(x)?;
        let y = p.forward_from_pre(&z);
        let (value, dy) = kind.evaluate(&Scores::new(&y, data.labels()[t])?);
        total += value;
        p.accumulate_backward_with_pre(x, &z, &dy, scale, &mut g)?;
    }
    Ok((total * scale, g))
}

/// Mean loss over the whole dataset.
pub fn mean_loss(p: &NetParams, data: &LabeledDataset, kind: LossKind) -> Result<f64> {
    check_compatible(p, data)?;
    if data.is_empty() {
        return Ok(0.0);
    }
    let out = p.forward_batch(data.features())?;
    let mut total = 0.0;
    for (y, &c) in out.row_iter().zip(data.labels()) {
        total += kind.evaluate(&Scores::new(y, c)?).0;
    }
    Ok(total / data.len() as f64)
}
