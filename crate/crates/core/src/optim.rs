//! Mini-batch SGD with classical momentum and the per-epoch schedule
//! `step ← 0.99 · step`, `momentum ← min(0.9, momentum + 0.02)`.

use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::loss::{self, LossKind, RegConfig};
use crate::model::{Gradients, NetParams};
use crate::numerics::{Matrix, Rng};

fn default_step() -> f64 {
    0.1
}
fn default_momentum() -> f64 {
    0.5
}
fn default_step_decay() -> f64 {
    0.99
}
fn default_momentum_increment() -> f64 {
    0.02
}
fn default_momentum_max() -> f64 {
    0.9
}
fn default_batch_size() -> usize {
    100
}
fn default_max_epochs() -> usize {
    1000
}
fn default_loss_tolerance() -> f64 {
    1e-5
}

/// Step size and momentum schedule plus mini-batch size.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default = "default_step_decay")]
    pub step_decay: f64,
    #[serde(default = "default_momentum_increment")]
    pub momentum_increment: f64,
    #[serde(default = "default_momentum_max")]
    pub momentum_max: f64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            step: default_step(),
            momentum: default_momentum(),
            step_decay: default_step_decay(),
            momentum_increment: default_momentum_increment(),
            momentum_max: default_momentum_max(),
            batch_size: default_batch_size(),
        }
    }
}

impl SgdConfig {
    fn validate(&self) -> Result<()> {
        let ok = self.step > 0.0
            && self.step.is_finite()
            && (0.0..1.0).contains(&self.momentum)
            && (0.0..1.0).contains(&self.momentum_max)
            && self.step_decay > 0.0
            && self.batch_size > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "invalid optimizer settings {self:?}"
            )))
        }
    }

    /// Step size after `epochs` completed epochs.
    pub fn step_after(&self, epochs: usize) -> f64 {
        self.step * self.step_decay.powi(epochs as i32)
    }

    /// Momentum after `epochs` completed epochs.
    pub fn momentum_after(&self, epochs: usize) -> f64 {
        self.momentum_max
            .min(self.momentum + self.momentum_increment * epochs as f64)
    }
}

/// When to stop: zero training error together with a mean truncated loss
/// below `loss_tolerance`, or after `max_epochs`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoppingRule {
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_loss_tolerance")]
    pub loss_tolerance: f64,
}

impl Default for StoppingRule {
    fn default() -> Self {
        StoppingRule {
            max_epochs: default_max_epochs(),
            loss_tolerance: default_loss_tolerance(),
        }
    }
}

/// Optimizer state. The current step size and momentum are always the
/// closed-form schedule values for the completed epoch count.
#[derive(Clone, Debug)]
pub struct OptState {
    config: SgdConfig,
    epoch: usize,
    velocity_u: Matrix,
    velocity_v: Matrix,
}

impl OptState {
    pub fn new(p: &NetParams, config: SgdConfig) -> Result<Self> {
        config.validate()?;
        Ok(OptState {
            config,
            epoch: 0,
            velocity_u: Matrix::zeros(p.hidden(), p.input_dim()),
            velocity_v: Matrix::zeros(p.hidden(), p.outputs()),
        })
    }

    pub fn step(&self) -> f64 {
        self.config.step_after(self.epoch)
    }

    pub fn momentum(&self) -> f64 {
        self.config.momentum_after(self.epoch)
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn batch_size(&self) -> usize {
        self.config.batch_size
    }

    pub fn velocity(&self) -> (&Matrix, &Matrix) {
        (&self.velocity_u, &self.velocity_v)
    }

    /// `velocity ← m·velocity − μ·g; params ← params + velocity`.
    pub fn sgd_step(&mut self, p: &mut NetParams, g: &Gradients) -> Result<()> {
        Error::check_dim("sgd_step hidden", self.velocity_u.rows(), g.du.rows())?;
        Error::check_dim("sgd_step input", self.velocity_u.cols(), g.du.cols())?;
        Error::check_dim("sgd_step outputs", self.velocity_v.cols(), g.dv.cols())?;
        Error::check_dim("sgd_step params", self.velocity_u.rows(), p.hidden())?;
        Error::check_dim("sgd_step params", self.velocity_u.cols(), p.input_dim())?;
        let (m, mu) = (self.momentum(), self.step());
        self.velocity_u.scale(m);
        self.velocity_u.add_scaled(-mu, &g.du)?;
        self.velocity_v.scale(m);
        self.velocity_v.add_scaled(-mu, &g.dv)?;
        let (u, v) = p.parts_mut();
        u.add_scaled(1.0, &self.velocity_u)?;
        v.add_scaled(1.0, &self.velocity_v)
    }

    pub fn end_epoch(&mut self) {
        self.epoch += 1;
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default)]
    pub sgd: SgdConfig,
    #[serde(default)]
    pub loss: LossKind,
    #[serde(default)]
    pub reg: RegConfig,
    #[serde(default)]
    pub stop: StoppingRule,
}

/// Evaluation at the end of an epoch; epoch 0 is the initialization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub truncated_loss: f64,
    pub objective: f64,
    pub train_error: f64,
    pub validation_error: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct Snapshot {
    pub epoch: usize,
    pub validation_error: f64,
    pub params: NetParams,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: NetParams,
    /// Parameters at the epoch with the lowest validation error (earliest on
    /// ties); `None` without a validation set.
    pub best: Option<Snapshot>,
    pub history: Vec<EpochRecord>,
    pub converged: bool,
}

impl TrainOutcome {
    pub fn epochs_run(&self) -> usize {
        self.history.last().map_or(0, |r| r.epoch)
    }

    pub fn final_record(&self) -> &EpochRecord {
        self.history
            .last()
            .expect("history always holds the initial evaluation")
    }
}

fn evaluate(
    p: &NetParams,
    train: &LabeledDataset,
    validation: Option<&LabeledDataset>,
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<EpochRecord> {
    let truncated_loss = loss::mean_loss(p, train, LossKind::TruncatedSoftmax)?;
    let train_loss = match cfg.loss {
        LossKind::TruncatedSoftmax => truncated_loss,
        other => loss::mean_loss(p, train, other)?,
    };
    let objective = train_loss + loss::penalty(p, &cfg.reg)?;
    if !objective.is_finite() {
        return Err(Error::Diverged {
            epoch,
            message: format!("objective evaluated to {objective}"),
        });
    }
    Ok(EpochRecord {
        epoch,
        train_loss,
        truncated_loss,
        objective,
        train_error: loss::zero_one_error(p, train)?,
        validation_error: validation.map(|v| loss::zero_one_error(p, v)).transpose()?,
    })
}

/// Runs SGD from `init` over reshuffled mini-batches (the last partial batch
/// included) until the stopping rule fires.
pub fn train(
    init: NetParams,
    train_data: &LabeledDataset,
    validation: Option<&LabeledDataset>,
    cfg: &TrainConfig,
    rng: &mut Rng,
) -> Result<TrainOutcome> {
    if train_data.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    if cfg.sgd.batch_size > train_data.len() {
        return Err(Error::InvalidArgument(format!(
            "batch size {} exceeds {} training examples",
            cfg.sgd.batch_size,
            train_data.len()
        )));
    }
    let mut p = init;
    let mut state = OptState::new(&p, cfg.sgd)?;
    let converged_at =
        |r: &EpochRecord| r.train_error == 0.0 && r.truncated_loss < cfg.stop.loss_tolerance;

    let first = evaluate(&p, train_data, validation, cfg, 0)?;
    let mut best = first.validation_error.map(|e| Snapshot {
        epoch: 0,
        validation_error: e,
        params: p.clone(),
    });
    let mut converged = converged_at(&first);
    let mut history = vec![first];

    while !converged && state.epoch() < cfg.stop.max_epochs {
        let epoch = state.epoch() + 1;
        let order = rng.permutation(train_data.len());
        for batch in order.chunks(cfg.sgd.batch_size) {
            let (_, mut g) = loss::batch_loss_and_gradient(&p, train_data, batch, cfg.loss)?;
            if cfg.reg.is_active() {
                g.add_scaled(1.0, &loss::penalty_gradient(&p, &cfg.reg)?)?;
            }
            if !g.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    message: "non-finite gradient".into(),
                });
            }
            state.sgd_step(&mut p, &g)?;
        }
        state.end_epoch();
        if !p.is_finite() {
            return Err(Error::Diverged {
                epoch,
                message: "non-finite weights".into(),
            });
        }
        let rec = evaluate(&p, train_data, validation, cfg, epoch)?;
        if let (Some(b), Some(e)) = (best.as_mut(), rec.validation_error) {
            if e < b.validation_error {
                *b = Snapshot {
                    epoch,
                    validation_error: e,
                    params: p.clone(),
                };
            }
        }
        converged = converged_at(&rec);
        history.push(rec);
    }

    Ok(TrainOutcome {
        params: p,
        best,
        history,
        converged,
    })
}
