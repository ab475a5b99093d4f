//! Finite-difference verification of the network and loss gradients.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{self, LossKind, RegConfig, Scores, TRUNCATION_POINT, TRUNCATION_ZERO};
use crate::model::NetParams;
use crate::numerics::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GradcheckConfig {
    pub pairs: usize,
    pub input_dim: usize,
    pub hidden: usize,
    pub outputs: usize,
    /// Central-difference step.
    pub step: f64,
    /// Minimum `|⟨u_h, x⟩|` and minimum distance of any score difference from
    /// the loss's switch points; draws closer than this are rejected.
    pub margin: f64,
    pub loss: LossKind,
    pub reg: RegConfig,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig {
            pairs: 50,
            input_dim: 6,
            hidden: 8,
            outputs: 4,
            step: 1e-6,
            margin: 1e-3,
            loss: LossKind::TruncatedSoftmax,
            reg: RegConfig::none(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub pairs: usize,
    /// Largest over pairs of `max_i |a_i - n_i| / max_i max(|a_i|, |n_i|)`,
    /// analytic `a` against numerical `n`.
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// Draws rejected for lying too close to a kink.
    pub rejected: usize,
}

fn objective(p: &NetParams, x: &[f64], c: usize, cfg: &GradcheckConfig) -> Result<f64> {
    let s = p.forward(x)?;
    let (value, _) = cfg.loss.evaluate(&Scores::new(&s, c)?);
    Ok(value + loss::penalty(p, &cfg.reg)?)
}

fn away_from_kinks(p: &NetParams, x: &[f64], c: usize, margin: f64) -> Result<bool> {
    if p.pre_activations(x)?.iter().any(|z| z.abs() <= margin) {
        return Ok(false);
    }
    let s = p.forward(x)?;
    Ok(s.iter().all(|si| {
        let z = si - s[c];
        (z - TRUNCATION_POINT).abs() > margin && (z - TRUNCATION_ZERO).abs() > margin
    }))
}

/// Compares backpropagated gradients with central differences on random
/// networks and inputs. Pair `i` draws from the child stream `i` of `rng`.
pub fn gradcheck(cfg: &GradcheckConfig, rng: &Rng) -> Result<GradcheckReport> {
    if cfg.pairs == 0 || cfg.input_dim == 0 || cfg.hidden == 0 || cfg.outputs < 2 {
        return Err(Error::InvalidArgument(
            "gradcheck needs pairs, input_dim, hidden >= 1 and outputs >= 2".into(),
        ));
    }
    if !(cfg.step > 0.0) {
        return Err(Error::InvalidArgument(
            "finite-difference step must be > 0".into(),
        ));
    }
    let sigma_u = 1.0 / (cfg.input_dim as f64).sqrt();
    let sigma_v = 1.0 / (cfg.hidden as f64).sqrt();
    let mut max_rel: f64 = 0.0;
    let mut max_abs: f64 = 0.0;
    let mut rejected = 0;
    for pair in 0..cfg.pairs {
        let mut r = rng.derive(&[pair as u64]);
        let (p, x, c) = loop {
            let u = NetParams::init(cfg.input_dim, cfg.hidden, cfg.outputs, sigma_u, &mut r)?;
            let v = NetParams::init(cfg.input_dim, cfg.hidden, cfg.outputs, sigma_v, &mut r)?;
            let p = NetParams::new(u.u().clone(), v.v().clone())?;
            let x = r.gaussian(cfg.input_dim, 1.0);
            let c = r.below(cfg.outputs);
            if away_from_kinks(&p, &x, c, cfg.margin)? {
                break (p, x, c);
            }
            rejected += 1;
            if rejected > 1000 * cfg.pairs {
                return Err(Error::InvalidArgument(
                    "margin rejects almost every draw".into(),
                ));
            }
        };

        let s = p.forward(&x)?;
        let (_, dy) = cfg.loss.evaluate(&Scores::new(&s, c)?);
        let mut g = p.backward(&x, &dy)?;
        if cfg.reg.is_active() {
            let pg = loss::penalty_gradient(&p, &cfg.reg)?;
            g.add_scaled(1.0, &pg)?;
        }
        let analytic: Vec<f64> =
            g.du.as_slice()
                .iter()
                .chain(g.dv.as_slice())
                .copied()
                .collect();

        let n_u = p.u().as_slice().len();
        let mut numeric = Vec::with_capacity(analytic.len());
        for i in 0..analytic.len() {
            let shifted = |delta: f64| -> Result<f64> {
                let mut q = p.clone();
                let (u, v) = q.parts_mut();
                if i < n_u {
                    u.as_mut_slice()[i] += delta;
                } else {
                    v.as_mut_slice()[i - n_u] += delta;
                }
                objective(&q, &x, c, cfg)
            };
            numeric.push((shifted(cfg.step)? - shifted(-cfg.step)?) / (2.0 * cfg.step));
        }

        let scale = analytic
            .iter()
            .chain(&numeric)
            .fold(0.0f64, |m, v| m.max(v.abs()));
        let worst = analytic
            .iter()
            .zip(&numeric)
            .fold(0.0f64, |m, (a, n)| m.max((a - n).abs()));
        max_abs = max_abs.max(worst);
        if scale > 0.0 {
            max_rel = max_rel.max(worst / scale);
        }
    }
    Ok(GradcheckReport {
        pairs: cfg.pairs,
        max_rel_error: max_rel,
        max_abs_error: max_abs,
        rejected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_check_passes() {
        let report = gradcheck(&GradcheckConfig::default(), &Rng::new(3)).unwrap();
        assert_eq!(report.pairs, 50);
        assert!(report.max_rel_error < 1e-6, "{report:?}");
    }

    #[test]
    fn with_weight_decay_and_exact_softmax() {
        let cfg = GradcheckConfig {
            loss: LossKind::Softmax,
            reg: RegConfig::weight_decay(0.3),
            pairs: 10,
            ..GradcheckConfig::default()
        };
        let report = gradcheck(&cfg, &Rng::new(4)).unwrap();
        assert!(report.max_rel_error < 1e-6, "{report:?}");
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = GradcheckConfig {
            pairs: 5,
            ..GradcheckConfig::default()
        };
        assert_eq!(
            gradcheck(&cfg, &Rng::new(7)).unwrap(),
            gradcheck(&cfg, &Rng::new(7)).unwrap()
        );
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = GradcheckConfig {
            outputs: 1,
            ..GradcheckConfig::default()
        };
        assert!(gradcheck(&cfg, &Rng::new(0)).is_err());
    }
}
