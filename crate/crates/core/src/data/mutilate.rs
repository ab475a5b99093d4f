use super::LabeledDataset;
use crate::error::{Error, Result};
use crate::loss;
use crate::model::NetParams;
use crate::numerics::Rng;
use crate::optim::{self, TrainConfig};

/// Datasets relabeled by a small teacher network.
#[derive(Clone, Debug)]
pub struct Censored {
    /// The input datasets, in order, with teacher labels.
    pub datasets: Vec<LabeledDataset>,
    pub teacher: NetParams,
    /// Examples whose label the teacher changed, over all datasets.
    pub disagreements: usize,
}

/// Trains an `h0`-unit network on the union of `parts` and replaces every
/// label with that network's prediction. The relabeled data is exactly
/// realizable by a network with `h0` hidden units: the teacher itself.
pub fn censor(
    parts: &[&LabeledDataset],
    h0: usize,
    cfg: &TrainConfig,
    init_sigma: f64,
    rng: &mut Rng,
) -> Result<Censored> {
    if h0 == 0 {
        return Err(Error::InvalidArgument(
            "censoring teacher needs h0 >= 1".into(),
        ));
    }
    let union = LabeledDataset::concat(parts)?;
    let init = NetParams::init(union.dim(), h0, union.classes(), init_sigma, rng)?;
    let mut teacher_cfg = *cfg;
    teacher_cfg.sgd.batch_size = teacher_cfg.sgd.batch_size.min(union.len());
    let teacher = optim::train(init, &union, None, &teacher_cfg, rng)?.params;

    let mut disagreements = 0;
    let mut datasets = Vec::with_capacity(parts.len());
    for part in parts {
        let labels = loss::predict(&teacher, part)?;
        disagreements += labels
            .iter()
            .zip(part.labels())
            .filter(|(a, b)| a != b)
            .count();
        datasets.push(
            part.relabeled(labels)?
                .with_name(format!("{}-censored-h{h0}", part.name())),
        );
    }
    Ok(Censored {
        datasets,
        teacher,
        disagreements,
    })
}

#[derive(Clone, Debug)]
pub struct NoisyLabels {
    pub dataset: LabeledDataset,
    /// Indices whose label was changed, in increasing order.
    pub changed: Vec<usize>,
}

/// Picks `round(fraction · n)` examples without replacement and moves each
/// to a uniformly random class different from its current one.
pub fn add_label_noise(ds: &LabeledDataset, fraction: f64, rng: &mut Rng) -> Result<NoisyLabels> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidArgument(format!(
            "noise fraction must lie in [0, 1], got {fraction}"
        )));
    }
    let count = (fraction * ds.len() as f64).round() as usize;
    if count > 0 && ds.classes() < 2 {
        return Err(Error::InvalidArgument(
            "label noise needs at least two classes".into(),
        ));
    }
    let mut changed = rng.sample_without_replacement(ds.len(), count);
    let mut labels = ds.labels().to_vec();
    for &i in &changed {
        let r = rng.below(ds.classes() - 1);
        labels[i] = if r >= labels[i] { r + 1 } else { r };
    }
    changed.sort_unstable();
    Ok(NoisyLabels {
        dataset: ds
            .relabeled(labels)?
            .with_name(format!("{}-noisy", ds.name())),
        changed,
    })
}
