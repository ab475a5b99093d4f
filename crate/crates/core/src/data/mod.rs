//! Labeled datasets: loaders, transforms, splits and the label mutilations
//! used by the network-size experiments.

mod cifar;
mod downsample;
mod idx;
mod mutilate;
mod planted;

pub use cifar::{encode_cifar_record, grayscale, load_cifar10, parse_cifar_batch, CifarSplit};
pub use downsample::{area_weights, downsample, downsample_100};
pub use idx::{
    encode_idx_images, encode_idx_labels, load_mnist, parse_idx_images, parse_idx_labels,
    IdxImages, MnistSplit,
};
pub use mutilate::{add_label_noise, censor, Censored, NoisyLabels};
pub use planted::{planted_synthetic, PlantedSpec};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng};

/// Environment variable consulted for the dataset directory.
pub const DATA_DIR_ENV: &str = "RELULAB_DATA_DIR";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitTag {
    #[default]
    Train,
    Validation,
    Test,
}

impl fmt::Display for SplitTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitTag::Train => "train",
            SplitTag::Validation => "validation",
            SplitTag::Test => "test",
        })
    }
}

/// Design matrix (one example per row) with integer class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    features: Matrix,
    labels: Vec<usize>,
    classes: usize,
    name: String,
    split: SplitTag,
    image_shape: Option<(usize, usize)>,
}

impl LabeledDataset {
    pub fn new(features: Matrix, labels: Vec<usize>, classes: usize) -> Result<Self> {
        Error::check_dim("dataset labels", features.rows(), labels.len())?;
        if let Some(&bad) = labels.iter().find(|&&c| c >= classes) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} out of range for {classes} classes"
            )));
        }
        if !features.is_finite() {
            return Err(Error::NonFinite("dataset features"));
        }
        Ok(LabeledDataset {
            features,
            labels,
            classes,
            name: String::from("unnamed"),
            split: SplitTag::Train,
            image_shape: None,
        })
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn with_split(mut self, split: SplitTag) -> Self {
        self.split = split;
        self
    }

    /// Marks each row as a row-major `rows × cols` image.
    pub fn with_image_shape(mut self, rows: usize, cols: usize) -> Result<Self> {
        Error::check_dim("image shape", self.dim(), rows * cols)?;
        self.image_shape = Some((rows, cols));
        Ok(self)
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn split(&self) -> SplitTag {
        self.split
    }

    pub fn image_shape(&self) -> Option<(usize, usize)> {
        self.image_shape
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// Same examples with new labels.
    pub fn relabeled(&self, labels: Vec<usize>) -> Result<Self> {
        Error::check_dim("relabel", self.len(), labels.len())?;
        if let Some(&bad) = labels.iter().find(|&&c| c >= self.classes) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} out of range for {} classes",
                self.classes
            )));
        }
        Ok(LabeledDataset {
            labels,
            ..self.clone()
        })
    }

    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        LabeledDataset {
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            ..self.clone()
        }
    }

    /// Concatenation of datasets sharing dimension and class count.
    pub fn concat(parts: &[&LabeledDataset]) -> Result<LabeledDataset> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("cannot concatenate zero datasets".into()))?;
        let mut labels = Vec::new();
        for p in parts {
            Error::check_dim("concat classes", first.classes, p.classes)?;
            labels.extend_from_slice(&p.labels);
        }
        let mats: Vec<&Matrix> = parts.iter().map(|p| &p.features).collect();
        Ok(LabeledDataset {
            features: Matrix::vstack(&mats)?,
            labels,
            ..(*first).clone()
        })
    }
}

/// Sizes of a seeded train/validation/test partition. `n_test = None` takes
/// every remaining example.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub n_train: usize,
    pub n_validation: usize,
    #[serde(default)]
    pub n_test: Option<usize>,
    pub seed: u64,
}

/// Disjoint partition of a shuffled copy of `ds`.
pub fn split(
    ds: &LabeledDataset,
    spec: &SplitSpec,
) -> Result<(LabeledDataset, LabeledDataset, LabeledDataset)> {
    let head = spec.n_train + spec.n_validation;
    let n_test = spec.n_test.unwrap_or(ds.len().saturating_sub(head));
    if head + n_test > ds.len() {
        return Err(Error::InvalidArgument(format!(
            "split {}+{}+{} exceeds {} available examples",
            spec.n_train,
            spec.n_validation,
            n_test,
            ds.len()
        )));
    }
    let perm = Rng::new(spec.seed).permutation(ds.len());
    let train = ds.subset(&perm[..spec.n_train]).with_split(SplitTag::Train);
    let val = ds
        .subset(&perm[spec.n_train..head])
        .with_split(SplitTag::Validation);
    let test = ds
        .subset(&perm[head..head + n_test])
        .with_split(SplitTag::Test);
    Ok((train, val, test))
}
