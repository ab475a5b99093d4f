//! CIFAR-10 binary batches: 3073-byte records of one label byte followed by
//! 1024 red, 1024 green and 1024 blue bytes (32×32, row-major). Colour is
//! folded to luminance `0.299 R + 0.587 G + 0.114 B` so an image becomes
//! 1024 features in [0, 1].

use std::fs;
use std::path::{Path, PathBuf};

use super::LabeledDataset;
use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const RECORD_LEN: usize = 3073;
const SIDE: usize = 32;
const PLANE: usize = SIDE * SIDE;
const CLASSES: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CifarSplit {
    Train,
    Test,
}

/// Luminance of one pixel scaled to [0, 1]. Integer weights keep white at
/// exactly 1.0.
pub fn grayscale(r: u8, g: u8, b: u8) -> f64 {
    let weighted = 299 * r as u32 + 587 * g as u32 + 114 * b as u32;
    weighted as f64 / 255_000.0
}

pub fn encode_cifar_record(label: u8, red: &[u8], green: &[u8], blue: &[u8]) -> Vec<u8> {
    assert!(red.len() == PLANE && green.len() == PLANE && blue.len() == PLANE);
    let mut out = Vec::with_capacity(RECORD_LEN);
    out.push(label);
    out.extend_from_slice(red);
    out.extend_from_slice(green);
    out.extend_from_slice(blue);
    out
}

pub fn parse_cifar_batch(bytes: &[u8], source: &str) -> Result<LabeledDataset> {
    if bytes.len() % RECORD_LEN != 0 {
        return Err(Error::Parse {
            source_name: source.to_string(),
            offset: bytes.len() - bytes.len() % RECORD_LEN,
            message: format!(
                "file length {} is not a multiple of the {RECORD_LEN}-byte record",
                bytes.len()
            ),
        });
    }
    let n = bytes.len() / RECORD_LEN;
    let mut labels = Vec::with_capacity(n);
    let mut data = Vec::with_capacity(n * PLANE);
    for (i, rec) in bytes.chunks_exact(RECORD_LEN).enumerate() {
        let label = rec[0];
        if label as usize >= CLASSES {
            return Err(Error::Parse {
                source_name: source.to_string(),
                offset: i * RECORD_LEN,
                message: format!("label byte {label} > 9 in record {i}"),
            });
        }
        labels.push(label as usize);
        let (r, rest) = rec[1..].split_at(PLANE);
        let (g, b) = rest.split_at(PLANE);
        data.extend((0..PLANE).map(|p| grayscale(r[p], g[p], b[p])));
    }
    LabeledDataset::new(Matrix::from_vec(n, PLANE, data)?, labels, CLASSES)?
        .with_name("cifar10")
        .with_image_shape(SIDE, SIDE)
}

fn batch_dir(dir: &Path) -> PathBuf {
    let nested = dir.join("cifar-10-batches-bin");
    if nested.is_dir() {
        nested
    } else {
        dir.to_path_buf()
    }
}

/// Reads the five training batches or the test batch from `dir` (or its
/// `cifar-10-batches-bin` subdirectory).
pub fn load_cifar10(dir: &Path, which: CifarSplit) -> Result<LabeledDataset> {
    let base = batch_dir(dir);
    let names: Vec<String> = match which {
        CifarSplit::Train => (1..=5).map(|i| format!("data_batch_{i}.bin")).collect(),
        CifarSplit::Test => vec!["test_batch.bin".to_string()],
    };
    let mut parts = Vec::with_capacity(names.len());
    for name in &names {
        let path = base.join(name);
        if !path.is_file() {
            return Err(Error::MissingDataset {
                path,
                hint: format!(
                    "place the CIFAR-10 binary batches in {} (see tools/fetch_datasets.sh)",
                    dir.display()
                ),
            });
        }
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        parts.push(parse_cifar_batch(&bytes, &path.display().to_string())?);
    }
    let refs: Vec<&LabeledDataset> = parts.iter().collect();
    let name = match which {
        CifarSplit::Train => "cifar10-train",
        CifarSplit::Test => "cifar10-test",
    };
    Ok(LabeledDataset::concat(&refs)?.with_name(name))
}
