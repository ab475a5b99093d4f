//! MNIST in the IDX container: big-endian u32 header fields followed by raw
//! unsigned bytes. Images use magic 2051 (count, rows, cols), labels 2049
//! (count).

use std::fs;
use std::path::{Path, PathBuf};

use super::LabeledDataset;
use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const IMAGE_MAGIC: u32 = 2051;
pub const LABEL_MAGIC: u32 = 2049;
const MNIST_CLASSES: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MnistSplit {
    Train,
    Test,
}

impl MnistSplit {
    fn prefix(self) -> &'static str {
        match self {
            MnistSplit::Train => "train",
            MnistSplit::Test => "t10k",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

fn parse_err(source: &str, offset: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        source_name: source.to_string(),
        offset,
        message: message.into(),
    }
}

fn read_u32(bytes: &[u8], offset: usize, source: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| parse_err(source, offset, "truncated header"))
}

fn expect_payload(bytes: &[u8], offset: usize, len: usize, source: &str) -> Result<()> {
    let available = bytes.len() - offset;
    if available < len {
        return Err(parse_err(
            source,
            bytes.len(),
            format!("truncated payload: expected {len} bytes after the header, found {available}"),
        ));
    }
    if available > len {
        return Err(parse_err(
            source,
            offset + len,
            format!("{} trailing bytes after the payload", available - len),
        ));
    }
    Ok(())
}

pub fn parse_idx_images(bytes: &[u8], source: &str) -> Result<IdxImages> {
    let magic = read_u32(bytes, 0, source)?;
    if magic != IMAGE_MAGIC {
        return Err(parse_err(
            source,
            0,
            format!("bad magic {magic}, expected {IMAGE_MAGIC} for an image file"),
        ));
    }
    let count = read_u32(bytes, 4, source)? as usize;
    let rows = read_u32(bytes, 8, source)? as usize;
    let cols = read_u32(bytes, 12, source)? as usize;
    expect_payload(bytes, 16, count * rows * cols, source)?;
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels: bytes[16..].to_vec(),
    })
}

pub fn parse_idx_labels(bytes: &[u8], source: &str) -> Result<Vec<u8>> {
    let magic = read_u32(bytes, 0, source)?;
    if magic != LABEL_MAGIC {
        return Err(parse_err(
            source,
            0,
            format!("bad magic {magic}, expected {LABEL_MAGIC} for a label file"),
        ));
    }
    let count = read_u32(bytes, 4, source)? as usize;
    expect_payload(bytes, 8, count, source)?;
    Ok(bytes[8..].to_vec())
}

pub fn encode_idx_images(images: &IdxImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    for field in [
        IMAGE_MAGIC,
        images.count as u32,
        images.rows as u32,
        images.cols as u32,
    ] {
        out.extend_from_slice(&field.to_be_bytes());
    }
    out.extend_from_slice(&images.pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

fn find_file(dir: &Path, candidates: &[String]) -> Result<PathBuf> {
    for name in candidates {
        let path = dir.join(name);
        if path.is_file() {
            return Ok(path);
        }
    }
    Err(Error::MissingDataset {
        path: dir.join(&candidates[0]),
        hint: format!(
            "place the uncompressed MNIST IDX files in {} (see tools/fetch_datasets.sh)",
            dir.display()
        ),
    })
}

/// Reads an MNIST split from `dir`, pixels scaled to [0, 1].
pub fn load_mnist(dir: &Path, which: MnistSplit) -> Result<LabeledDataset> {
    let p = which.prefix();
    let images_path = find_file(
        dir,
        &[
            format!("{p}-images-idx3-ubyte"),
            format!("{p}-images.idx3-ubyte"),
        ],
    )?;
    let labels_path = find_file(
        dir,
        &[
            format!("{p}-labels-idx1-ubyte"),
            format!("{p}-labels.idx1-ubyte"),
        ],
    )?;
    let image_bytes = fs::read(&images_path).map_err(|e| Error::io(&images_path, e))?;
    let label_bytes = fs::read(&labels_path).map_err(|e| Error::io(&labels_path, e))?;
    let images = parse_idx_images(&image_bytes, &images_path.display().to_string())?;
    let labels = parse_idx_labels(&label_bytes, &labels_path.display().to_string())?;
    mnist_dataset(&images, &labels, &format!("mnist-{p}"))
}

pub(crate) fn mnist_dataset(
    images: &IdxImages,
    labels: &[u8],
    name: &str,
) -> Result<LabeledDataset> {
    if images.count != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{name}: {} images but {} labels",
            images.count,
            labels.len()
        )));
    }
    if let Some(pos) = labels.iter().position(|&l| l as usize >= MNIST_CLASSES) {
        return Err(parse_err(
            name,
            8 + pos,
            format!("label {} > 9", labels[pos]),
        ));
    }
    let d = images.rows * images.cols;
    let data = images.pixels.iter().map(|&b| b as f64 / 255.0).collect();
    let features = Matrix::from_vec(images.count, d, data)?;
    LabeledDataset::new(
        features,
        labels.iter().map(|&l| l as usize).collect(),
        MNIST_CLASSES,
    )?
    .with_name(name)
    .with_image_shape(images.rows, images.cols)
}
