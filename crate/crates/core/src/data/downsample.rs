use super::LabeledDataset;
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Box-filter weights mapping `input` samples onto `output` samples:
/// `w[o][i]` is the fraction of output cell `o` covered by input cell `i`.
/// Coordinates are scaled by `input · output` so every overlap is an
/// integer and each row sums to exactly one.
pub fn area_weights(input: usize, output: usize) -> Vec<Vec<f64>> {
    (0..output)
        .map(|o| {
            let (lo, hi) = (o * input, (o + 1) * input);
            (0..input)
                .map(|i| {
                    let (a, b) = (i * output, (i + 1) * output);
                    let overlap = hi.min(b).saturating_sub(lo.max(a));
                    overlap as f64 / input as f64
                })
                .collect()
        })
        .collect()
}

/// Exact fractional-area average of each square image down to
/// `side × side` pixels.
pub fn downsample(ds: &LabeledDataset, side: usize) -> Result<LabeledDataset> {
    let (rows, cols) = ds.image_shape().ok_or_else(|| {
        Error::InvalidArgument(format!("{} has no image shape to downsample", ds.name()))
    })?;
    if rows != cols {
        return Err(Error::InvalidArgument(format!(
            "downsampling needs square images, got {rows}x{cols}"
        )));
    }
    if side == 0 || side > rows {
        return Err(Error::InvalidArgument(format!(
            "cannot downsample {rows}x{rows} images to {side}x{side}"
        )));
    }
    let w = area_weights(rows, side);
    let mut out = Matrix::zeros(ds.len(), side * side);
    let mut tmp = vec![0.0; side * cols];
    for (t, img) in ds.features().row_iter().enumerate() {
        // rows first, then columns
        tmp.fill(0.0);
        for (o, wo) in w.iter().enumerate() {
            for (r, &wr) in wo.iter().enumerate() {
                if wr == 0.0 {
                    continue;
                }
                for c in 0..cols {
                    tmp[o * cols + c] += wr * img[r * cols + c];
                }
            }
        }
        let dst = out.row_mut(t);
        for o in 0..side {
            for (p, wp) in w.iter().enumerate() {
                dst[o * side + p] = wp
                    .iter()
                    .enumerate()
                    .filter(|(_, &x)| x != 0.0)
                    .map(|(c, &x)| x * tmp[o * cols + c])
                    .sum();
            }
        }
    }
    LabeledDataset::new(out, ds.labels().to_vec(), ds.classes())?
        .with_name(format!("{}-{side}x{side}", ds.name()))
        .with_split(ds.split())
        .with_image_shape(side, side)
}

/// Down to 10×10 = 100 features per image.
pub fn downsample_100(ds: &LabeledDataset) -> Result<LabeledDataset> {
    downsample(ds, 10)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    fn images(side: usize, rows: Vec<Vec<f64>>) -> LabeledDataset {
        let n = rows.len();
        LabeledDataset::new(Matrix::from_rows(&rows).unwrap(), vec![0; n], 1)
            .unwrap()
            .with_image_shape(side, side)
            .unwrap()
    }

    /// Direct 2-D rectangle intersection in real coordinates.
    fn area_oracle(img: &[f64], side: usize, out: usize) -> Vec<f64> {
        let scale = side as f64 / out as f64;
        let mut res = vec![0.0; out * out];
        for oy in 0..out {
            for ox in 0..out {
                let (y0, y1) = (oy as f64 * scale, (oy + 1) as f64 * scale);
                let (x0, x1) = (ox as f64 * scale, (ox + 1) as f64 * scale);
                let mut acc = 0.0;
                for r in 0..side {
                    for c in 0..side {
                        let dy = (y1.min(r as f64 + 1.0) - y0.max(r as f64)).max(0.0);
                        let dx = (x1.min(c as f64 + 1.0) - x0.max(c as f64)).max(0.0);
                        acc += dy * dx * img[r * side + c];
                    }
                }
                res[oy * out + ox] = acc / (scale * scale);
            }
        }
        res
    }

    #[test]
    fn weights_rows_sum_to_one() {
        for (i, o) in [(28, 10), (32, 10), (20, 10), (7, 3)] {
            for row in area_weights(i, o) {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn constant_image_stays_constant() {
        let ds = images(28, vec![vec![0.37; 784]]);
        let out = downsample_100(&ds).unwrap();
        assert_eq!(out.dim(), 100);
        for &x in out.features().as_slice() {
            assert!((x - 0.37).abs() < 1e-15);
        }
    }

    #[test]
    fn integer_ratio_is_block_mean() {
        let mut rng = Rng::new(1);
        let img: Vec<f64> = (0..400).map(|_| rng.uniform()).collect();
        let out = downsample_100(&images(20, vec![img.clone()])).unwrap();
        for oy in 0..10 {
            for ox in 0..10 {
                let (r, c) = (2 * oy, 2 * ox);
                let mean = (img[r * 20 + c]
                    + img[r * 20 + c + 1]
                    + img[(r + 1) * 20 + c]
                    + img[(r + 1) * 20 + c + 1])
                    / 4.0;
                assert!((out.features()[(0, oy * 10 + ox)] - mean).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn fractional_case_matches_area_oracle_and_preserves_mean() {
        let mut rng = Rng::new(2);
        for side in [28, 32] {
            let img: Vec<f64> = (0..side * side).map(|_| rng.uniform()).collect();
            let out = downsample_100(&images(side, vec![img.clone()])).unwrap();
            let oracle = area_oracle(&img, side, 10);
            for (a, b) in out.features().row(0).iter().zip(&oracle) {
                assert!((a - b).abs() <= 1e-12 * b.abs(), "{a} vs {b}");
            }
            let m_in = img.iter().sum::<f64>() / img.len() as f64;
            let m_out = out.features().row(0).iter().sum::<f64>() / 100.0;
            assert!((m_in - m_out).abs() <= 1e-12 * m_in);
        }
    }

    #[test]
    fn non_square_or_shapeless_input_is_rejected() {
        let ds = LabeledDataset::new(Matrix::zeros(1, 6), vec![0], 1).unwrap();
        assert!(downsample_100(&ds).is_err());
        let ds = ds.with_image_shape(2, 3).unwrap();
        assert!(downsample(&ds, 1).is_err());
    }
}
