use serde::{Deserialize, Serialize};

use super::LabeledDataset;
use crate::error::{Error, Result};
use crate::loss::argmax;
use crate::model::NetParams;
use crate::numerics::{norm, Matrix, Rng};

const MAX_TEACHER_ATTEMPTS: usize = 100;
const DRAWS_PER_EXAMPLE: usize = 200;

/// A synthetic dataset labeled by a random `h0`-unit teacher.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedSpec {
    pub d: usize,
    pub h0: usize,
    pub k: usize,
    pub n: usize,
    /// Minimum gap between the teacher's top two scores for an input to be
    /// kept; 0 keeps every draw.
    #[serde(default)]
    pub margin_scale: f64,
}

/// Draws `x ~ N(0, I_d)` and labels it with the teacher's argmax. Teacher
/// hidden weights lie on the unit sphere and output weights are N(0, 1).
/// A teacher that never predicts some class over the sample is discarded and
/// redrawn.
pub fn planted_synthetic(spec: &PlantedSpec, rng: &mut Rng) -> Result<(LabeledDataset, NetParams)> {
    if spec.d == 0 || spec.h0 == 0 || spec.k == 0 || spec.n == 0 {
        return Err(Error::InvalidArgument(format!(
            "planted spec needs positive counts: {spec:?}"
        )));
    }
    if !(spec.margin_scale >= 0.0 && spec.margin_scale.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "margin_scale must be non-negative, got {}",
            spec.margin_scale
        )));
    }
    for _ in 0..MAX_TEACHER_ATTEMPTS {
        let teacher = random_teacher(spec, rng)?;
        if let Some((rows, labels)) = draw_examples(spec, &teacher, rng)? {
            let mut seen = vec![false; spec.k];
            labels.iter().for_each(|&c| seen[c] = true);
            if seen.iter().all(|&s| s) {
                let ds =
                    LabeledDataset::new(Matrix::from_vec(spec.n, spec.d, rows)?, labels, spec.k)?
                        .with_name(format!("planted-d{}-h{}-k{}", spec.d, spec.h0, spec.k));
                return Ok((ds, teacher));
            }
        }
    }
    Err(Error::DegenerateTeacher {
        attempts: MAX_TEACHER_ATTEMPTS,
    })
}

fn random_teacher(spec: &PlantedSpec, rng: &mut Rng) -> Result<NetParams> {
    let mut u = Matrix::from_vec(spec.h0, spec.d, rng.gaussian(spec.h0 * spec.d, 1.0))?;
    for h in 0..spec.h0 {
        let n = norm(u.row(h));
        if n > 0.0 {
            u.row_mut(h).iter_mut().for_each(|x| *x /= n);
        }
    }
    let v = Matrix::from_vec(spec.h0, spec.k, rng.gaussian(spec.h0 * spec.k, 1.0))?;
    NetParams::new(u, v)
}

fn top_two_gap(y: &[f64]) -> f64 {
    let best = argmax(y);
    let runner_up = y
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != best)
        .map(|(_, &v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    y[best] - runner_up
}

fn draw_examples(
    spec: &PlantedSpec,
    teacher: &NetParams,
    rng: &mut Rng,
) -> Result<Option<(Vec<f64>, Vec<usize>)>> {
    let mut rows = Vec::with_capacity(spec.n * spec.d);
    let mut labels = Vec::with_capacity(spec.n);
    let mut draws = 0;
    while labels.len() < spec.n {
        if draws == spec.n * DRAWS_PER_EXAMPLE {
            return Ok(None);
        }
        draws += 1;
        let x = rng.gaussian(spec.d, 1.0);
        let y = teacher.forward(&x)?;
        if spec.k > 1 && top_two_gap(&y) < spec.margin_scale {
            continue;
        }
        labels.push(argmax(&y));
        rows.extend_from_slice(&x);
    }
    Ok(Some((rows, labels)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::predict;

    #[test]
    fn labels_come_from_the_teacher() {
        let spec = PlantedSpec {
            d: 6,
            h0: 4,
            k: 5,
            n: 400,
            margin_scale: 0.05,
        };
        let (ds, teacher) = planted_synthetic(&spec, &mut Rng::new(3)).unwrap();
        assert_eq!((ds.len(), ds.dim(), ds.classes()), (400, 6, 5));
        assert_eq!(predict(&teacher, &ds).unwrap(), ds.labels());
        for c in 0..5 {
            assert!(ds.labels().contains(&c));
        }
        let out = teacher.forward_batch(ds.features()).unwrap();
        assert!(out.row_iter().all(|y| top_two_gap(y) >= 0.05));
    }

    #[test]
    fn generation_is_seeded() {
        let spec = PlantedSpec {
            d: 3,
            h0: 2,
            k: 2,
            n: 50,
            margin_scale: 0.0,
        };
        let a = planted_synthetic(&spec, &mut Rng::new(9)).unwrap();
        let b = planted_synthetic(&spec, &mut Rng::new(9)).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn impossible_specs_fail() {
        let zero = PlantedSpec {
            d: 0,
            h0: 1,
            k: 2,
            n: 1,
            margin_scale: 0.0,
        };
        assert!(planted_synthetic(&zero, &mut Rng::new(1)).is_err());
        // one sample can never show all ten classes
        let degenerate = PlantedSpec {
            d: 2,
            h0: 1,
            k: 10,
            n: 1,
            margin_scale: 0.0,
        };
        assert!(matches!(
            planted_synthetic(&degenerate, &mut Rng::new(1)),
            Err(Error::DegenerateTeacher { attempts: 100 })
        ));
    }
}
