use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{norm, Matrix, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LibraryScheme {
    /// Gaussian directions normalized onto the sphere.
    GaussianNormalized,
    /// `m` equiangular points on the unit circle starting at (1, 0); the
    /// `m`-point grid is contained in the `2m`-point grid.
    GridSphere2d,
}

/// A finite set of candidate hidden-unit weight vectors, one unit-norm row each.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitLibrary {
    units: Matrix,
}

impl UnitLibrary {
    pub fn new(units: Matrix) -> Result<Self> {
        for (i, row) in units.row_iter().enumerate() {
            let n = norm(row);
            if !(1.0 - 1e-12..=1.0).contains(&n) {
                return Err(Error::InvalidArgument(format!(
                    "library unit {i} has norm {n}, expected within [1 - 1e-12, 1]"
                )));
            }
        }
        Ok(UnitLibrary { units })
    }

    pub fn units(&self) -> &Matrix {
        &self.units
    }

    pub fn dim(&self) -> usize {
        self.units.cols()
    }

    pub fn len(&self) -> usize {
        self.units.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.units.rows() == 0
    }
}

pub fn sample_library(
    d: usize,
    m: usize,
    scheme: LibraryScheme,
    rng: &mut Rng,
) -> Result<UnitLibrary> {
    if m == 0 || d == 0 {
        return Err(Error::InvalidArgument(
            "a library needs m >= 1 units of dimension >= 1".into(),
        ));
    }
    let units = match scheme {
        LibraryScheme::GridSphere2d => {
            if d != 2 {
                return Err(Error::InvalidArgument(format!(
                    "grid_sphere_2d needs d = 2, got {d}"
                )));
            }
            let rows: Vec<Vec<f64>> = (0..m)
                .map(|i| {
                    let angle = 2.0 * PI * i as f64 / m as f64;
                    onto_sphere(vec![angle.cos(), angle.sin()])
                })
                .collect();
            Matrix::from_rows(&rows)?
        }
        LibraryScheme::GaussianNormalized => {
            let mut rows = Vec::with_capacity(m);
            while rows.len() < m {
                let g = rng.gaussian(d, 1.0);
                let n = norm(&g);
                if n > 1e-8 {
                    rows.push(onto_sphere(g));
                }
            }
            Matrix::from_rows(&rows)?
        }
    };
    UnitLibrary::new(units)
}

/// Scales `x` to unit norm, rounding down so that the computed norm never
/// exceeds 1.
fn onto_sphere(mut x: Vec<f64>) -> Vec<f64> {
    let n = norm(&x);
    x.iter_mut().for_each(|t| *t /= n);
    while norm(&x) > 1.0 {
        x.iter_mut().for_each(|t| *t *= 1.0 - f64::EPSILON);
    }
    x
}

/// ReLU feature matrix `Φ[t, i] = max(⟨u_i, x_t⟩, 0)`, n×m.
pub fn features(lib: &UnitLibrary, x: &Matrix) -> Result<Matrix> {
    Error::check_dim("library dimension", lib.dim(), x.cols())?;
    let mut phi = Matrix::zeros(x.rows(), lib.len());
    for (t, xt) in x.row_iter().enumerate() {
        for (i, u) in lib.units.row_iter().enumerate() {
            phi[(t, i)] = crate::numerics::dot(u, xt).max(0.0);
        }
    }
    Ok(phi)
}
