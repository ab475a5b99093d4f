//! The bias-free two-layer ReLU network `y[j] = Σ_h v_hj · max(⟨u_h, x⟩, 0)`.
//!
//! Besides the forward and backward passes this module carries the two
//! function-preserving reparameterizations of a single-output network: the
//! per-unit rescaling that equalizes `‖u_h‖` and `|v_h|`, and the rescaling
//! that puts every hidden weight vector on the unit sphere.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{dot, norm, Matrix, Rng};

pub const CHECKPOINT_FORMAT: &str = "relulab.netparams";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Weights of the network. Row `h` of `u` (H×d) is the hidden unit's input
/// weight vector, row `h` of `v` (H×k) its output weights.
#[derive(Clone, Debug, PartialEq)]
pub struct NetParams {
    u: Matrix,
    v: Matrix,
}

/// Gradients with the shapes of the [`NetParams`] they differentiate.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub du: Matrix,
    pub dv: Matrix,
}

impl Gradients {
    pub fn zeros_like(p: &NetParams) -> Self {
        Gradients {
            du: Matrix::zeros(p.hidden(), p.input_dim()),
            dv: Matrix::zeros(p.hidden(), p.outputs()),
        }
    }

    pub fn scale(&mut self, c: f64) {
        self.du.scale(c);
        self.dv.scale(c);
    }

    pub fn add_scaled(&mut self, c: f64, other: &Gradients) -> Result<()> {
        self.du.add_scaled(c, &other.du)?;
        self.dv.add_scaled(c, &other.dv)
    }

    pub fn is_finite(&self) -> bool {
        self.du.is_finite() && self.dv.is_finite()
    }
}

impl NetParams {
    pub fn new(u: Matrix, v: Matrix) -> Result<Self> {
        Error::check_dim("NetParams hidden units", u.rows(), v.rows())?;
        if u.rows() == 0 {
            return Err(Error::InvalidArgument(
                "a network needs at least one hidden unit".into(),
            ));
        }
        if !u.is_finite() || !v.is_finite() {
            return Err(Error::NonFinite("NetParams"));
        }
        Ok(NetParams { u, v })
    }

    /// All weights i.i.d. N(0, sigma²).
    pub fn init(d: usize, hidden: usize, k: usize, sigma: f64, rng: &mut Rng) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "init sigma must be positive, got {sigma}"
            )));
        }
        let u = Matrix::from_vec(hidden, d, rng.gaussian(hidden * d, sigma))?;
        let v = Matrix::from_vec(hidden, k, rng.gaussian(hidden * k, sigma))?;
        NetParams::new(u, v)
    }

    pub fn input_dim(&self) -> usize {
        self.u.cols()
    }

    pub fn hidden(&self) -> usize {
        self.u.rows()
    }

    pub fn outputs(&self) -> usize {
        self.v.cols()
    }

    pub fn u(&self) -> &Matrix {
        &self.u
    }

    pub fn v(&self) -> &Matrix {
        &self.v
    }

    pub fn parts_mut(&mut self) -> (&mut Matrix, &mut Matrix) {
        (&mut self.u, &mut self.v)
    }

    pub fn into_parts(self) -> (Matrix, Matrix) {
        (self.u, self.v)
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.v.is_finite()
    }

    /// Hidden pre-activations `⟨u_h, x⟩`.
    pub fn pre_activations(&self, x: &[f64]) -> Result<Vec<f64>> {
        Error::check_dim("forward input", self.input_dim(), x.len())?;
        Ok(self.u.row_iter().map(|row| dot(row, x)).collect())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let z = self.pre_activations(x)?;
        Ok(self.forward_from_pre(&z))
    }

    pub(crate) fn forward_from_pre(&self, z: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.outputs()];
        for (h, &zh) in z.iter().enumerate() {
            if zh > 0.0 {
                for (yj, &vhj) in y.iter_mut().zip(self.v.row(h)) {
                    *yj += vhj * zh;
                }
            }
        }
        y
    }

    /// Forward pass for every row of `x`, returned as an n×k matrix.
    pub fn forward_batch(&self, x: &Matrix) -> Result<Matrix> {
        Error::check_dim("forward_batch input", self.input_dim(), x.cols())?;
        let k = self.outputs();
        let mut out = Matrix::zeros(x.rows(), k);
        for (t, row) in x.row_iter().enumerate() {
            let z: Vec<f64> = self.u.row_iter().map(|u| dot(u, row)).collect();
            out.row_mut(t).copy_from_slice(&self.forward_from_pre(&z));
        }
        Ok(out)
    }

    /// Gradient of a loss with respect to the weights, given `dloss_dy`. The
    /// ReLU derivative at a zero pre-activation is taken as 0.
    pub fn backward(&self, x: &[f64], dloss_dy: &[f64]) -> Result<Gradients> {
        let mut g = Gradients::zeros_like(self);
        self.accumulate_backward(x, dloss_dy, 1.0, &mut g)?;
        Ok(g)
    }

    /// `g += scale · ∂loss/∂params` for one example.
    pub fn accumulate_backward(
        &self,
        x: &[f64],
        dloss_dy: &[f64],
        scale: f64,
        g: &mut Gradients,
    ) -> Result<()> {
        let z = self.pre_activations(x)?;
        self.accumulate_backward_with_pre(x, &z, dloss_dy, scale, g)
    }

    /// As [`NetParams::accumulate_backward`], reusing pre-activations `z`
    /// already computed for `x`.
    pub(crate) fn accumulate_backward_with_pre(
        &self,
        x: &[f64],
        z: &[f64],
        dloss_dy: &[f64],
        scale: f64,
        g: &mut Gradients,
    ) -> Result<()> {
        Error::check_dim("backward upstream gradient", self.outputs(), dloss_dy.len())?;
        for (h, &zh) in z.iter().enumerate() {
            if zh <= 0.0 {
                continue;
            }
            let vrow = self.v.row(h);
            let back = scale * dot(vrow, dloss_dy);
            for (dv, &dy) in g.dv.row_mut(h).iter_mut().zip(dloss_dy) {
                *dv += scale * zh * dy;
            }
            if back != 0.0 {
                for (du, &xi) in g.du.row_mut(h).iter_mut().zip(x) {
                    *du += back * xi;
                }
            }
        }
        Ok(())
    }

    fn require_single_output(&self, what: &'static str) -> Result<()> {
        if self.outputs() == 1 {
            Ok(())
        } else {
            Err(Error::RequiresSingleOutput(what))
        }
    }

    /// Rescales each unit so that `‖u_h‖ = |v_h|` without changing the
    /// network function. Units with `u_h = 0` or `v_h = 0` contribute nothing
    /// and are zeroed entirely.
    pub fn balance(&self) -> Result<NetParams> {
        self.require_single_output("balance")?;
        let mut out = self.clone();
        for h in 0..self.hidden() {
            let un = norm(self.u.row(h));
            let vh = self.v[(h, 0)];
            if un == 0.0 || vh == 0.0 {
                out.u.row_mut(h).fill(0.0);
                out.v[(h, 0)] = 0.0;
                continue;
            }
            let c = (vh.abs() / un).sqrt();
            out.u.row_mut(h).iter_mut().for_each(|x| *x *= c);
            out.v[(h, 0)] = vh / c;
        }
        Ok(out)
    }

    /// Moves each nonzero `u_h` onto the unit sphere, pushing its norm into
    /// `v_h`. Afterwards `Σ_h |v_h|` equals `Σ_h ‖u_h‖·|v_h|` of the input.
    pub fn normalize_to_unit(&self) -> Result<NetParams> {
        self.require_single_output("normalize_to_unit")?;
        let mut out = self.clone();
        for h in 0..self.hidden() {
            let un = norm(self.u.row(h));
            if un == 0.0 {
                continue;
            }
            out.u.row_mut(h).iter_mut().for_each(|x| *x /= un);
            out.v[(h, 0)] *= un;
        }
        Ok(out)
    }

    /// `½ Σ_h (‖u_h‖² + ‖v_h‖²)`.
    pub fn half_squared_norm(&self) -> f64 {
        0.5 * (self.u.frobenius_sq() + self.v.frobenius_sq())
    }

    /// `Σ_h ‖u_h‖ · ‖v_h‖`, the quantity the per-unit rescaling cannot change.
    pub fn path_norm(&self) -> f64 {
        (0..self.hidden())
            .map(|h| norm(self.u.row(h)) * norm(self.v.row(h)))
            .sum()
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&Checkpoint::from(self))?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<NetParams> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str::<Checkpoint>(&text)?.try_into()
    }
}

/// On-disk checkpoint: shapes plus row-major flat arrays.
#[derive(Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub input_dim: usize,
    pub hidden: usize,
    pub outputs: usize,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl From<&NetParams> for Checkpoint {
    fn from(p: &NetParams) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            input_dim: p.input_dim(),
            hidden: p.hidden(),
            outputs: p.outputs(),
            u: p.u.as_slice().to_vec(),
            v: p.v.as_slice().to_vec(),
        }
    }
}

impl TryFrom<Checkpoint> for NetParams {
    type Error = Error;

    fn try_from(c: Checkpoint) -> Result<Self> {
        if c.format != CHECKPOINT_FORMAT || c.version != CHECKPOINT_VERSION {
            return Err(Error::InvalidArgument(format!(
                "unsupported checkpoint {} v{}",
                c.format, c.version
            )));
        }
        NetParams::new(
            Matrix::from_vec(c.hidden, c.input_dim, c.u)?,
            Matrix::from_vec(c.hidden, c.outputs, c.v)?,
        )
    }
}

impl Serialize for NetParams {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        Checkpoint::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for NetParams {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Checkpoint::deserialize(d)?
            .try_into()
            .map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(u: &[f64], v: f64) -> NetParams {
        NetParams::new(
            Matrix::from_vec(1, u.len(), u.to_vec()).unwrap(),
            Matrix::from_vec(1, 1, vec![v]).unwrap(),
        )
        .unwrap()
    }

    fn naive_forward(p: &NetParams, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; p.outputs()];
        for j in 0..p.outputs() {
            for h in 0..p.hidden() {
                let mut z = 0.0;
                for i in 0..p.input_dim() {
                    z += p.u()[(h, i)] * x[i];
                }
                y[j] += p.v()[(h, j)] * if z > 0.0 { z } else { 0.0 };
            }
        }
        y
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
    }

    fn random_k1(rng: &mut Rng, d: usize, h: usize) -> NetParams {
        NetParams::init(d, h, 1, 1.0, rng).unwrap()
    }

    #[test]
    fn forward_single_unit_by_hand() {
        let p = single(&[1.0, -1.0], 1.0);
        assert_eq!(p.forward(&[3.0, 1.0]).unwrap(), vec![2.0]);
        assert_eq!(p.forward(&[1.0, 3.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn forward_matches_per_unit_loop() {
        let mut rng = Rng::new(17);
        let p = NetParams::init(5, 8, 3, 1.0, &mut rng).unwrap();
        for _ in 0..20 {
            let x = rng.gaussian(5, 1.0);
            assert_eq!(p.forward(&x).unwrap(), naive_forward(&p, &x));
        }
        let xs = Matrix::from_vec(4, 5, rng.gaussian(20, 1.0)).unwrap();
        let batch = p.forward_batch(&xs).unwrap();
        for t in 0..4 {
            assert_eq!(batch.row(t), p.forward(xs.row(t)).unwrap().as_slice());
        }
    }

    #[test]
    fn forward_rejects_wrong_input_length() {
        let p = single(&[1.0, -1.0], 1.0);
        assert!(matches!(
            p.forward(&[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(p.backward(&[1.0, 1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_gradients() {
        let mut rng = Rng::new(4);
        let p = NetParams::init(3, 4, 2, 1.0, &mut rng).unwrap();
        let g = p.backward(&[1.0, -2.0, 0.5], &[0.0, 0.0]).unwrap();
        assert_eq!(g, Gradients::zeros_like(&p));
    }

    #[test]
    fn inactive_unit_has_zero_input_gradient() {
        let u = Matrix::from_rows(&[vec![1.0, 0.0], vec![-1.0, 0.0]]).unwrap();
        let v = Matrix::from_rows(&[vec![2.0], vec![3.0]]).unwrap();
        let p = NetParams::new(u, v).unwrap();
        let g = p.backward(&[1.5, 4.0], &[1.0]).unwrap();
        assert_eq!(g.du.row(1), &[0.0, 0.0]);
        assert_eq!(g.dv[(1, 0)], 0.0);
        assert_eq!(g.du.row(0), &[2.0 * 1.5, 2.0 * 4.0]);
        assert_eq!(g.dv[(0, 0)], 1.5);
    }

    #[test]
    fn backward_matches_central_differences() {
        let mut rng = Rng::new(23);
        let eps = 1e-6;
        for _ in 0..10 {
            let p = NetParams::init(4, 6, 3, 1.0, &mut rng).unwrap();
            let x = rng.gaussian(4, 1.0);
            if p.pre_activations(&x)
                .unwrap()
                .iter()
                .any(|z| z.abs() < 1e-3)
            {
                continue;
            }
            // scalar loss c·y
            let c = rng.gaussian(3, 1.0);
            let loss = |q: &NetParams| dot(&q.forward(&x).unwrap(), &c);
            let g = p.backward(&x, &c).unwrap();
            for idx in 0..p.u().as_slice().len() {
                let mut plus = p.clone();
                plus.u.as_mut_slice()[idx] += eps;
                let mut minus = p.clone();
                minus.u.as_mut_slice()[idx] -= eps;
                let fd = (loss(&plus) - loss(&minus)) / (2.0 * eps);
                let an = g.du.as_slice()[idx];
                assert!((fd - an).abs() <= 1e-6 * an.abs().max(fd.abs()).max(1e-6));
            }
            for idx in 0..p.v().as_slice().len() {
                let mut plus = p.clone();
                plus.v.as_mut_slice()[idx] += eps;
                let mut minus = p.clone();
                minus.v.as_mut_slice()[idx] -= eps;
                let fd = (loss(&plus) - loss(&minus)) / (2.0 * eps);
                let an = g.dv.as_slice()[idx];
                assert!((fd - an).abs() <= 1e-6 * an.abs().max(fd.abs()).max(1e-6));
            }
        }
    }

    #[test]
    fn init_is_deterministic_and_scaled() {
        let a = NetParams::init(100, 64, 1, 0.1, &mut Rng::new(8)).unwrap();
        let b = NetParams::init(100, 64, 1, 0.1, &mut Rng::new(8)).unwrap();
        assert_eq!(a, b);
        let xs = a.u().as_slice();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((0.095..=0.105).contains(&sd), "sd {sd}");
        assert!(NetParams::init(2, 2, 1, 0.0, &mut Rng::new(1)).is_err());
    }

    #[test]
    fn balance_hand_example() {
        let b = single(&[3.0, 0.0], 4.0).balance().unwrap();
        let un = norm(b.u().row(0));
        let vn = b.v()[(0, 0)];
        let target = 2.0 * 3.0f64.sqrt();
        assert!(rel(un, target) < 1e-15 && rel(vn, target) < 1e-15);
        assert!(rel(b.half_squared_norm(), 12.0) < 1e-15);
    }

    #[test]
    fn balance_fixed_point_and_dead_units() {
        let p = single(&[0.6, 0.8], -1.0);
        assert_eq!(p.balance().unwrap(), p);

        let u = Matrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 0.0], vec![3.0, -1.0]]).unwrap();
        let v = Matrix::from_rows(&[vec![0.0], vec![5.0], vec![2.0]]).unwrap();
        let b = NetParams::new(u, v).unwrap().balance().unwrap();
        assert_eq!(b.u().row(0), &[0.0, 0.0]);
        assert_eq!(b.v()[(1, 0)], 0.0);
        assert!(rel(norm(b.u().row(2)), b.v()[(2, 0)]) < 1e-15);
    }

    #[test]
    fn normalize_hand_example() {
        let n = single(&[3.0, 0.0], 4.0).normalize_to_unit().unwrap();
        assert_eq!(n.u().row(0), &[1.0, 0.0]);
        assert_eq!(n.v()[(0, 0)], 12.0);
        let unit = single(&[0.0, 1.0], -2.5);
        assert_eq!(unit.normalize_to_unit().unwrap(), unit);
    }

    #[test]
    fn reparameterizations_need_single_output() {
        let p = NetParams::init(2, 3, 2, 1.0, &mut Rng::new(0)).unwrap();
        assert!(matches!(p.balance(), Err(Error::RequiresSingleOutput(_))));
        assert!(matches!(
            p.normalize_to_unit(),
            Err(Error::RequiresSingleOutput(_))
        ));
    }

    #[test]
    fn reparameterizations_preserve_forward() {
        let mut rng = Rng::new(31);
        let p = random_k1(&mut rng, 5, 10);
        let b = p.balance().unwrap();
        let n = p.normalize_to_unit().unwrap();
        for _ in 0..100 {
            let x = rng.gaussian(5, 1.0);
            let y = p.forward(&x).unwrap()[0];
            assert!(rel(b.forward(&x).unwrap()[0], y) < 1e-12);
            assert!(rel(n.forward(&x).unwrap()[0], y) < 1e-12);
        }
        let l1: f64 = (0..n.hidden()).map(|h| n.v()[(h, 0)].abs()).sum();
        assert!(rel(l1, p.path_norm()) < 1e-12);
    }

    #[test]
    fn checkpoint_round_trip() {
        let p = NetParams::init(3, 2, 2, 0.5, &mut Rng::new(12)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.json");
        p.save_json(&path).unwrap();
        assert_eq!(NetParams::load_json(&path).unwrap(), p);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"format\": \"relulab.netparams\""));
    }

    proptest::proptest! {
        #[test]
        fn positive_rescaling_leaves_output_unchanged(seed in 0u64..500, c in 0.01f64..100.0) {
            let mut rng = Rng::new(seed);
            let p = NetParams::init(3, 4, 2, 1.0, &mut rng).unwrap();
            let (mut u, mut v) = p.clone().into_parts();
            u.row_mut(1).iter_mut().for_each(|x| *x *= c);
            v.row_mut(1).iter_mut().for_each(|x| *x /= c);
            let q = NetParams::new(u, v).unwrap();
            let x = rng.gaussian(3, 1.0);
            let (a, b) = (p.forward(&x).unwrap(), q.forward(&x).unwrap());
            for (ya, yb) in a.iter().zip(&b) {
                proptest::prop_assert!((ya - yb).abs() <= 1e-12 * ya.abs().max(1.0));
            }
        }

        #[test]
        fn am_gm_and_idempotence(seed in 0u64..500, h in 1usize..12) {
            let mut rng = Rng::new(seed);
            let p = random_k1(&mut rng, 3, h);
            let b = p.balance().unwrap();
            proptest::prop_assert!(p.half_squared_norm() >= p.path_norm() * (1.0 - 1e-15));
            proptest::prop_assert!(rel(b.half_squared_norm(), p.path_norm()) < 1e-12);
            let bb = b.balance().unwrap();
            let n = p.normalize_to_unit().unwrap();
            let nn = n.normalize_to_unit().unwrap();
            for (x, y) in bb.u().as_slice().iter().zip(b.u().as_slice()) {
                proptest::prop_assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0));
            }
            for (x, y) in nn.v().as_slice().iter().zip(n.v().as_slice()) {
                proptest::prop_assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0));
            }
        }
    }
}
