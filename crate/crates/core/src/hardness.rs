//! Intersections of homogeneous halfspaces over the hypercube, compiled into
//! a two-layer ReLU network and checked exhaustively.
//!
//! Each halfspace `⟨w_i, x⟩ > 0` with `w_i ∈ {±1}^D` becomes the pair of
//! units `[⟨w_i, x⟩]₊ - [⟨w_i, x⟩ - 1]₊`, which on integer pre-activations is
//! exactly the indicator of the halfspace. The shift by −1 is carried by an
//! extra input coordinate fixed to 1, so the network itself stays bias-free.

use std::fmt;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::NetParams;
use crate::numerics::{Matrix, Rng};

/// Largest dimension [`verify_exhaustive`] will enumerate.
pub const MAX_VERIFY_DIM: usize = 22;

const MAX_COUNTEREXAMPLES: usize = 16;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HalfspaceSet {
    dim: usize,
    normals: Vec<Vec<i8>>,
}

impl HalfspaceSet {
    pub fn new(normals: Vec<Vec<i8>>) -> Result<Self> {
        let dim = normals.first().map_or(0, Vec::len);
        if dim == 0 {
            return Err(Error::InvalidArgument(
                "need at least one normal of dimension >= 1".into(),
            ));
        }
        for (i, w) in normals.iter().enumerate() {
            Error::check_dim("halfspace normal length", dim, w.len())?;
            if let Some(bad) = w.iter().find(|&&e| e != 1 && e != -1) {
                return Err(Error::InvalidArgument(format!(
                    "normal {i} has entry {bad}, expected ±1"
                )));
            }
        }
        Ok(HalfspaceSet { dim, normals })
    }

    pub fn random(dim: usize, k: usize, rng: &mut Rng) -> Result<Self> {
        let normals = (0..k)
            .map(|_| {
                (0..dim)
                    .map(|_| if rng.below(2) == 0 { -1 } else { 1 })
                    .collect()
            })
            .collect();
        Self::new(normals)
    }

    /// Parses rows of signed ones such as `"+1+1,+1-1"`. Rows are separated by
    /// commas, semicolons or newlines; entries may be separated by whitespace
    /// and a bare `1` counts as `+1`. Text after `#` on a line is ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut normals = Vec::new();
        let mut offset = 0;
        for line in text.split_inclusive('\n') {
            let content = line.split('#').next().unwrap_or("");
            let mut row_start = offset;
            for row in content.split([',', ';']) {
                if !row.trim().is_empty() {
                    normals.push(parse_row(row, row_start)?);
                }
                row_start += row.len() + 1;
            }
            offset += line.len();
        }
        if normals.is_empty() {
            return Err(Error::Parse {
                source_name: "normals".into(),
                offset: 0,
                message: "no normals given".into(),
            });
        }
        Self::new(normals)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.normals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.normals.is_empty()
    }

    pub fn normals(&self) -> &[Vec<i8>] {
        &self.normals
    }

    /// `⟨w_i, x⟩` in exact integer arithmetic.
    pub fn inner(&self, i: usize, x: &[i8]) -> i32 {
        self.normals[i]
            .iter()
            .zip(x)
            .map(|(&w, &xi)| i32::from(w) * i32::from(xi))
            .sum()
    }

    /// Number of halfspaces containing `x`, with strict inequality.
    pub fn count_satisfied(&self, x: &[i8]) -> usize {
        (0..self.len()).filter(|&i| self.inner(i, x) > 0).count()
    }

    pub fn contains(&self, x: &[i8]) -> bool {
        self.count_satisfied(x) == self.len()
    }

    /// `Σ_i [⟨w_i, x⟩]₊ - [⟨w_i, x⟩ - 1]₊`, evaluated directly.
    pub fn closed_form(&self, x: &[i8]) -> f64 {
        (0..self.len())
            .map(|i| {
                let z = f64::from(self.inner(i, x));
                z.max(0.0) - (z - 1.0).max(0.0)
            })
            .sum()
    }
}

impl fmt::Display for HalfspaceSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, w) in self.normals.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            for &e in w {
                f.write_str(if e > 0 { "+1" } else { "-1" })?;
            }
        }
        Ok(())
    }
}

fn parse_row(row: &str, offset: usize) -> Result<Vec<i8>> {
    let err = |at: usize, message: String| Error::Parse {
        source_name: "normals".into(),
        offset: offset + at,
        message,
    };
    let mut out = Vec::new();
    let mut sign: Option<i8> = None;
    for (at, c) in row.char_indices() {
        match c {
            '+' | '-' if sign.is_none() => sign = Some(if c == '+' { 1 } else { -1 }),
            '1' => out.push(sign.take().unwrap_or(1)),
            c if c.is_whitespace() && sign.is_none() => {}
            c => {
                return Err(err(
                    at,
                    format!("unexpected character {c:?}, expected +1 or -1"),
                ))
            }
        }
    }
    if sign.is_some() {
        return Err(err(row.len(), "dangling sign at end of row".into()));
    }
    Ok(out)
}

/// Appends the constant coordinate used to carry the unit shift.
pub fn augment(x: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len() + 1);
    out.extend_from_slice(x);
    out.push(1.0);
    out
}

/// Two hidden units per halfspace on inputs augmented by a constant 1:
/// unit `2i` has weights `(w_i, 0)` and output weight +1, unit `2i+1` has
/// `(w_i, −1)` and output weight −1.
pub fn compile(hs: &HalfspaceSet) -> NetParams {
    let d = hs.dim();
    let k = hs.len();
    let mut u = Matrix::zeros(2 * k, d + 1);
    let mut v = Matrix::zeros(2 * k, 1);
    for (i, w) in hs.normals().iter().enumerate() {
        for (j, &e) in w.iter().enumerate() {
            u[(2 * i, j)] = f64::from(e);
            u[(2 * i + 1, j)] = f64::from(e);
        }
        u[(2 * i + 1, d)] = -1.0;
        v[(2 * i, 0)] = 1.0;
        v[(2 * i + 1, 0)] = -1.0;
    }
    NetParams::new(u, v).expect("compiled shapes are consistent")
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Violation {
    /// A unit pair's contribution is not the halfspace indicator.
    Term { halfspace: usize, term: String },
    /// The output is not the number of satisfied halfspaces.
    Count { output: String, expected: usize },
    /// A member scores below `k` or a non-member above `k − 1`.
    Margin { output: String, member: bool },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counterexample {
    pub x: Vec<i8>,
    pub violation: Violation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub dim: usize,
    pub halfspaces: usize,
    pub points_checked: u64,
    pub members: u64,
    pub violations: u64,
    /// Smallest output over members minus largest over non-members; `None`
    /// unless both kinds of point occur.
    pub margin_gap: Option<f64>,
    /// The first few violations in enumeration order.
    pub counterexamples: Vec<Counterexample>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

#[derive(Clone, Debug, Default)]
struct Partial {
    points: u64,
    members: u64,
    violations: u64,
    min_member: Option<f64>,
    max_other: Option<f64>,
    counterexamples: Vec<Counterexample>,
}

impl Partial {
    fn merge(mut self, other: Partial) -> Partial {
        self.points += other.points;
        self.members += other.members;
        self.violations += other.violations;
        self.min_member = opt_fold(self.min_member, other.min_member, f64::min);
        self.max_other = opt_fold(self.max_other, other.max_other, f64::max);
        let room = MAX_COUNTEREXAMPLES.saturating_sub(self.counterexamples.len());
        self.counterexamples
            .extend(other.counterexamples.into_iter().take(room));
        self
    }

    fn record(&mut self, x: &[i8], violation: Violation) {
        self.violations += 1;
        if self.counterexamples.len() < MAX_COUNTEREXAMPLES {
            self.counterexamples.push(Counterexample {
                x: x.to_vec(),
                violation,
            });
        }
    }
}

fn opt_fold(a: Option<f64>, b: Option<f64>, f: fn(f64, f64) -> f64) -> Option<f64> {
    match (a, b) {
        (Some(a), Some(b)) => Some(f(a, b)),
        (a, None) => a,
        (None, b) => b,
    }
}

/// Hypercube point with index `bits`: coordinate `j` is +1 when bit `j` is set.
fn cube_point(bits: u64, dim: usize, out: &mut [i8]) {
    for (j, o) in out.iter_mut().enumerate().take(dim) {
        *o = if bits >> j & 1 == 1 { 1 } else { -1 };
    }
}

fn check_range(hs: &HalfspaceSet, net: &NetParams, range: std::ops::Range<u64>) -> Result<Partial> {
    let d = hs.dim();
    let k = hs.len();
    let mut part = Partial::default();
    let mut x = vec![0i8; d];
    let mut xf = vec![1.0; d + 1];
    for bits in range {
        cube_point(bits, d, &mut x);
        for (f, &e) in xf.iter_mut().zip(&x) {
            *f = f64::from(e);
        }
        let z = net.pre_activations(&xf)?;
        let out = net.forward(&xf)?[0];
        let mut satisfied = 0;
        for i in 0..k {
            let term = z[2 * i].max(0.0) - z[2 * i + 1].max(0.0);
            let indicator = hs.inner(i, &x) > 0;
            satisfied += usize::from(indicator);
            if term != if indicator { 1.0 } else { 0.0 } {
                part.record(
                    &x,
                    Violation::Term {
                        halfspace: i,
                        term: term.to_string(),
                    },
                );
            }
        }
        if out != satisfied as f64 {
            part.record(
                &x,
                Violation::Count {
                    output: out.to_string(),
                    expected: satisfied,
                },
            );
        }
        let member = satisfied == k;
        let margin_ok = if member {
            out >= k as f64
        } else {
            out <= k as f64 - 1.0
        };
        if !margin_ok {
            part.record(
                &x,
                Violation::Margin {
                    output: out.to_string(),
                    member,
                },
            );
        }
        if member {
            part.members += 1;
            part.min_member = opt_fold(part.min_member, Some(out), f64::min);
        } else {
            part.max_other = opt_fold(part.max_other, Some(out), f64::max);
        }
        part.points += 1;
    }
    Ok(part)
}

/// Evaluates the compiled network on every point of `{±1}^D` and checks that
/// each unit pair is the halfspace indicator, that the output counts the
/// satisfied halfspaces, and that members are separated from non-members by
/// at least 1. Work is split into contiguous shards over the rayon pool and
/// merged in order, so the report does not depend on the thread count.
pub fn verify_exhaustive(hs: &HalfspaceSet) -> Result<VerificationReport> {
    let d = hs.dim();
    if d > MAX_VERIFY_DIM {
        return Err(Error::InvalidArgument(format!(
            "exhaustive verification enumerates 2^D points; D = {d} exceeds {MAX_VERIFY_DIM}"
        )));
    }
    let net = compile(hs);
    let total = 1u64 << d;
    let shard = 4096u64;
    let shards: Vec<u64> = (0..total.div_ceil(shard)).collect();
    let parts = shards
        .par_iter()
        .map(|&s| check_range(hs, &net, s * shard..((s + 1) * shard).min(total)))
        .collect::<Result<Vec<_>>>()?;
    let merged = parts.into_iter().fold(Partial::default(), Partial::merge);
    Ok(VerificationReport {
        dim: d,
        halfspaces: hs.len(),
        points_checked: merged.points,
        members: merged.members,
        violations: merged.violations,
        margin_gap: match (merged.min_member, merged.max_other) {
            (Some(a), Some(b)) => Some(a - b),
            _ => None,
        },
        counterexamples: merged.counterexamples,
    })
}
