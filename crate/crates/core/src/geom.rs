//! Axis-aligned boxes in `R^n` and orthonormal frames.
//!
//! Boxes are half-open `[min, max)` so that grid partitions have
//! unambiguous membership.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box with positive side lengths, half-open along every axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxN {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl BoxN {
    pub fn new(min: Vec<f64>, max: Vec<f64>) -> Result<Self> {
        if min.len() != max.len() || min.is_empty() {
            return Err(Error::InvalidParameter("box corners must share a nonzero dimension".into()));
        }
        for i in 0..min.len() {
            if !(min[i] < max[i]) || !min[i].is_finite() || !max[i].is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "box axis {i}: need finite min < max, got [{}, {}]",
                    min[i], max[i]
                )));
            }
        }
        Ok(BoxN { min, max })
    }

    /// Box centered at `center` with the given full side lengths.
    pub fn centered(center: &[f64], sides: &[f64]) -> Result<Self> {
        let min = center.iter().zip(sides).map(|(c, s)| c - 0.5 * s).collect();
        let max = center.iter().zip(sides).map(|(c, s)| c + 0.5 * s).collect();
        BoxN::new(min, max)
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    pub fn side(&self, axis: usize) -> f64 {
        self.max[axis] - self.min[axis]
    }

    pub fn sides(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.side(i)).collect()
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|i| self.side(i)).product()
    }

    pub fn center(&self) -> Vec<f64> {
        self.min.iter().zip(&self.max).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    /// Half-open membership test.
    pub fn contains_point(&self, x: &[f64]) -> bool {
        x.iter()
            .enumerate()
            .all(|(i, &xi)| self.min[i] <= xi && xi < self.max[i])
    }

    pub fn contains_box(&self, other: &BoxN) -> bool {
        (0..self.dim()).all(|i| self.min[i] <= other.min[i] && other.max[i] <= self.max[i])
    }

    pub fn is_disjoint(&self, other: &BoxN) -> bool {
        (0..self.dim()).any(|i| other.max[i] <= self.min[i] || self.max[i] <= other.min[i])
    }

    /// Volume of the intersection (0 when disjoint).
    pub fn intersection_volume(&self, other: &BoxN) -> f64 {
        let mut v = 1.0;
        for i in 0..self.dim() {
            let lo = self.min[i].max(other.min[i]);
            let hi = self.max[i].min(other.max[i]);
            if hi <= lo {
                return 0.0;
            }
            v *= hi - lo;
        }
        v
    }

    pub fn translated(&self, y: &[f64]) -> BoxN {
        BoxN {
            min: self.min.iter().zip(y).map(|(a, b)| a + b).collect(),
            max: self.max.iter().zip(y).map(|(a, b)| a + b).collect(),
        }
    }

    /// Same center, every side multiplied by `factor`.
    pub fn scaled_about_center(&self, factor: f64) -> BoxN {
        let c = self.center();
        BoxN {
            min: (0..self.dim()).map(|i| c[i] - 0.5 * factor * self.side(i)).collect(),
            max: (0..self.dim()).map(|i| c[i] + 0.5 * factor * self.side(i)).collect(),
        }
    }

    /// Grow by `pad[i]` on both sides of axis i.
    pub fn padded(&self, pad: &[f64]) -> BoxN {
        BoxN {
            min: self.min.iter().zip(pad).map(|(a, p)| a - p).collect(),
            max: self.max.iter().zip(pad).map(|(a, p)| a + p).collect(),
        }
    }

    /// Minkowski sum `{x + y : x in self, y in other}`.
    pub fn minkowski_sum(&self, other: &BoxN) -> BoxN {
        BoxN {
            min: self.min.iter().zip(&other.min).map(|(a, b)| a + b).collect(),
            max: self.max.iter().zip(&other.max).map(|(a, b)| a + b).collect(),
        }
    }

    /// Smallest box containing both.
    pub fn hull(&self, other: &BoxN) -> BoxN {
        BoxN {
            min: self.min.iter().zip(&other.min).map(|(a, b)| a.min(*b)).collect(),
            max: self.max.iter().zip(&other.max).map(|(a, b)| a.max(*b)).collect(),
        }
    }
}

/// Orthonormal basis of `R^n`, stored as columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    cols: Vec<Vec<f64>>,
}

impl Frame {
    const ORTHO_TOL: f64 = 1e-10;

    pub fn new(cols: Vec<Vec<f64>>) -> Result<Self> {
        let n = cols.len();
        if n == 0 || cols.iter().any(|c| c.len() != n) {
            return Err(Error::InvalidParameter("frame must be square".into()));
        }
        for i in 0..n {
            for j in i..n {
                let g = dot(&cols[i], &cols[j]);
                let target = if i == j { 1.0 } else { 0.0 };
                if (g - target).abs() > Self::ORTHO_TOL {
                    return Err(Error::InvalidParameter(format!(
                        "frame not orthonormal: <e{i}, e{j}> = {g}"
                    )));
                }
            }
        }
        Ok(Frame { cols })
    }

    pub fn identity(n: usize) -> Self {
        let cols = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Frame { cols }
    }

    pub fn dim(&self) -> usize {
        self.cols.len()
    }

    pub fn column(&self, k: usize) -> &[f64] {
        &self.cols[k]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.cols
    }

    pub fn is_identity(&self, tol: f64) -> bool {
        self.cols.iter().enumerate().all(|(i, c)| {
            c.iter()
                .enumerate()
                .all(|(j, &v)| (v - if i == j { 1.0 } else { 0.0 }).abs() <= tol)
        })
    }

    /// Coordinates of `x` in this frame: `(e_1 . x, ..., e_n . x)`.
    pub fn coordinates(&self, x: &[f64]) -> Vec<f64> {
        self.cols.iter().map(|e| dot(e, x)).collect()
    }

    /// Gram matrix, for orthonormality checks in tests.
    pub fn gram(&self) -> Vec<Vec<f64>> {
        self.cols
            .iter()
            .map(|a| self.cols.iter().map(|b| dot(a, b)).collect())
            .collect()
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Gram-Schmidt on the given spanning vectors. Columns are normalized in
/// input order; returns `None` when the vectors are numerically dependent.
pub fn gram_schmidt(vectors: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = vectors.len();
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(n);
    for v in vectors {
        let mut u = v.clone();
        for e in &out {
            let c = dot(v, e);
            for (ui, ei) in u.iter_mut().zip(e) {
                *ui -= c * ei;
            }
        }
        let scale = norm(v).max(1.0);
        let len = norm(&u);
        if len <= 1e-12 * scale {
            return None;
        }
        for ui in u.iter_mut() {
            *ui /= len;
        }
        out.push(u);
    }
    Some(out)
}

/// Determinant of the matrix whose columns are `cols`, by LU with partial
/// pivoting. Sized for the small dimensions used here.
pub fn determinant(cols: &[Vec<f64>]) -> f64 {
    let n = cols.len();
    debug_assert!(cols.iter().all(|c| c.len() == n));
    // a[i][j] = entry in row i, column j
    let mut a: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| cols[j][i]).collect()).collect();
    let mut det = 1.0;
    for p in 0..n {
        let (pivot_row, pivot) = (p..n)
            .map(|r| (r, a[r][p].abs()))
            .max_by(|x, y| x.1.total_cmp(&y.1))
            .unwrap();
        if pivot == 0.0 {
            return 0.0;
        }
        if pivot_row != p {
            a.swap(p, pivot_row);
            det = -det;
        }
        det *= a[p][p];
        for r in (p + 1)..n {
            let f = a[r][p] / a[p][p];
            for c in p..n {
                a[r][c] -= f * a[p][c];
            }
        }
    }
    det
}
