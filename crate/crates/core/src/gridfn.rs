//! Cell-centered sampled functions on boxes: norms, cube averages,
//! translation, restriction, and persistence.
//!
//! Samples sit at cell centers and quadrature is the midpoint rule, so
//! integrals of smooth functions converge at second order and indicator
//! masses tile exactly. A `GridFunction` represents a function on all of
//! `R^n` that vanishes outside its domain box.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::BoxN;

/// Hard cap on the dimension so interpolation can use stack buffers.
pub const MAX_DIM: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    domain: BoxN,
    counts: Vec<usize>,
}

impl GridGeometry {
    pub fn new(domain: BoxN, counts: Vec<usize>) -> Result<Self> {
        if counts.len() != domain.dim() {
            return Err(Error::InvalidParameter("counts must match the box dimension".into()));
        }
        if domain.dim() > MAX_DIM {
            return Err(Error::InvalidParameter(format!("dimension above {MAX_DIM} unsupported")));
        }
        if counts.iter().any(|&c| c == 0) {
            return Err(Error::InvalidParameter("counts must be positive".into()));
        }
        let cells: usize = counts.iter().product();
        if cells > 1 << 31 {
            return Err(Error::InvalidParameter(format!("grid too large: {cells} cells")));
        }
        Ok(GridGeometry { domain, counts })
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn domain(&self) -> &BoxN {
        &self.domain
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn mesh(&self, axis: usize) -> f64 {
        self.domain.side(axis) / self.counts[axis] as f64
    }

    pub fn meshes(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.mesh(i)).collect()
    }

    pub fn cell_count(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn cell_volume(&self) -> f64 {
        self.meshes().iter().product()
    }

    /// Row-major flat index, axis 0 slowest.
    pub fn flat_index(&self, multi: &[usize]) -> usize {
        let mut idx = 0;
        for (i, &m) in multi.iter().enumerate() {
            debug_assert!(m < self.counts[i]);
            idx = idx * self.counts[i] + m;
        }
        idx
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut multi = vec![0; self.dim()];
        for i in (0..self.dim()).rev() {
            multi[i] = flat % self.counts[i];
            flat /= self.counts[i];
        }
        multi
    }

    pub fn cell_center(&self, multi: &[usize]) -> Vec<f64> {
        multi
            .iter()
            .enumerate()
            .map(|(i, &m)| self.domain.min[i] + (m as f64 + 0.5) * self.mesh(i))
            .collect()
    }

    pub fn cell_box(&self, multi: &[usize]) -> BoxN {
        let min: Vec<f64> = multi
            .iter()
            .enumerate()
            .map(|(i, &m)| self.domain.min[i] + m as f64 * self.mesh(i))
            .collect();
        let max: Vec<f64> = multi
            .iter()
            .enumerate()
            .map(|(i, &m)| self.domain.min[i] + (m + 1) as f64 * self.mesh(i))
            .collect();
        BoxN { min, max }
    }

    /// Per-axis index ranges of cells meeting `q` (clamped to the domain),
    /// or `None` when `q` misses the domain entirely.
    fn overlap_ranges(&self, q: &BoxN) -> Option<Vec<std::ops::Range<usize>>> {
        let mut ranges = Vec::with_capacity(self.dim());
        for i in 0..self.dim() {
            let h = self.mesh(i);
            let lo = ((q.min[i] - self.domain.min[i]) / h).floor().max(0.0) as usize;
            let hi_f = ((q.max[i] - self.domain.min[i]) / h).ceil();
            if hi_f <= 0.0 || lo >= self.counts[i] {
                return None;
            }
            let hi = (hi_f as usize).min(self.counts[i]);
            if lo >= hi {
                return None;
            }
            ranges.push(lo..hi);
        }
        Some(ranges)
    }

    pub fn refined(&self, factors: &[usize]) -> Result<GridGeometry> {
        let counts = self
            .counts
            .iter()
            .zip(factors)
            .map(|(&c, &f)| c * f)
            .collect();
        GridGeometry::new(self.domain.clone(), counts)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    geom: GridGeometry,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(geom: GridGeometry, values: Vec<f64>) -> Result<Self> {
        if values.len() != geom.cell_count() {
            return Err(Error::InvalidParameter(format!(
                "value count {} does not match the {} cells",
                values.len(),
                geom.cell_count()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("grid values must be finite".into()));
        }
        Ok(GridFunction { geom, values })
    }

    pub fn zeros(geom: GridGeometry) -> Self {
        let n = geom.cell_count();
        GridFunction { geom, values: vec![0.0; n] }
    }

    pub fn constant(geom: GridGeometry, c: f64) -> Self {
        let n = geom.cell_count();
        GridFunction { geom, values: vec![c; n] }
    }

    /// Sample `f` at every cell center.
    pub fn from_fn<F: Fn(&[f64]) -> f64>(geom: GridGeometry, f: F) -> Result<Self> {
        let values = (0..geom.cell_count())
            .map(|flat| {
                let c = geom.cell_center(&geom.multi_index(flat));
                f(&c)
            })
            .collect();
        GridFunction::new(geom, values)
    }

    /// Indicator of a box, with partial-cell weighting at the boundary.
    pub fn indicator(geom: GridGeometry, e: &BoxN) -> Self {
        GridFunction::constant(geom, 1.0).restrict(e)
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geom
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, flat: usize) -> f64 {
        self.values[flat]
    }

    /// `(sum |f|^p cellvol)^{1/p}`; `p = infinity` gives the max.
    pub fn lp_norm(&self, p: f64) -> f64 {
        assert!(p >= 1.0, "lp_norm needs p >= 1, got {p}");
        if p.is_infinite() {
            return self.values.iter().fold(0.0, |a, v| a.max(v.abs()));
        }
        let vol = self.geom.cell_volume();
        let sum: f64 = self.values.iter().map(|v| v.abs().powf(p) * vol).sum();
        sum.powf(1.0 / p)
    }

    /// `(|Q|^{-1} int_Q |f|^p)^{1/p}` by midpoint quadrature with
    /// partial-cell weights. A box disjoint from the domain contributes 0;
    /// `average_flagged` reports whether any overlap existed.
    pub fn average(&self, q: &BoxN, p: f64) -> f64 {
        self.average_flagged(q, p).0
    }

    pub fn average_flagged(&self, q: &BoxN, p: f64) -> (f64, bool) {
        assert!(p >= 1.0 && p.is_finite(), "average needs finite p >= 1, got {p}");
        let mut sum = 0.0;
        let mut any = false;
        self.for_each_overlap(q, |v, w| {
            sum += v.abs().powf(p) * w;
            any = true;
        });
        ((sum / q.volume()).powf(1.0 / p), any)
    }

    /// Signed mean `|Q|^{-1} int_Q f`.
    pub fn mean(&self, q: &BoxN) -> f64 {
        let mut sum = 0.0;
        self.for_each_overlap(q, |v, w| sum += v * w);
        sum / q.volume()
    }

    /// `int_Q f` (signed).
    pub fn integral_over(&self, q: &BoxN) -> f64 {
        let mut sum = 0.0;
        self.for_each_overlap(q, |v, w| sum += v * w);
        sum
    }

    pub fn integral(&self) -> f64 {
        let vol = self.geom.cell_volume();
        self.values.iter().map(|v| v * vol).sum()
    }

    /// Visit `(value, overlap volume)` for cells meeting `q`.
    fn for_each_overlap<F: FnMut(f64, f64)>(&self, q: &BoxN, mut f: F) {
        let Some(ranges) = self.geom.overlap_ranges(q) else {
            return;
        };
        let dim = self.geom.dim();
        let mut idx: Vec<usize> = ranges.iter().map(|r| r.start).collect();
        loop {
            let mut w = 1.0;
            for i in 0..dim {
                let h = self.geom.mesh(i);
                let lo = self.geom.domain().min[i] + idx[i] as f64 * h;
                let hi = lo + h;
                let o = hi.min(q.max[i]) - lo.max(q.min[i]);
                w *= o.max(0.0);
            }
            if w > 0.0 {
                f(self.values[self.geom.flat_index(&idx)], w);
            }
            let mut axis = dim;
            loop {
                if axis == 0 {
                    return;
                }
                axis -= 1;
                idx[axis] += 1;
                if idx[axis] < ranges[axis].end {
                    break;
                }
                idx[axis] = ranges[axis].start;
            }
        }
    }

    /// Multilinear interpolation between cell centers. Points outside the
    /// domain read 0; within the half-cell band along the boundary the value
    /// clamps to the nearest center.
    #[inline]
    pub fn interpolate(&self, x: &[f64]) -> f64 {
        let dim = self.geom.dim();
        debug_assert!(dim <= MAX_DIM && x.len() == dim);
        let mut base = [0usize; MAX_DIM];
        let mut frac = [0.0f64; MAX_DIM];
        for i in 0..dim {
            let d = self.geom.domain();
            if x[i] < d.min[i] || x[i] >= d.max[i] {
                return 0.0;
            }
            let n = self.geom.counts()[i];
            let u = (x[i] - d.min[i]) / self.geom.mesh(i) - 0.5;
            if n == 1 {
                base[i] = 0;
                frac[i] = 0.0;
            } else {
                let t = u.clamp(0.0, (n - 1) as f64);
                let mut i0 = t.floor() as usize;
                if i0 >= n - 1 {
                    i0 = n - 2;
                }
                base[i] = i0;
                frac[i] = t - i0 as f64;
            }
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << dim) {
            let mut w = 1.0;
            let mut flat = 0;
            for i in 0..dim {
                let hi = (corner >> i) & 1 == 1;
                w *= if hi { frac[i] } else { 1.0 - frac[i] };
                let ci = base[i] + hi as usize;
                flat = flat * self.geom.counts()[i] + ci;
            }
            if w != 0.0 {
                acc += w * self.values[flat];
            }
        }
        acc
    }

    /// `tau_y f(x) = f(x - y)`, resampled on the same grid. Exact when `y`
    /// is a lattice vector of the mesh.
    pub fn translate(&self, y: &[f64]) -> GridFunction {
        let geom = self.geom.clone();
        let values = (0..geom.cell_count())
            .map(|flat| {
                let mut c = geom.cell_center(&geom.multi_index(flat));
                for (ci, yi) in c.iter_mut().zip(y) {
                    *ci -= yi;
                }
                self.interpolate(&c)
            })
            .collect();
        GridFunction { geom, values }
    }

    /// `f * chi_E` with partial-cell weighting at the boundary of `E`.
    pub fn restrict(&self, e: &BoxN) -> GridFunction {
        let geom = self.geom.clone();
        let cell_vol = geom.cell_volume();
        let values = (0..geom.cell_count())
            .map(|flat| {
                let cb = geom.cell_box(&geom.multi_index(flat));
                let w = cb.intersection_volume(e) / cell_vol;
                self.values[flat] * w
            })
            .collect();
        GridFunction { geom, values }
    }

    /// Bounding box of the nonzero cells, or `None` for the zero function.
    pub fn support_box(&self) -> Option<BoxN> {
        let dim = self.geom.dim();
        let mut lo = vec![usize::MAX; dim];
        let mut hi = vec![0usize; dim];
        let mut any = false;
        for flat in 0..self.geom.cell_count() {
            if self.values[flat] != 0.0 {
                any = true;
                let multi = self.geom.multi_index(flat);
                for i in 0..dim {
                    lo[i] = lo[i].min(multi[i]);
                    hi[i] = hi[i].max(multi[i]);
                }
            }
        }
        if !any {
            return None;
        }
        let d = self.geom.domain();
        let min = (0..dim).map(|i| d.min[i] + lo[i] as f64 * self.geom.mesh(i)).collect();
        let max = (0..dim).map(|i| d.min[i] + (hi[i] + 1) as f64 * self.geom.mesh(i)).collect();
        Some(BoxN { min, max })
    }

    /// Support box grown by one cell per side, covering the interpolation
    /// stencil of the nonzero region.
    pub fn support_box_padded(&self) -> Option<BoxN> {
        self.support_box().map(|b| b.padded(&self.geom.meshes()))
    }

    pub fn scale(&self, c: f64) -> GridFunction {
        GridFunction {
            geom: self.geom.clone(),
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    pub fn add(&self, other: &GridFunction) -> GridFunction {
        assert_eq!(self.geom, other.geom, "grid mismatch");
        GridFunction {
            geom: self.geom.clone(),
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &GridFunction) -> GridFunction {
        assert_eq!(self.geom, other.geom, "grid mismatch");
        GridFunction {
            geom: self.geom.clone(),
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> GridFunction {
        GridFunction {
            geom: self.geom.clone(),
            values: self.values.iter().map(|v| f(*v)).collect(),
        }
    }

    /// `sum f g cellvol` on a shared geometry.
    pub fn inner(&self, other: &GridFunction) -> f64 {
        assert_eq!(self.geom, other.geom, "grid mismatch");
        let vol = self.geom.cell_volume();
        self.values.iter().zip(&other.values).map(|(a, b)| a * b * vol).sum()
    }

    /// Subdivide every cell, repeating values: the same function on a finer
    /// mesh. Used by mesh-refinement stability studies.
    pub fn refine(&self, factors: &[usize]) -> Result<GridFunction> {
        let geom = self.geom.refined(factors)?;
        let values = (0..geom.cell_count())
            .map(|flat| {
                let multi = geom.multi_index(flat);
                let coarse: Vec<usize> =
                    multi.iter().zip(factors).map(|(&m, &f)| m / f).collect();
                self.values[self.geom.flat_index(&coarse)]
            })
            .collect();
        GridFunction::new(geom, values)
    }

    /// Write `<base>.bin` (f64 little-endian, row-major) and `<base>.json`
    /// (box, counts, meshes).
    pub fn save(&self, base: &Path) -> Result<()> {
        let sidecar = Sidecar {
            box_min: self.geom.domain().min.clone(),
            box_max: self.geom.domain().max.clone(),
            counts: self.geom.counts().to_vec(),
            mesh: self.geom.meshes(),
        };
        let mut bytes = Vec::with_capacity(self.values.len() * 8);
        for v in &self.values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(base.with_extension("bin"), bytes)?;
        fs::write(base.with_extension("json"), serde_json::to_string_pretty(&sidecar)?)?;
        Ok(())
    }

    pub fn load(base: &Path) -> Result<GridFunction> {
        let sidecar: Sidecar = serde_json::from_str(&fs::read_to_string(base.with_extension("json"))?)?;
        let geom = GridGeometry::new(BoxN::new(sidecar.box_min, sidecar.box_max)?, sidecar.counts)?;
        let bytes = fs::read(base.with_extension("bin"))?;
        if bytes.len() != geom.cell_count() * 8 {
            return Err(Error::InvalidParameter(format!(
                "binary payload has {} bytes, expected {}",
                bytes.len(),
                geom.cell_count() * 8
            )));
        }
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        GridFunction::new(geom, values)
    }

    /// CSV dump of a 2-d function: `x1,x2,value` per cell, index order.
    pub fn to_csv_2d(&self) -> Result<String> {
        if self.geom.dim() != 2 {
            return Err(Error::InvalidParameter("csv dump only for 2-d grids".into()));
        }
        let mut out = String::from("x1,x2,value\n");
        for flat in 0..self.geom.cell_count() {
            let c = self.geom.cell_center(&self.geom.multi_index(flat));
            out.push_str(&format!("{},{},{}\n", c[0], c[1], self.values[flat]));
        }
        Ok(out)
    }
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    box_min: Vec<f64>,
    box_max: Vec<f64>,
    counts: Vec<usize>,
    mesh: Vec<f64>,
}
