//! Shifted nonisotropic dyadic grids.
//!
//! A grid is indexed by a shift vector `j` in `{0,1,2}^n`. At scale `k` the
//! cube sides are `2^{floor(k alpha_i)}` and the axis-`i` intervals are
//!
//! ```text
//! 2^{e_i} [ m_i + sigma_i j_i/3,  m_i + 1 + sigma_i j_i/3 ),
//! e_i = floor(k alpha_i),  sigma_i = (-1)^{e_i}.
//! ```
//!
//! The alternating sign threads the one-third shifts consistently across
//! scales: the endpoint lattice at a coarser scale is contained in the one
//! at any finer scale exactly when `(2^d sigma - sigma') j = 0 mod 3` for
//! the per-axis exponent gap `d`, which the parity choice guarantees. With
//! a scale-independent shift the grids would fail the nesting property they
//! are used for; the family of boxes over all shifts is unchanged, only the
//! labelling of shifts across scales moves. At a fixed scale, the third
//! cubes `{(1/3)Q}` over all `3^n` shifts tile space.

use serde::{Deserialize, Serialize};

use crate::curve::{GammaCube, MonomialCurve};
use crate::error::{Error, Result};
use crate::geom::BoxN;

/// Guard band around integers for `k * alpha_i`: inside it the floor is not
/// reproducible across platforms, so the configuration is rejected.
const FLOOR_GUARD: f64 = 1e-9;

/// One of the `3^n` shifted grids for a fixed exponent vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DyadicGrid {
    alpha: Vec<f64>,
    shift: Vec<u8>,
}

/// Cube indices within a grid: scale `k` and per-axis positions `m`.
/// `k` is kept canonical: the largest scale producing the same side vector.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DyadicCube {
    pub k: i64,
    pub m: Vec<i64>,
}

impl DyadicGrid {
    pub fn new(alpha: Vec<f64>, shift: Vec<u8>) -> Result<Self> {
        if alpha.len() < 2 || alpha.iter().any(|a| *a <= 0.0 || !a.is_finite()) {
            return Err(Error::InvalidParameter("grid needs at least two positive exponents".into()));
        }
        if alpha.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter("grid exponents must be strictly increasing".into()));
        }
        if shift.len() != alpha.len() || shift.iter().any(|j| *j > 2) {
            return Err(Error::InvalidParameter("shift entries must lie in {0, 1, 2}".into()));
        }
        Ok(DyadicGrid { alpha, shift })
    }

    pub fn for_curve(curve: &MonomialCurve, shift: Vec<u8>) -> Result<Self> {
        DyadicGrid::new(curve.alpha().to_vec(), shift)
    }

    /// All `3^n` shift vectors.
    pub fn all_shifts(n: usize) -> Vec<Vec<u8>> {
        let mut out = vec![vec![]];
        for _ in 0..n {
            out = out
                .into_iter()
                .flat_map(|s| {
                    (0u8..3).map(move |j| {
                        let mut t = s.clone();
                        t.push(j);
                        t
                    })
                })
                .collect();
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.alpha.len()
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn shift(&self) -> &[u8] {
        &self.shift
    }

    /// `floor(k alpha_i)`, rejecting values inside the guard band around an
    /// integer (exact integers are fine).
    pub fn floor_exp(&self, k: i64, axis: usize) -> Result<i64> {
        let v = k as f64 * self.alpha[axis];
        let fl = v.floor();
        let frac = v - fl;
        if frac > 0.0 && (frac < FLOOR_GUARD || frac > 1.0 - FLOOR_GUARD) {
            return Err(Error::FloorAmbiguity { k, alpha: self.alpha[axis], value: v, band: FLOOR_GUARD });
        }
        Ok(fl as i64)
    }

    fn floor_vec(&self, k: i64) -> Result<Vec<i64>> {
        (0..self.dim()).map(|i| self.floor_exp(k, i)).collect()
    }

    /// The largest scale index producing the same side vector as `k`.
    /// Distinct `k` can share all floors when the exponents are fractional;
    /// we label each side vector by the maximal one.
    pub fn canonical_scale(&self, k: i64) -> Result<i64> {
        let base = self.floor_vec(k)?;
        let mut kc = k;
        for _ in 0..MAX_SCALE_SEARCH {
            if self.floor_vec(kc + 1)? != base {
                return Ok(kc);
            }
            kc += 1;
        }
        Err(Error::InvalidParameter(format!("scale canonicalization did not terminate at k = {k}")))
    }

    /// Smallest canonical scale strictly coarser than `k`.
    pub fn next_coarser_scale(&self, k: i64) -> Result<i64> {
        let base = self.floor_vec(k)?;
        let mut kp = k + 1;
        for _ in 0..MAX_SCALE_SEARCH {
            if self.floor_vec(kp)? != base {
                return self.canonical_scale(kp);
            }
            kp += 1;
        }
        Err(Error::InvalidParameter(format!("no coarser scale found above k = {k}")))
    }

    /// Largest canonical scale strictly finer than `k` (for a canonical `k`).
    pub fn next_finer_scale(&self, k: i64) -> Result<i64> {
        let base = self.floor_vec(k)?;
        let mut kc = k - 1;
        for _ in 0..MAX_SCALE_SEARCH {
            if self.floor_vec(kc)? != base {
                return Ok(kc); // maximal below k with a different floor vector
            }
            kc -= 1;
        }
        Err(Error::InvalidParameter(format!("no finer scale found below k = {k}")))
    }

    /// The realized box of a cube.
    pub fn cube_box(&self, c: &DyadicCube) -> BoxN {
        let n = self.dim();
        let mut min = Vec::with_capacity(n);
        let mut max = Vec::with_capacity(n);
        for i in 0..n {
            let e = self.floor_exp(c.k, i).expect("cube indices were validated at construction");
            let side = (e as f64).exp2();
            let lo_num = 3 * c.m[i] + sigma(e) * self.shift[i] as i64;
            min.push(lo_num as f64 / 3.0 * side);
            max.push((lo_num + 3) as f64 / 3.0 * side);
        }
        BoxN { min, max }
    }

    /// `ell(Q) = 2^k` for the canonical scale.
    pub fn ell(&self, c: &DyadicCube) -> f64 {
        (c.k as f64).exp2()
    }

    /// The unique cube at scale `k` (canonicalized) containing `x`.
    pub fn find_cube(&self, x: &[f64], k: i64) -> Result<DyadicCube> {
        let kc = self.canonical_scale(k)?;
        let m = (0..self.dim())
            .map(|i| {
                let e = self.floor_exp(kc, i)?;
                let side = (e as f64).exp2();
                let u = x[i] / side - sigma(e) as f64 * self.shift[i] as f64 / 3.0;
                Ok(u.floor() as i64)
            })
            .collect::<Result<Vec<i64>>>()?;
        Ok(DyadicCube { k: kc, m })
    }

    /// Smallest grid cube strictly containing `c`.
    pub fn parent(&self, c: &DyadicCube) -> Result<DyadicCube> {
        let kp = self.next_coarser_scale(c.k)?;
        let center = self.cube_box(c).center();
        self.find_cube(&center, kp)
    }

    /// The children tiling `c` at the next finer canonical scale.
    pub fn children(&self, c: &DyadicCube) -> Result<Vec<DyadicCube>> {
        let kc = self.next_finer_scale(c.k)?;
        let n = self.dim();
        let mut starts = Vec::with_capacity(n);
        let mut counts = Vec::with_capacity(n);
        for i in 0..n {
            let ep = self.floor_exp(c.k, i)?;
            let ec = self.floor_exp(kc, i)?;
            let d = ep - ec;
            debug_assert!((0..63).contains(&d));
            let ratio = 1i64 << d;
            // child corner: 2^{ec} (m' + sigma_c j/3) = 2^{ep} (m + sigma_p j/3)
            let num = (ratio * sigma(ep) - sigma(ec)) * self.shift[i] as i64;
            debug_assert_eq!(num.rem_euclid(3), 0, "one-third shifts misaligned across scales");
            starts.push(ratio * c.m[i] + num / 3);
            counts.push(ratio);
        }
        let mut out = Vec::new();
        let mut idx = vec![0i64; n];
        loop {
            out.push(DyadicCube {
                k: kc,
                m: (0..n).map(|i| starts[i] + idx[i]).collect(),
            });
            let mut axis = 0;
            loop {
                if axis == n {
                    return Ok(out);
                }
                idx[axis] += 1;
                if idx[axis] < counts[axis] {
                    break;
                }
                idx[axis] = 0;
                axis += 1;
            }
        }
    }

    /// Exact containment test (integer arithmetic on the shifted lattice).
    pub fn contains(&self, outer: &DyadicCube, inner: &DyadicCube) -> bool {
        (0..self.dim()).all(|i| {
            let (lo_o, hi_o, lo_i, hi_i) = self.axis_intervals(outer, inner, i);
            lo_o <= lo_i && hi_i <= hi_o
        })
    }

    /// Exact disjointness test.
    pub fn disjoint(&self, a: &DyadicCube, b: &DyadicCube) -> bool {
        (0..self.dim()).any(|i| {
            let (lo_a, hi_a, lo_b, hi_b) = self.axis_intervals(a, b, i);
            hi_a <= lo_b || hi_b <= lo_a
        })
    }

    /// Axis intervals of two cubes in units of `2^{e0}/3` for the common
    /// exponent `e0`; exact as long as the scale gap stays below 120 bits.
    fn axis_intervals(&self, a: &DyadicCube, b: &DyadicCube, i: usize) -> (i128, i128, i128, i128) {
        let ea = self.floor_exp(a.k, i).expect("validated");
        let eb = self.floor_exp(b.k, i).expect("validated");
        let e0 = ea.min(eb);
        let sa = (ea - e0) as u32;
        let sb = (eb - e0) as u32;
        assert!(sa < 120 && sb < 120, "scale gap too large for exact arithmetic");
        let lo_a = ((3 * a.m[i] + sigma(ea) * self.shift[i] as i64) as i128) << sa;
        let hi_a = lo_a + (3i128 << sa);
        let lo_b = ((3 * b.m[i] + sigma(eb) * self.shift[i] as i64) as i128) << sb;
        let hi_b = lo_b + (3i128 << sb);
        (lo_a, hi_a, lo_b, hi_b)
    }

    /// `(1/3)Q`: same center, a third of every side. Not itself a grid cube.
    pub fn third_box(&self, c: &DyadicCube) -> BoxN {
        self.cube_box(c).scaled_about_center(1.0 / 3.0)
    }

    /// Same center, every side multiplied by `factor`.
    pub fn scaled_box(&self, c: &DyadicCube, factor: f64) -> BoxN {
        debug_assert!(factor > 0.0);
        self.cube_box(c).scaled_about_center(factor)
    }

    /// Smallest curve-scaled cube containing `c` with the same center. Its
    /// scale satisfies `ell(S) <= 2^k < 2 ell(c)`.
    pub fn enclosing_gamma_cube(&self, c: &DyadicCube) -> GammaCube {
        let t = (0..self.dim())
            .map(|i| self.floor_exp(c.k, i).expect("validated") as f64 / self.alpha[i])
            .fold(f64::NEG_INFINITY, f64::max);
        let ell = t.exp2();
        GammaCube::new(self.cube_box(c).center(), ell, self.alpha.clone(), None)
            .expect("positive scale by construction")
    }

    /// Smallest cube of this grid containing `target`, searching scales up
    /// to `k_limit`. Returns `None` when the target straddles a persistent
    /// grid boundary (e.g. a coordinate hyperplane in the unshifted grid);
    /// callers then split the data along that boundary.
    pub fn enclosing_cube(&self, target: &BoxN, k_limit: i64) -> Option<DyadicCube> {
        let center = target.center();
        // start where the cube sides can cover the target, so the lattice
        // indices stay in range
        let k_start = (0..self.dim())
            .map(|i| ((target.side(i).log2() + 1.0) / self.alpha[i]).floor() as i64)
            .max()
            .unwrap();
        let mut k = i64::MIN;
        for k_try in k_start.min(k_limit)..=k_limit {
            let kc = self.canonical_scale(k_try).ok()?;
            if kc <= k {
                continue;
            }
            k = kc;
            let cube = self.find_cube(&center, kc).ok()?;
            if self.cube_box(&cube).contains_box(target) {
                return Some(cube);
            }
        }
        None
    }
}

fn sigma(e: i64) -> i64 {
    if e.rem_euclid(2) == 0 {
        1
    } else {
        -1
    }
}

const MAX_SCALE_SEARCH: usize = 64;
