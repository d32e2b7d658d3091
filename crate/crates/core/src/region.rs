//! The admissible exponent region for sparse domination: a trapezoid in the
//! `(1/r, 1/s')` plane (degenerating to a triangle for n = 2), plus its dual
//! in the `(1/r, 1/s)` plane.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Margin for strict-interior tests. Vertex coordinates are exact small
/// rationals evaluated in f64, so anything closer than this to an edge is
/// treated as boundary.
const EDGE_MARGIN: f64 = 1e-12;

/// Convex region given by its vertices, stored counterclockwise with
/// duplicates removed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseRegion {
    n: usize,
    vertices: Vec<[f64; 2]>,
}

/// The region in the `(1/r, 1/s')` plane: vertices `(0,0)`, `(1,1)`,
/// `((n^2-n+2)/(n^2+n), (n-1)/(n+1))`, `(2/(n+1), (2n-2)/(n^2+n))`.
pub fn admissible_region(n: usize) -> Result<SparseRegion> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("region needs n >= 2, got {n}")));
    }
    let nf = n as f64;
    let verts = vec![
        [0.0, 0.0],
        [1.0, 1.0],
        [(nf * nf - nf + 2.0) / (nf * nf + nf), (nf - 1.0) / (nf + 1.0)],
        [2.0 / (nf + 1.0), (2.0 * nf - 2.0) / (nf * nf + nf)],
    ];
    SparseRegion::from_vertices(n, verts)
}

/// The dual region in the `(1/r, 1/s)` plane: the image of the admissible
/// region under `(x, y) -> (x, 1 - y)`. It is symmetric about `1/s = 1/r`.
pub fn dual_region(n: usize) -> Result<SparseRegion> {
    let omega = admissible_region(n)?;
    let verts = omega.vertices.iter().map(|v| [v[0], 1.0 - v[1]]).collect();
    SparseRegion::from_vertices(n, verts)
}

impl SparseRegion {
    fn from_vertices(n: usize, raw: Vec<[f64; 2]>) -> Result<Self> {
        // dedupe (n = 2 degenerates the trapezoid to a triangle)
        let mut verts: Vec<[f64; 2]> = Vec::new();
        for v in raw {
            if !verts
                .iter()
                .any(|w| (w[0] - v[0]).abs() < EDGE_MARGIN && (w[1] - v[1]).abs() < EDGE_MARGIN)
            {
                verts.push(v);
            }
        }
        if verts.len() < 3 {
            return Err(Error::InvalidParameter("region degenerated below a triangle".into()));
        }
        // order counterclockwise around the centroid
        let cx = verts.iter().map(|v| v[0]).sum::<f64>() / verts.len() as f64;
        let cy = verts.iter().map(|v| v[1]).sum::<f64>() / verts.len() as f64;
        verts.sort_by(|a, b| {
            let ta = (a[1] - cy).atan2(a[0] - cx);
            let tb = (b[1] - cy).atan2(b[0] - cx);
            ta.total_cmp(&tb)
        });
        // convexity sanity check
        let m = verts.len();
        for i in 0..m {
            let a = verts[i];
            let b = verts[(i + 1) % m];
            let c = verts[(i + 2) % m];
            if cross(a, b, c) < -EDGE_MARGIN {
                return Err(Error::InvalidParameter("region vertices are not convex".into()));
            }
        }
        Ok(SparseRegion { n, vertices: verts })
    }

    pub fn dimension(&self) -> usize {
        self.n
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    /// Strictly inside: every edge sees the point on its left by more than
    /// the margin. Boundary points return false.
    pub fn contains_interior(&self, x: f64, y: f64) -> bool {
        self.edge_signs(x, y).iter().all(|&s| s > EDGE_MARGIN)
    }

    /// Inside or on the boundary (within the margin).
    pub fn contains_closed(&self, x: f64, y: f64) -> bool {
        self.edge_signs(x, y).iter().all(|&s| s > -EDGE_MARGIN)
    }

    fn edge_signs(&self, x: f64, y: f64) -> Vec<f64> {
        let m = self.vertices.len();
        (0..m)
            .map(|i| cross(self.vertices[i], self.vertices[(i + 1) % m], [x, y]))
            .collect()
    }
}

fn cross(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

/// Holder conjugate `p' = p/(p-1)`, with `p = 1` giving infinity.
pub fn holder_conjugate(p: f64) -> f64 {
    if p == 1.0 {
        f64::INFINITY
    } else {
        p / (p - 1.0)
    }
}

/// Whether `(1/r, 1/s')` lies strictly inside the admissible region.
/// Requires `1 <= r, s < infinity`.
pub fn in_admissible_interior(region: &SparseRegion, r: f64, s: f64) -> bool {
    debug_assert!(r >= 1.0 && s >= 1.0);
    let x = 1.0 / r;
    let y = 1.0 - 1.0 / s; // 1/s' for the conjugate exponent
    region.contains_interior(x, y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vertices_n2_triangle() {
        let r = admissible_region(2).unwrap();
        // (0,0), (1,1), (2/3,1/3) with the duplicate fourth vertex removed
        assert_eq!(r.vertices().len(), 3);
        let has = |x: f64, y: f64| {
            r.vertices()
                .iter()
                .any(|v| (v[0] - x).abs() < 1e-14 && (v[1] - y).abs() < 1e-14)
        };
        assert!(has(0.0, 0.0));
        assert!(has(1.0, 1.0));
        assert!(has(2.0 / 3.0, 1.0 / 3.0));
    }

    #[test]
    fn vertices_n3() {
        let r = admissible_region(3).unwrap();
        assert_eq!(r.vertices().len(), 4);
        let has = |x: f64, y: f64| {
            r.vertices()
                .iter()
                .any(|v| (v[0] - x).abs() < 1e-14 && (v[1] - y).abs() < 1e-14)
        };
        assert!(has(0.0, 0.0));
        assert!(has(1.0, 1.0));
        assert!(has(2.0 / 3.0, 0.5));
        assert!(has(0.5, 1.0 / 3.0));
    }

    #[test]
    fn dual_vertices_n2() {
        let d = dual_region(2).unwrap();
        assert_eq!(d.vertices().len(), 3);
        let has = |x: f64, y: f64| {
            d.vertices()
                .iter()
                .any(|v| (v[0] - x).abs() < 1e-14 && (v[1] - y).abs() < 1e-14)
        };
        assert!(has(0.0, 1.0));
        assert!(has(1.0, 0.0));
        assert!(has(2.0 / 3.0, 2.0 / 3.0));
    }

    #[test]
    fn small_n_rejected() {
        assert!(admissible_region(1).is_err());
    }

    #[test]
    fn membership_examples_n2() {
        let r = admissible_region(2).unwrap();
        // derived by the half-plane oracle below
        assert!(r.contains_interior(0.6, 0.4));
        assert!(!r.contains_interior(0.5, 0.5)); // on the diagonal edge
        assert!(!r.contains_interior(0.8, 0.2)); // below y = x/2
    }

    /// Independent oracle: the n = 2 region is exactly
    /// `{ y < x, y > x/2, y > 2x - 1 }`.
    fn inside_n2_oracle(x: f64, y: f64) -> bool {
        y < x - 1e-12 && y > 0.5 * x + 1e-12 && y > 2.0 * x - 1.0 + 1e-12
    }

    #[test]
    fn membership_matches_halfplane_oracle() {
        let r = admissible_region(2).unwrap();
        let mut k = 0u32;
        for i in 0..60 {
            for j in 0..60 {
                let x = i as f64 / 59.0;
                let y = j as f64 / 59.0;
                // skip points hugging an edge, where the two margins differ
                let near_edge = (y - x).abs() < 1e-9
                    || (y - 0.5 * x).abs() < 1e-9
                    || (y - (2.0 * x - 1.0)).abs() < 1e-9;
                if near_edge {
                    continue;
                }
                assert_eq!(r.contains_interior(x, y), inside_n2_oracle(x, y), "at ({x}, {y})");
                k += 1;
            }
        }
        assert!(k > 3000);
    }

    #[test]
    fn exponent_pair_mapping() {
        let r = admissible_region(2).unwrap();
        // (1/r, 1/s') = (0.6, 0.4) means r = 5/3, s' = 5/2, s = 5/3
        assert!(in_admissible_interior(&r, 5.0 / 3.0, 5.0 / 3.0));
        // r = s = 2 maps to the boundary point (0.5, 0.5)
        assert!(!in_admissible_interior(&r, 2.0, 2.0));
    }

    #[test]
    fn dual_symmetry() {
        let omega = admissible_region(3).unwrap();
        let dual = dual_region(3).unwrap();
        for i in 0..40 {
            for j in 0..40 {
                let x = i as f64 / 39.0;
                let y = j as f64 / 39.0;
                // dual membership of (x, y) equals region membership of (x, 1-y)
                assert_eq!(dual.contains_interior(x, y), omega.contains_interior(x, 1.0 - y));
                // dual is symmetric about the diagonal
                assert_eq!(dual.contains_interior(x, y), dual.contains_interior(y, x));
            }
        }
    }

    #[test]
    fn conjugate_exponent() {
        assert_eq!(holder_conjugate(2.0), 2.0);
        assert!((holder_conjugate(5.0 / 3.0) - 2.5).abs() < 1e-14);
        assert!(holder_conjugate(1.0).is_infinite());
    }
}
