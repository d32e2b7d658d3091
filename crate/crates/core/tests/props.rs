//! Property tests for the structural invariants: dilation algebra, region
//! duality, quasi-metric inequality, averaging identities, and sparse-form
//! homogeneity.

use proptest::prelude::*;

use htcurve::curve::MonomialCurve;
use htcurve::geom::BoxN;
use htcurve::grid::DyadicGrid;
use htcurve::gridfn::{GridFunction, GridGeometry};
use htcurve::region::{admissible_region, dual_region};
use htcurve::sparse::{sparse_form, CollectionKind, SparseCollection, SparseEntry};

fn parabola() -> MonomialCurve {
    MonomialCurve::parabola()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn dilation_group_law(
        lambda in 0.05f64..20.0,
        mu in 0.05f64..20.0,
        x0 in -10.0f64..10.0,
        x1 in -10.0f64..10.0,
    ) {
        let c = parabola();
        let a = c.dilate(lambda, &c.dilate(mu, &[x0, x1]).unwrap()).unwrap();
        let b = c.dilate(lambda * mu, &[x0, x1]).unwrap();
        for (u, v) in a.iter().zip(&b) {
            prop_assert!((u - v).abs() <= 1e-10 * (1.0 + v.abs()));
        }
    }

    #[test]
    fn dilation_curve_covariance(lambda in 0.1f64..8.0, t in 0.01f64..4.0) {
        let c = parabola();
        let a = c.dilate(lambda, &c.eval(t)).unwrap();
        let b = c.eval(lambda * t);
        for (u, v) in a.iter().zip(&b) {
            prop_assert!((u - v).abs() <= 1e-10 * (1.0 + v.abs()));
        }
    }

    #[test]
    fn quasi_triangle_inequality(
        p in prop::collection::vec(-5.0f64..5.0, 6),
    ) {
        let c = parabola();
        let (x, y, z) = (&p[0..2], &p[2..4], &p[4..6]);
        let lhs = c.quasi_metric(x, z);
        let rhs = c.quasi_metric(x, y) + c.quasi_metric(y, z);
        prop_assert!(lhs <= c.quasi_triangle_bound() * rhs + 1e-12);
    }

    #[test]
    fn gamma_cube_volume_law(ell in 0.01f64..10.0, cx in -3.0f64..3.0, cy in -3.0f64..3.0) {
        let c = parabola();
        let q = c.gamma_cube(vec![cx, cy], ell).unwrap();
        let by_sides: f64 = q.sides().iter().product();
        prop_assert!((by_sides - q.volume()).abs() <= 1e-12 * q.volume());
    }

    #[test]
    fn region_duality(n in 2usize..6, x in 0.0f64..1.0, y in 0.0f64..1.0) {
        let omega = admissible_region(n).unwrap();
        let dual = dual_region(n).unwrap();
        prop_assert_eq!(dual.contains_interior(x, y), omega.contains_interior(x, 1.0 - y));
        prop_assert_eq!(dual.contains_interior(x, y), dual.contains_interior(y, x));
    }

    #[test]
    fn average_of_constant(
        c in -5.0f64..5.0,
        qx in 0.05f64..0.9,
        qy in 0.05f64..0.9,
        w in 0.05f64..1.0,
        p in 1.0f64..4.0,
    ) {
        let geom = GridGeometry::new(
            BoxN::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap(),
            vec![32, 32],
        ).unwrap();
        let f = GridFunction::constant(geom, c);
        let q = BoxN::new(
            vec![qx, qy],
            vec![(qx + w).min(0.999), (qy + w).min(0.999)],
        ).unwrap();
        let avg = f.average(&q, p);
        prop_assert!((avg - c.abs()).abs() <= 1e-10 * (1.0 + c.abs()));
    }

    #[test]
    fn restriction_splits_mass(split in 0.05f64..0.95, seed in 0u64..1000) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let geom = GridGeometry::new(
            BoxN::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap(),
            vec![16, 16],
        ).unwrap();
        let f = GridFunction::new(
            geom.clone(),
            (0..geom.cell_count()).map(|_| rng.gen_range(0.0..1.0)).collect(),
        ).unwrap();
        let left = BoxN::new(vec![-1.0, -1.0], vec![split, 2.0]).unwrap();
        let right = BoxN::new(vec![split, -1.0], vec![2.0, 2.0]).unwrap();
        let total = f.restrict(&left).lp_norm(1.0) + f.restrict(&right).lp_norm(1.0);
        prop_assert!((total - f.lp_norm(1.0)).abs() <= 1e-11);
    }

    #[test]
    fn sparse_form_homogeneity(a in 0.01f64..10.0, b in 0.01f64..10.0, seed in 0u64..1000) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let curve = parabola();
        let grid = DyadicGrid::for_curve(&curve, vec![0, 0]).unwrap();
        let root = grid.find_cube(&[0.5, 0.5], 1).unwrap();
        let geom = GridGeometry::new(grid.cube_box(&root), vec![16, 32]).unwrap();
        let mk = |rng: &mut rand_chacha::ChaCha8Rng| GridFunction::new(
            geom.clone(),
            (0..geom.cell_count()).map(|_| rng.gen_range(0.0..1.0)).collect(),
        ).unwrap();
        let f = mk(&mut rng);
        let g = mk(&mut rng);
        let entries = vec![SparseEntry {
            base: root.clone(),
            removed: vec![],
            outer_box: grid.cube_box(&root),
            outer_volume: grid.cube_box(&root).volume(),
            gamma: None,
        }];
        let col = SparseCollection { grid: grid.clone(), kind: CollectionKind::Dyadic, entries };
        let base = sparse_form(&col, &f, &g, 1.5, 2.0);
        let scaled = sparse_form(&col, &f.scale(a), &g.scale(b), 1.5, 2.0);
        prop_assert!((scaled - a * b * base).abs() <= 1e-9 * (1.0 + scaled.abs()));
    }

    #[test]
    fn translate_roundtrip_on_lattice(ix in -4i32..4, iy in -4i32..4, seed in 0u64..100) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let geom = GridGeometry::new(
            BoxN::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap(),
            vec![16, 16],
        ).unwrap();
        let f = GridFunction::new(
            geom.clone(),
            (0..geom.cell_count()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        ).unwrap();
        let h = 1.0 / 16.0;
        let y = [ix as f64 * h, iy as f64 * h];
        let back = f.translate(&y).translate(&[-y[0], -y[1]]);
        // exact on the cells that never left the domain
        let margin_x = ix.unsigned_abs() as usize;
        let margin_y = iy.unsigned_abs() as usize;
        for i in margin_x..(16 - margin_x) {
            for j in margin_y..(16 - margin_y) {
                let flat = geom.flat_index(&[i, j]);
                prop_assert!((back.value(flat) - f.value(flat)).abs() <= 1e-12);
            }
        }
    }
}
