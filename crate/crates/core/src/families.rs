//! Seeded test-function families: anisotropic bumps scaled to the curve,
//! indicators of curve-scaled cubes, and random fields. All draws come from
//! one seed through per-member streams, so families are reproducible and
//! order-independent under parallel generation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::curve::MonomialCurve;
use crate::error::{Error, Result};
use crate::geom::BoxN;
use crate::gridfn::{GridFunction, GridGeometry};

#[derive(Clone, Debug)]
pub struct FamilySpec {
    /// All members are supported inside this box.
    pub support: BoxN,
    pub bumps: usize,
    pub cube_indicators: usize,
    pub random_fields: usize,
}

impl FamilySpec {
    pub fn len(&self) -> usize {
        self.bumps + self.cube_indicators + self.random_fields
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Build the family on the given geometry. The support box must sit inside
/// the geometry's domain; callers pad the domain for operator evaluations.
pub fn test_family(
    curve: &MonomialCurve,
    geom: &GridGeometry,
    spec: &FamilySpec,
    seed: u64,
) -> Result<Vec<GridFunction>> {
    if !geom.domain().contains_box(&spec.support) {
        return Err(Error::InvalidParameter(
            "family support must lie inside the grid domain".into(),
        ));
    }
    if spec.is_empty() {
        return Err(Error::InvalidParameter("empty test family".into()));
    }
    let n = curve.dim();
    if geom.dim() != n {
        return Err(Error::InvalidParameter("family dimension mismatch".into()));
    }
    let mut out = Vec::with_capacity(spec.len());
    for member in 0..spec.len() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(member as u64 + 1);
        let f = if member < spec.bumps {
            anisotropic_bump(curve, geom, &spec.support, &mut rng)?
        } else if member < spec.bumps + spec.cube_indicators {
            cube_indicator(curve, geom, &spec.support, &mut rng)?
        } else {
            random_field(geom, &spec.support, &mut rng)?
        };
        out.push(f);
    }
    Ok(out)
}

/// Largest cube scale that fits inside the box.
fn max_ell(curve: &MonomialCurve, support: &BoxN) -> f64 {
    (0..curve.dim())
        .map(|i| (0.5 * support.side(i)).powf(1.0 / curve.alpha()[i]))
        .fold(f64::INFINITY, f64::min)
}

fn draw_scaled_widths(
    curve: &MonomialCurve,
    support: &BoxN,
    rng: &mut ChaCha8Rng,
) -> (Vec<f64>, Vec<f64>) {
    let ell_max = max_ell(curve, support);
    let ell = ell_max * rng.gen_range(0.25..0.95);
    let widths: Vec<f64> = curve.alpha().iter().map(|a| ell.powf(*a)).collect();
    let center: Vec<f64> = (0..curve.dim())
        .map(|i| rng.gen_range((support.min[i] + widths[i])..(support.max[i] - widths[i])))
        .collect();
    (center, widths)
}

/// Product bump `prod (1 - u_i^2)^3` with curve-scaled half-widths.
fn anisotropic_bump(
    curve: &MonomialCurve,
    geom: &GridGeometry,
    support: &BoxN,
    rng: &mut ChaCha8Rng,
) -> Result<GridFunction> {
    let (center, widths) = draw_scaled_widths(curve, support, rng);
    GridFunction::from_fn(geom.clone(), move |x| {
        let mut v = 1.0;
        for i in 0..x.len() {
            let u = (x[i] - center[i]) / widths[i];
            let w = 1.0 - u * u;
            if w <= 0.0 {
                return 0.0;
            }
            v *= w * w * w;
        }
        v
    })
}

fn cube_indicator(
    curve: &MonomialCurve,
    geom: &GridGeometry,
    support: &BoxN,
    rng: &mut ChaCha8Rng,
) -> Result<GridFunction> {
    let (center, widths) = draw_scaled_widths(curve, support, rng);
    let sides: Vec<f64> = widths.iter().map(|w| 2.0 * w).collect();
    let cube = BoxN::centered(&center, &sides)?;
    Ok(GridFunction::indicator(geom.clone(), &cube))
}

/// Uniform noise per cell inside the support, zero outside.
fn random_field(geom: &GridGeometry, support: &BoxN, rng: &mut ChaCha8Rng) -> Result<GridFunction> {
    let values = (0..geom.cell_count())
        .map(|flat| {
            let noise: f64 = rng.gen_range(0.0..1.0);
            let cb = geom.cell_box(&geom.multi_index(flat));
            // draw unconditionally so the stream position is independent of
            // the support geometry
            if support.contains_box(&cb) {
                noise
            } else {
                0.0
            }
        })
        .collect();
    GridFunction::new(geom.clone(), values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (MonomialCurve, GridGeometry, FamilySpec) {
        let curve = MonomialCurve::parabola();
        let geom = GridGeometry::new(
            BoxN::new(vec![-2.0, -2.0], vec![2.0, 2.0]).unwrap(),
            vec![64, 64],
        )
        .unwrap();
        let spec = FamilySpec {
            support: BoxN::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap(),
            bumps: 2,
            cube_indicators: 2,
            random_fields: 2,
        };
        (curve, geom, spec)
    }

    #[test]
    fn family_is_supported_and_nontrivial() {
        let (curve, geom, spec) = setup();
        let fam = test_family(&curve, &geom, &spec, 42).unwrap();
        assert_eq!(fam.len(), 6);
        for f in &fam {
            let s = f.support_box().expect("nonzero member");
            assert!(spec.support.contains_box(&s));
            assert!(f.lp_norm(2.0) > 0.0);
        }
    }

    #[test]
    fn family_is_deterministic() {
        let (curve, geom, spec) = setup();
        let a = test_family(&curve, &geom, &spec, 7).unwrap();
        let b = test_family(&curve, &geom, &spec, 7).unwrap();
        for (f, g) in a.iter().zip(&b) {
            assert_eq!(f.values(), g.values());
        }
        let c = test_family(&curve, &geom, &spec, 8).unwrap();
        assert!(a.iter().zip(&c).any(|(f, g)| f.values() != g.values()));
    }

    #[test]
    fn support_outside_domain_rejected() {
        let (curve, geom, mut spec) = setup();
        spec.support = BoxN::new(vec![-3.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert!(test_family(&curve, &geom, &spec, 1).is_err());
    }
}
