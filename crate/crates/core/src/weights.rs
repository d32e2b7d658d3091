//! Nonisotropic Muckenhoupt and reverse Holder constants over curve-scaled
//! quasi-balls, the weighted-bound check for the truncated transform, and
//! the sharpness scan that exhibits single-scale norm blowup outside the
//! admissible region while the sparse form stays bounded.

use serde::Serialize;

use crate::curve::MonomialCurve;
use crate::error::{Error, Result};
use crate::fit::loglog_fit;
use crate::geom::BoxN;
use crate::grid::DyadicGrid;
use crate::gridfn::{GridFunction, GridGeometry};
use crate::operators::{
    pairing_by_scale_windowed, single_scale_eval_windowed, truncated_hilbert, QuadratureRule,
    TruncationWindow,
};
use crate::region::{admissible_region, holder_conjugate, in_admissible_interior};
use crate::sparse::{construct_for_pair, sparse_form, verify_sparsity, SparseParams};

/// A strictly positive sampled weight.
#[derive(Clone, Debug)]
pub struct Weight {
    f: GridFunction,
}

impl Weight {
    pub fn new(f: GridFunction) -> Result<Self> {
        let min = f.values().iter().cloned().fold(f64::INFINITY, f64::min);
        if !(min > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "weights must be strictly positive, min sample = {min}"
            )));
        }
        Ok(Weight { f })
    }

    /// Power weight `max(rho(x, 0), floor)^a`, floored to stay integrable
    /// against `w^{1-p'}` on the mesh.
    pub fn power(curve: &MonomialCurve, geom: GridGeometry, a: f64, floor: f64) -> Result<Self> {
        if !(floor > 0.0) {
            return Err(Error::InvalidParameter("weight floor must be positive".into()));
        }
        let origin = vec![0.0; curve.dim()];
        let f = GridFunction::from_fn(geom, |x| curve.quasi_metric(x, &origin).max(floor).powf(a))?;
        Weight::new(f)
    }

    pub fn function(&self) -> &GridFunction {
        &self.f
    }

    pub fn scale(&self, c: f64) -> Result<Weight> {
        if !(c > 0.0) {
            return Err(Error::InvalidParameter("weight scaling must be positive".into()));
        }
        Weight::new(self.f.scale(c))
    }

    /// `w^{1 - p'} = w^{-1/(p-1)}`, the dual-exponent weight.
    pub fn dual(&self, p: f64) -> GridFunction {
        let e = -1.0 / (p - 1.0);
        self.f.map(|v| v.powf(e))
    }
}

/// Finite family of curve-scaled cubes standing in for the quasi-balls:
/// dyadic scales over a 50%-overlap lattice of centers covering the domain.
#[derive(Clone, Debug)]
pub struct QuasiBallFamily {
    pub balls: Vec<BoxN>,
    pub ell_values: Vec<f64>,
}

pub fn quasi_ball_family(
    curve: &MonomialCurve,
    domain: &BoxN,
    ell_exp_min: i32,
    ell_exp_max: i32,
) -> Result<QuasiBallFamily> {
    if ell_exp_max - ell_exp_min < 3 {
        return Err(Error::InvalidParameter(
            "ball family must span at least 4 dyadic generations".into(),
        ));
    }
    let n = curve.dim();
    let mut balls = Vec::new();
    let mut ell_values = Vec::new();
    for e in ell_exp_min..=ell_exp_max {
        let ell = (e as f64).exp2();
        let sides: Vec<f64> = curve.alpha().iter().map(|a| ell.powf(*a)).collect();
        if (0..n).any(|i| sides[i] > domain.side(i)) {
            continue; // this generation does not fit
        }
        ell_values.push(ell);
        // centers stepping by half a side, last ball flush with the domain
        let mut centers_per_axis: Vec<Vec<f64>> = Vec::with_capacity(n);
        for i in 0..n {
            let mut cs = Vec::new();
            let mut c = domain.min[i] + 0.5 * sides[i];
            let last = domain.max[i] - 0.5 * sides[i];
            while c < last {
                cs.push(c);
                c += 0.5 * sides[i];
            }
            cs.push(last);
            centers_per_axis.push(cs);
        }
        let mut idx = vec![0usize; n];
        loop {
            let center: Vec<f64> = (0..n).map(|i| centers_per_axis[i][idx[i]]).collect();
            balls.push(BoxN::centered(&center, &sides)?);
            let mut axis = 0;
            loop {
                if axis == n {
                    break;
                }
                idx[axis] += 1;
                if idx[axis] < centers_per_axis[axis].len() {
                    break;
                }
                idx[axis] = 0;
                axis += 1;
            }
            if axis == n {
                break;
            }
        }
    }
    if ell_values.len() < 4 {
        return Err(Error::InvalidParameter(
            "fewer than 4 ball generations fit inside the domain".into(),
        ));
    }
    if balls.len() > 2_000_000 {
        return Err(Error::InvalidParameter(format!("ball family too large: {}", balls.len())));
    }
    Ok(QuasiBallFamily { balls, ell_values })
}

/// `sup_B <w>_B <w^{1-p'}>_B^{p-1}` over the family; a lower bound for the
/// true supremum over all quasi-balls.
pub fn ap_constant(w: &Weight, p: f64, family: &QuasiBallFamily) -> f64 {
    assert!(p > 1.0, "Muckenhoupt constant needs p > 1");
    let dual = w.dual(p);
    family
        .balls
        .iter()
        .map(|b| w.function().average(b, 1.0) * dual.average(b, 1.0).powf(p - 1.0))
        .fold(0.0, f64::max)
}

/// `sup_B <w>_{B,p} / <w>_B`.
pub fn rh_constant(w: &Weight, p: f64, family: &QuasiBallFamily) -> f64 {
    assert!(p >= 1.0, "reverse Holder constant needs p >= 1");
    family
        .balls
        .iter()
        .map(|b| {
            let mean = w.function().average(b, 1.0);
            if mean > 0.0 {
                w.function().average(b, p) / mean
            } else {
                1.0
            }
        })
        .fold(0.0, f64::max)
}

/// `alpha = max(1/(p-r), (s'-1)/(s'-p))` for `r < p < s'`.
pub fn alpha_exponent(p: f64, r: f64, s: f64) -> Result<f64> {
    let s_prime = holder_conjugate(s);
    if !(r < p && p < s_prime) {
        return Err(Error::InvalidParameter(format!(
            "weighted exponent needs r < p < s', got r = {r}, p = {p}, s' = {s_prime}"
        )));
    }
    let first = 1.0 / (p - r);
    let second = if s_prime.is_infinite() { 1.0 } else { (s_prime - 1.0) / (s_prime - p) };
    Ok(first.max(second))
}

/// `(sum |f|^p w |cell|)^{1/p}` on a shared geometry.
pub fn weighted_norm(f: &GridFunction, w: &Weight, p: f64) -> f64 {
    assert!(p >= 1.0);
    assert_eq!(f.geometry(), w.function().geometry(), "weight grid mismatch");
    let vol = f.geometry().cell_volume();
    f.values()
        .iter()
        .zip(w.function().values())
        .map(|(v, wv)| v.abs().powf(p) * wv * vol)
        .sum::<f64>()
        .powf(1.0 / p)
}

#[derive(Clone, Debug, Serialize)]
pub struct WeightedRow {
    /// `||H f||_{L^p(w)} / ||f||_{L^p(w)}`
    pub op_ratio: f64,
    /// op_ratio divided by the weight-constant factor
    pub against_bound: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct WeightedReport {
    pub p: f64,
    pub r: f64,
    pub s: f64,
    pub alpha: f64,
    pub ap: f64,
    pub rh: f64,
    /// `([w]_{A_{p/r}} [w]_{RH_{(s'/p)'}})^alpha`
    pub weight_factor: f64,
    pub rows: Vec<WeightedRow>,
    /// max over the family of `op_ratio / weight_factor`
    pub empirical_c: f64,
}

/// Weighted-bound experiment: operator norm ratios in `L^p(w)` against the
/// weight-constant factor, over a family of test functions.
pub fn weighted_bound_check(
    family: &[GridFunction],
    w: &Weight,
    curve: &MonomialCurve,
    balls: &QuasiBallFamily,
    p: f64,
    r: f64,
    s: f64,
    window: &TruncationWindow,
    rule: &QuadratureRule,
) -> Result<WeightedReport> {
    let region = admissible_region(curve.dim())?;
    if !in_admissible_interior(&region, r, s) {
        return Err(Error::InvalidParameter(format!(
            "weighted bound needs an admissible pair, got (r, s) = ({r}, {s})"
        )));
    }
    let alpha = alpha_exponent(p, r, s)?;
    let s_prime = holder_conjugate(s);
    let ap = ap_constant(w, p / r, balls);
    let rh_index = holder_conjugate(s_prime / p);
    let rh = rh_constant(w, rh_index, balls);
    let weight_factor = (ap * rh).powf(alpha);

    let mut rows = Vec::with_capacity(family.len());
    let mut empirical_c: f64 = 0.0;
    for f in family {
        let hf = truncated_hilbert(f, curve, window, rule)?;
        let denom = weighted_norm(f, w, p);
        if denom == 0.0 {
            continue;
        }
        let op_ratio = weighted_norm(&hf, w, p) / denom;
        let against_bound = op_ratio / weight_factor;
        empirical_c = empirical_c.max(against_bound);
        rows.push(WeightedRow { op_ratio, against_bound });
    }
    Ok(WeightedReport { p, r, s, alpha, ap, rh, weight_factor, rows, empirical_c })
}

// ---------------------------------------------------------------------------
// Sharpness of the admissible region
// ---------------------------------------------------------------------------

/// One concentrated pair: `f` normalized in `L^r` on the quasi-ball
/// `B_eps(0)`, `g` normalized in `L^s` on the high set of `A_1 f` near the
/// curve arc.
#[derive(Clone, Debug)]
pub struct BumpPair {
    pub eps: f64,
    pub f: GridFunction,
    pub g: GridFunction,
    /// min over supp g of the quasi-distance to the origin
    pub separation: f64,
}

#[derive(Clone, Debug)]
pub struct SharpnessOptions {
    /// Mesh cells per thinnest support feature.
    pub cells_per_feature: usize,
    /// Samples of the arc for the neighborhood test.
    pub curve_samples: usize,
    /// Accept cells within this multiple of eps of the arc.
    pub neighborhood_factor: f64,
    /// Allow running at admissible pairs (the bounded control run).
    pub control: bool,
    pub stopping_constant: Option<f64>,
    pub node_budget: usize,
}

impl Default for SharpnessOptions {
    fn default() -> Self {
        SharpnessOptions {
            cells_per_feature: 4,
            curve_samples: 257,
            neighborhood_factor: 1.5,
            control: false,
            stopping_constant: None,
            node_budget: 200_000,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SharpnessRow {
    pub eps: f64,
    /// `<A_1 f_eps, g_eps>`
    pub pairing: f64,
    /// window pairing `<H f_eps, g_eps>` for the configured window
    pub window_pairing: f64,
    /// sparse form of the constructed collection
    pub lambda: f64,
    pub pairing_over_lambda: f64,
    /// independent box oracle `||A~_1 chi_R||_{s'} / ||chi_R||_r`
    pub oracle_ratio: f64,
    pub oracle_ratio_fine: f64,
    pub separation: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SharpnessReport {
    pub r: f64,
    pub s: f64,
    pub control: bool,
    pub rows: Vec<SharpnessRow>,
    /// growth exponent of the pairing in 1/eps
    pub sigma_hat: f64,
    pub sigma_oracle: f64,
    pub oracle_drift: f64,
    pub pairing_monotone_increasing: bool,
    pub lambda_spread: f64,
    pub ratio_spread: f64,
}

/// The quasi-ball `B_eps(0)`: the box with half-widths `eps^{alpha_j}`.
fn concentration_box(curve: &MonomialCurve, eps: f64) -> BoxN {
    let sides: Vec<f64> = curve.alpha().iter().map(|a| 2.0 * eps.powf(*a)).collect();
    BoxN::centered(&vec![0.0; curve.dim()], &sides).expect("positive sides")
}

/// Geometry over the positive-branch arc `gamma([1/2, 1])` padded by the
/// concentration box, meshed to resolve the thinnest feature.
fn tube_geometry(curve: &MonomialCurve, eps: f64, cells_per_feature: usize) -> Result<GridGeometry> {
    let n = curve.dim();
    let a = curve.eval(0.5);
    let b = curve.eval(1.0);
    let mut min = Vec::with_capacity(n);
    let mut max = Vec::with_capacity(n);
    let mut counts = Vec::with_capacity(n);
    for j in 0..n {
        let w = eps.powf(curve.alpha()[j]);
        let lo = a[j].min(b[j]) - 1.5 * w;
        let hi = a[j].max(b[j]) + 1.5 * w;
        let h = w / cells_per_feature as f64;
        min.push(lo);
        max.push(hi);
        counts.push(((hi - lo) / h).ceil() as usize + 1);
    }
    GridGeometry::new(BoxN::new(min, max)?, counts)
}

/// Time measure `|{t in [1/2, 1) : x - gamma(t) in R}|` for the box `R`
/// with the given half-widths, in closed form for the positive branch.
fn arc_time_measure(curve: &MonomialCurve, x: &[f64], half_widths: &[f64]) -> f64 {
    let mut lo = 0.5f64;
    let mut hi = 1.0f64;
    for j in 0..curve.dim() {
        let alpha = curve.alpha()[j];
        let sign = curve.eval(0.75)[j].signum(); // positive-branch sign of component j
        let (a, b) = if sign > 0.0 {
            (x[j] - half_widths[j], x[j] + half_widths[j])
        } else {
            (-(x[j] + half_widths[j]), -(x[j] - half_widths[j]))
        };
        if b <= 0.0 {
            return 0.0;
        }
        lo = lo.max(a.max(0.0).powf(1.0 / alpha));
        hi = hi.min(b.powf(1.0 / alpha));
        if hi <= lo {
            return 0.0;
        }
    }
    hi - lo
}

/// Brute-force scaling oracle: `||A~_1 chi_R||_{s'} / ||chi_R||_r` with the
/// time measure evaluated in closed form on the tube grid.
fn box_oracle_ratio(
    curve: &MonomialCurve,
    eps: f64,
    r: f64,
    s_prime: f64,
    cells_per_feature: usize,
) -> Result<f64> {
    let half_widths: Vec<f64> = curve.alpha().iter().map(|a| eps.powf(*a)).collect();
    let geom = tube_geometry(curve, eps, cells_per_feature)?;
    let measure = GridFunction::from_fn(geom, |x| arc_time_measure(curve, x, &half_widths))?;
    let r_box = concentration_box(curve, eps);
    Ok(measure.lp_norm(s_prime) / r_box.volume().powf(1.0 / r))
}

/// Build the concentrated pair at one `eps` and evaluate the single-scale
/// pairing: `f` is the normalized indicator of `B_eps(0)`, `g` the
/// normalized indicator of the half-max set of `A_1 f` inside the
/// `eps`-neighborhood of the arc.
/// Node count resolving the time window carved out by the concentration
/// box: the thinnest feature has width `eps^{alpha_n}` in `t`, and the
/// midpoint rule needs several nodes across it.
fn scan_rule(curve: &MonomialCurve, eps: f64, rule: &QuadratureRule) -> QuadratureRule {
    const OVERSAMPLE: f64 = 16.0;
    const CAP: usize = 1 << 20;
    let alpha_n = *curve.alpha().last().expect("nonempty");
    let needed = (OVERSAMPLE * 0.5 / eps.powf(alpha_n)).ceil() as usize;
    QuadratureRule { nodes_per_half: needed.max(rule.nodes_per_half).min(CAP) }
}

pub fn bump_pair(
    curve: &MonomialCurve,
    eps: f64,
    r: f64,
    s: f64,
    rule: &QuadratureRule,
    opts: &SharpnessOptions,
) -> Result<(BumpPair, f64)> {
    let r_box = concentration_box(curve, eps);
    // constant on its own exact box: unit L^r norm without quadrature error
    let f_geom = GridGeometry::new(r_box.clone(), vec![4; curve.dim()])?;
    let f = GridFunction::constant(f_geom, 1.0 / r_box.volume().powf(1.0 / r));

    let tube = tube_geometry(curve, eps, opts.cells_per_feature)?;
    let fine_rule = scan_rule(curve, eps, rule);
    let u = single_scale_eval_windowed(&f, curve, 1.0, &fine_rule, &tube)?;
    let max_u = u.lp_norm(f64::INFINITY);
    if max_u <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "single-scale output vanished on the tube at eps = {eps}"
        )));
    }

    // neighborhood test: distance to the arc bounded above through a sweep
    // of samples plus the per-axis inversion candidates (the sweep alone is
    // too coarse in the stiff directions at small eps)
    let samples: Vec<Vec<f64>> = (0..opts.curve_samples)
        .map(|i| curve.eval(0.5 + 0.5 * i as f64 / (opts.curve_samples - 1) as f64))
        .collect();
    let branch_signs = curve.eval(1.0);
    let near_arc = |x: &[f64]| {
        let mut best = samples
            .iter()
            .map(|p| curve.quasi_metric(x, p))
            .fold(f64::INFINITY, f64::min);
        for j in 0..curve.dim() {
            let v = x[j] * branch_signs[j].signum();
            if v > 0.0 {
                let t = v.powf(1.0 / curve.alpha()[j]).clamp(0.5, 1.0);
                best = best.min(curve.quasi_metric(x, &curve.eval(t)));
            }
        }
        best <= opts.neighborhood_factor * eps
    };

    let threshold = 0.5 * max_u;
    let mut mask = vec![0.0; tube.cell_count()];
    let mut selected = 0usize;
    for flat in 0..tube.cell_count() {
        if u.value(flat) > threshold {
            let x = tube.cell_center(&tube.multi_index(flat));
            if near_arc(&x) {
                mask[flat] = 1.0;
                selected += 1;
            }
        }
    }
    if selected == 0 {
        return Err(Error::InvalidParameter(format!(
            "no cells above half max near the arc at eps = {eps}"
        )));
    }
    let chi = GridFunction::new(tube.clone(), mask)?;
    let g = chi.scale(1.0 / chi.lp_norm(s));

    let origin = vec![0.0; curve.dim()];
    let separation = (0..tube.cell_count())
        .filter(|&i| g.value(i) != 0.0)
        .map(|i| curve.quasi_metric(&tube.cell_center(&tube.multi_index(i)), &origin))
        .fold(f64::INFINITY, f64::min);

    let pairing = u.inner(&g);
    Ok((BumpPair { eps, f, g, separation }, pairing))
}

/// The sharpness scan: at a pair strictly outside the admissible region the
/// pairing grows like `eps^{-sigma}` while the sparse form of the
/// constructed collection stays bounded. Inside the region the scan is
/// rejected unless `control` is set (the bounded control run).
pub fn sharpness_scan(
    curve: &MonomialCurve,
    r: f64,
    s: f64,
    eps_list: &[f64],
    window: &TruncationWindow,
    rule: &QuadratureRule,
    opts: &SharpnessOptions,
) -> Result<SharpnessReport> {
    if eps_list.len() < 3 || eps_list.windows(2).any(|w| w[0] <= w[1]) {
        return Err(Error::InvalidParameter(
            "the scan needs a strictly decreasing eps list of length >= 3".into(),
        ));
    }
    let region = admissible_region(curve.dim())?;
    let s_prime = holder_conjugate(s);
    let x = 1.0 / r;
    let y = 1.0 - 1.0 / s;
    if region.contains_closed(x, y) && !opts.control {
        return Err(Error::InvalidParameter(format!(
            "(1/r, 1/s') = ({x}, {y}) is not strictly outside the admissible region; \
             use the control mode for bounded runs"
        )));
    }

    let grid = DyadicGrid::for_curve(curve, vec![0; curve.dim()])?;
    let mut rows = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let (pair, pairing) = bump_pair(curve, eps, r, s, rule, opts)?;
        let fine_rule = scan_rule(curve, eps, rule);
        let window_pairing: f64 =
            pairing_by_scale_windowed(&pair.f, &pair.g, curve, window, &fine_rule)?
                .into_iter()
                .map(|(_, v)| v)
                .sum();

        let floor_scale = (eps.log2().floor() as i64) - 2;
        let mut sp = SparseParams::new(r, s, floor_scale)?;
        sp.stopping_constant = opts.stopping_constant;
        sp.node_budget = opts.node_budget;
        // pin the root envelope to the eps-independent pair geometry so the
        // collection's coarse scale does not jump along the scan
        let envelope = concentration_box(curve, eps_list[0])
            .hull(tube_geometry(curve, eps_list[0], 2)?.domain());
        let (collection, _) =
            construct_for_pair_enveloped(&pair.f, &pair.g, &grid, &sp, Some(&envelope))?;
        verify_sparsity(&collection, 0.5)?;
        let lambda = sparse_form(&collection, &pair.f, &pair.g, r, s);

        let oracle_ratio = box_oracle_ratio(curve, eps, r, s_prime, opts.cells_per_feature)?;
        let oracle_ratio_fine =
            box_oracle_ratio(curve, eps, r, s_prime, 2 * opts.cells_per_feature)?;

        rows.push(SharpnessRow {
            eps,
            pairing,
            window_pairing,
            lambda,
            pairing_over_lambda: if lambda > 0.0 { pairing / lambda } else { f64::INFINITY },
            oracle_ratio,
            oracle_ratio_fine,
            separation: pair.separation,
        });
    }

    // drop the coarsest entries (transient regime) before fitting
    let drop = eps_list.len().saturating_sub(3).min(2);
    let fit_eps: Vec<f64> = rows[drop..].iter().map(|r| r.eps).collect();
    let fit_pairing: Vec<f64> = rows[drop..].iter().map(|r| r.pairing).collect();
    let fit_oracle: Vec<f64> = rows[drop..].iter().map(|r| r.oracle_ratio_fine).collect();
    let sigma_hat = -loglog_fit(&fit_eps, &fit_pairing)?.slope;
    let sigma_oracle = -loglog_fit(&fit_eps, &fit_oracle)?.slope;

    let oracle_drift = rows
        .iter()
        .map(|row| (row.oracle_ratio - row.oracle_ratio_fine).abs() / row.oracle_ratio_fine)
        .fold(0.0, f64::max);
    let pairing_monotone_increasing = rows.windows(2).all(|w| w[1].pairing > w[0].pairing);
    let spread = |vals: Vec<f64>| -> f64 {
        let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().cloned().fold(0.0f64, f64::max);
        if lo > 0.0 {
            hi / lo
        } else {
            f64::INFINITY
        }
    };
    let lambda_spread = spread(rows.iter().map(|r| r.lambda).collect());
    let ratio_spread = spread(rows.iter().map(|r| r.pairing_over_lambda).collect());

    Ok(SharpnessReport {
        r,
        s,
        control: opts.control,
        rows,
        sigma_hat,
        sigma_oracle,
        oracle_drift,
        pairing_monotone_increasing,
        lambda_spread,
        ratio_spread,
    })
}
