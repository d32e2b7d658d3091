//! Subcommand implementations. Every command writes its artifacts through
//! the `OutputWriter` so the manifest lists them with content hashes.

use anyhow::{bail, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use htcurve::families::{test_family, FamilySpec};
use htcurve::fit::loglog_fit;
use htcurve::geom::BoxN;
use htcurve::grid::DyadicGrid;
use htcurve::gridfn::{GridFunction, GridGeometry};
use htcurve::operators::{calibrate_support_n, continuity_study, decay_directions, fourier_decay_profile, BumpProfile};
use htcurve::region::{admissible_region, dual_region, in_admissible_interior};
use htcurve::sparse::{domination_report, DominationParams};
use htcurve::weights::{
    alpha_exponent, ap_constant, quasi_ball_family, rh_constant, sharpness_scan, weighted_bound_check,
    SharpnessOptions, Weight,
};

use crate::config::ExperimentConfig;
use crate::manifest::OutputWriter;

fn fmt_csv(fields: &[String]) -> String {
    fields.join(",")
}

// -------------------------------------------------------------------------

#[derive(Serialize)]
struct RegionOut {
    n: usize,
    vertices: Vec<[f64; 2]>,
    dual_vertices: Vec<[f64; 2]>,
    pairs: Vec<PairRow>,
}

#[derive(Serialize)]
struct PairRow {
    r: f64,
    s: f64,
    x: f64,
    y: f64,
    admissible: bool,
}

pub fn region(cfg: &ExperimentConfig, out: &mut OutputWriter) -> Result<()> {
    let n = match (&cfg.region, cfg.curve().ok()) {
        (Some(spec), _) => spec.n,
        (None, Some(curve)) => curve.dim(),
        (None, None) => bail!("need a [region] section or a valid curve"),
    };
    let omega = admissible_region(n)?;
    let dual = dual_region(n)?;
    let pairs = cfg
        .pairs
        .as_ref()
        .map(|p| p.rs.clone())
        .unwrap_or_default()
        .into_iter()
        .map(|[r, s]| PairRow {
            r,
            s,
            x: 1.0 / r,
            y: 1.0 - 1.0 / s,
            admissible: in_admissible_interior(&omega, r, s),
        })
        .collect();
    out.write_json(
        "region.json",
        &RegionOut {
            n,
            vertices: omega.vertices().to_vec(),
            dual_vertices: dual.vertices().to_vec(),
            pairs,
        },
    )
}

// -------------------------------------------------------------------------

#[derive(Serialize)]
struct GridPropsCase {
    alpha: Vec<f64>,
    shifts_checked: usize,
    points: usize,
    nesting_violations: usize,
    partition_violations: usize,
    parent_ratio_sup: f64,
}

pub fn grid_props(cfg: &ExperimentConfig, seed: u64, out: &mut OutputWriter) -> Result<()> {
    let spec = cfg.grid_props.as_ref().context("a [grid_props] section is required")?;
    let points = spec.points.unwrap_or(10_000);
    let k_range = spec.k_range.unwrap_or(6);
    let mut cases = Vec::new();
    for alpha in &spec.alphas {
        let shifts = DyadicGrid::all_shifts(alpha.len());
        let mut nesting_violations = 0usize;
        let mut partition_violations = 0usize;
        let mut parent_ratio_sup: f64 = 0.0;
        for shift in &shifts {
            let grid = DyadicGrid::new(alpha.clone(), shift.clone())?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(shift.iter().fold(0u64, |a, &j| a * 3 + j as u64));
            for _ in 0..points {
                let x: Vec<f64> = (0..alpha.len()).map(|_| rng.gen_range(-4.0..4.0)).collect();
                let y: Vec<f64> = (0..alpha.len()).map(|_| rng.gen_range(-4.0..4.0)).collect();
                let k1 = rng.gen_range(-k_range..=k_range);
                let k2 = rng.gen_range(k1..=k_range);
                let c1 = grid.find_cube(&x, k1)?;
                let c2 = grid.find_cube(&y, k2)?;
                if !grid.cube_box(&c1).contains_point(&x) {
                    partition_violations += 1;
                }
                if !(grid.contains(&c2, &c1) || grid.disjoint(&c1, &c2)) {
                    nesting_violations += 1;
                }
                let p = grid.parent(&c1)?;
                parent_ratio_sup = parent_ratio_sup.max(grid.ell(&p) / grid.ell(&c1));
            }
        }
        cases.push(GridPropsCase {
            alpha: alpha.clone(),
            shifts_checked: shifts.len(),
            points,
            nesting_violations,
            partition_violations,
            parent_ratio_sup,
        });
    }
    if cases.iter().any(|c| c.nesting_violations > 0 || c.partition_violations > 0) {
        out.write_json("grid_props.json", &cases)?;
        bail!("grid property violations found; see grid_props.json");
    }
    out.write_json("grid_props.json", &cases)
}

// -------------------------------------------------------------------------

#[derive(Serialize)]
struct SupportCheckOut {
    scales: Vec<SupportCheckRow>,
    pinned_default: u32,
}

#[derive(Serialize)]
struct SupportCheckRow {
    k: i64,
    calibrated_n: u32,
}

pub fn support_check(cfg: &ExperimentConfig, refine: usize, out: &mut OutputWriter) -> Result<()> {
    let curve = cfg.curve()?;
    let spec = cfg.support_check.as_ref().context("a [support_check] section is required")?;
    let geom = cfg.grid_geometry(refine)?;
    let rule = cfg.quadrature(refine)?;
    let n_max = spec.n_max.unwrap_or(8);
    let grid = DyadicGrid::for_curve(&curve, vec![0; curve.dim()])?;
    let center = geom.domain().center();
    let mut rows = Vec::new();
    for &k in &spec.scales {
        let cube = grid.find_cube(&center, k)?;
        let calibrated = calibrate_support_n(&curve, &grid, &cube, &geom, &rule, n_max)?;
        rows.push(SupportCheckRow { k, calibrated_n: calibrated });
    }
    out.write_json(
        "support_check.json",
        &SupportCheckOut { scales: rows, pinned_default: htcurve::operators::PARABOLA_N_LOC },
    )
}

// -------------------------------------------------------------------------

pub fn decay(cfg: &ExperimentConfig, out: &mut OutputWriter) -> Result<()> {
    let curve = cfg.curve()?;
    let spec = cfg.decay.as_ref().context("a [decay] section is required")?;
    let psi = BumpProfile::default();
    let dirs = decay_directions(&curve, &spec.stationary_points)?;
    let rows = fourier_decay_profile(&curve, &psi, &dirs, &spec.magnitudes)?;
    let mut csv = String::from("magnitude,direction,modulus,scaled\n");
    for row in &rows {
        csv.push_str(&fmt_csv(&[
            row.magnitude.to_string(),
            format!("\"{:?}\"", row.direction),
            row.modulus.to_string(),
            row.scaled.to_string(),
        ]));
        csv.push('\n');
    }
    out.write("decay.csv", &csv)?;

    #[derive(Serialize)]
    struct DecaySummary {
        magnitudes: Vec<f64>,
        sup_scaled: Vec<f64>,
        band_ratio: f64,
    }
    let sup_scaled: Vec<f64> = spec
        .magnitudes
        .iter()
        .map(|&m| {
            rows.iter()
                .filter(|r| r.magnitude == m)
                .map(|r| r.scaled)
                .fold(0.0f64, f64::max)
        })
        .collect();
    let lo = sup_scaled.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = sup_scaled.iter().cloned().fold(0.0f64, f64::max);
    out.write_json(
        "decay.json",
        &DecaySummary { magnitudes: spec.magnitudes.clone(), sup_scaled, band_ratio: hi / lo },
    )
}

// -------------------------------------------------------------------------

pub fn continuity(cfg: &ExperimentConfig, seed: u64, refine: usize, out: &mut OutputWriter) -> Result<()> {
    let curve = cfg.curve()?;
    let spec = cfg.continuity.as_ref().context("a [continuity] section is required")?;
    let geom = cfg.grid_geometry(refine)?;
    let rule = cfg.quadrature(refine)?;
    let support = BoxN::new(spec.support_min.clone(), spec.support_max.clone())?;
    let family_spec = FamilySpec {
        support,
        bumps: spec.bumps,
        cube_indicators: spec.cube_indicators,
        random_fields: spec.random_fields,
    };
    let family = test_family(&curve, &geom, &family_spec, seed)?;
    let rows = continuity_study(
        &curve,
        &spec.direction,
        &spec.magnitudes,
        spec.r,
        spec.s_prime,
        &family,
        &rule,
    )?;
    let mut csv = String::from("magnitude,estimate\n");
    for (m, v) in &rows {
        csv.push_str(&format!("{m},{v}\n"));
    }
    out.write("continuity.csv", &csv)?;

    let xs: Vec<f64> = rows.iter().map(|(m, _)| *m).collect();
    let ys: Vec<f64> = rows.iter().map(|(_, v)| *v).collect();
    let fit = loglog_fit(&xs, &ys)?;

    #[derive(Serialize)]
    struct ContinuityOut {
        r: f64,
        s_prime: f64,
        eta_hat: f64,
        eta_lower_95: f64,
        family_size: usize,
    }
    out.write_json(
        "continuity.json",
        &ContinuityOut {
            r: spec.r,
            s_prime: spec.s_prime,
            eta_hat: fit.slope,
            eta_lower_95: fit.slope_lower_bound(0.95),
            family_size: family.len(),
        },
    )
}

// -------------------------------------------------------------------------

fn block_field(fine: &GridGeometry, block: &[usize], seed: u64, stream: u64) -> Result<GridFunction> {
    let coarse_counts: Vec<usize> = fine
        .counts()
        .iter()
        .zip(block)
        .map(|(&c, &b)| {
            anyhow::ensure!(b > 0 && c % b == 0, "block {b} must divide the count {c}");
            Ok(c / b)
        })
        .collect::<Result<_>>()?;
    let coarse = GridGeometry::new(fine.domain().clone(), coarse_counts)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let f = GridFunction::new(
        coarse.clone(),
        (0..coarse.cell_count()).map(|_| rng.gen_range(0.0..1.0)).collect(),
    )?;
    Ok(f.refine(block)?)
}

pub fn dominate(cfg: &ExperimentConfig, seed: u64, refine: usize, out: &mut OutputWriter) -> Result<()> {
    let curve = cfg.curve()?;
    let spec = cfg.dominate.as_ref().context("a [dominate] section is required")?;
    let pairs = cfg.pairs.as_ref().context("a [pairs] section is required")?;
    let window = cfg.window()?;
    let rule = cfg.quadrature(refine)?;
    let notes = cfg.validate_mesh(&curve, refine)?;
    log::info!("mesh check: {notes}");

    let support = GridGeometry::new(
        BoxN::new(spec.support_min.clone(), spec.support_max.clone())?,
        spec.support_counts.iter().map(|c| c * refine).collect(),
    )?;
    let block: Vec<usize> = spec.block.iter().map(|b| b * refine).collect();

    #[derive(Serialize)]
    struct DominateOut {
        r: f64,
        s: f64,
        trials: usize,
        sup_ratio: f64,
        certificates_pass: bool,
        reports: Vec<htcurve::sparse::DominationReport>,
    }

    let mut csv = String::from("r,s,trial,pairing,lambda_gamma,ratio,cubes,doublings\n");
    let mut blocks_out = Vec::new();
    for &[r, s] in &pairs.rs {
        let params = DominationParams {
            r,
            s,
            window,
            stopping_constant: cfg.stopping_constant(),
            floor_scale: cfg.floor_scale()?,
            node_budget: cfg.node_budget(),
            n_loc: cfg.n_localization(),
        };
        let mut reports = Vec::new();
        let mut sup_ratio: f64 = 0.0;
        for trial in 0..spec.trials {
            let f = block_field(&support, &block, seed, 2 * trial as u64 + 1)?;
            let g = block_field(&support, &block, seed, 2 * trial as u64 + 2)?;
            let report = domination_report(&f, &g, &curve, &rule, &params)?;
            csv.push_str(&format!(
                "{r},{s},{trial},{},{},{},{},{}\n",
                report.pairing,
                report.lambda_gamma,
                report.ratio,
                report.cube_count,
                report.doublings
            ));
            sup_ratio = sup_ratio.max(report.ratio);
            reports.push(report);
        }
        blocks_out.push(DominateOut {
            r,
            s,
            trials: spec.trials,
            sup_ratio,
            certificates_pass: reports
                .iter()
                .all(|rep| rep.certificate_dyadic.min_ratio > 0.5),
            reports,
        });
    }
    out.write("dominate.csv", &csv)?;
    out.write_json("dominate.json", &blocks_out)
}

// -------------------------------------------------------------------------

pub fn sharpness(cfg: &ExperimentConfig, refine: usize, out: &mut OutputWriter) -> Result<()> {
    let curve = cfg.curve()?;
    let spec = cfg.sharpness.as_ref().context("a [sharpness] section is required")?;
    let window = cfg.window()?;
    let rule = cfg.quadrature(refine)?;
    let mut opts = SharpnessOptions::default();
    opts.control = spec.control.unwrap_or(false);
    if let Some(c) = spec.cells_per_feature {
        opts.cells_per_feature = c * refine;
    } else {
        opts.cells_per_feature *= refine;
    }
    opts.stopping_constant = cfg.stopping_constant();
    let report = sharpness_scan(&curve, spec.r, spec.s, &spec.eps, &window, &rule, &opts)?;
    let mut csv = String::from("eps,pairing,lambda,ratio,oracle_ratio\n");
    for row in &report.rows {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            row.eps, row.pairing, row.lambda, row.pairing_over_lambda, row.oracle_ratio_fine
        ));
    }
    out.write("sharpness.csv", &csv)?;
    out.write_json("sharpness.json", &report)
}

// -------------------------------------------------------------------------

pub fn weights(cfg: &ExperimentConfig, seed: u64, refine: usize, out: &mut OutputWriter) -> Result<()> {
    let curve = cfg.curve()?;
    let spec = cfg.weights.as_ref().context("a [weights] section is required")?;
    let geom = cfg.grid_geometry(refine)?;
    let window = cfg.window()?;
    let rule = cfg.quadrature(refine)?;
    let balls = quasi_ball_family(&curve, geom.domain(), spec.ell_exp_min, spec.ell_exp_max)?;
    let w = Weight::power(&curve, geom.clone(), spec.power_exponent, spec.floor)?;

    let support = BoxN::new(spec.support_min.clone(), spec.support_max.clone())?;
    let family = test_family(
        &curve,
        &geom,
        &FamilySpec {
            support,
            bumps: spec.bumps,
            cube_indicators: spec.cube_indicators,
            random_fields: spec.random_fields,
        },
        seed,
    )?;
    let report = weighted_bound_check(
        &family, &w, &curve, &balls, spec.p, spec.r, spec.s, &window, &rule,
    )?;

    #[derive(Serialize)]
    struct WeightsOut {
        alpha_exponent: f64,
        ap: f64,
        rh: f64,
        ball_count: usize,
        ball_generations: usize,
        report: htcurve::weights::WeightedReport,
    }
    let alpha = alpha_exponent(spec.p, spec.r, spec.s)?;
    out.write_json(
        "weights.json",
        &WeightsOut {
            alpha_exponent: alpha,
            ap: ap_constant(&w, spec.p, &balls),
            rh: rh_constant(&w, spec.p, &balls),
            ball_count: balls.balls.len(),
            ball_generations: balls.ell_values.len(),
            report,
        },
    )
}

