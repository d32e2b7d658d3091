//! Experiment configuration: a single TOML file with nested sections.
//! Unknown keys are rejected so typos fail loudly instead of silently
//! falling back to defaults.

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use htcurve::curve::MonomialCurve;
use htcurve::geom::BoxN;
use htcurve::gridfn::GridGeometry;
use htcurve::operators::{QuadratureRule, TruncationWindow};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    pub curve: CurveSpec,
    pub grid: Option<GridSpec>,
    pub window: Option<WindowSpec>,
    pub quadrature: Option<QuadratureSpec>,
    pub stopping: Option<StoppingSpec>,
    pub pairs: Option<PairsSpec>,
    pub region: Option<RegionSpec>,
    pub grid_props: Option<GridPropsSpec>,
    pub support_check: Option<SupportCheckSpec>,
    pub decay: Option<DecaySpec>,
    pub continuity: Option<ContinuitySpec>,
    pub dominate: Option<DominateSpec>,
    pub sharpness: Option<SharpnessSpec>,
    pub weights: Option<WeightsSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveSpec {
    pub kind: String,
    pub alpha: Option<Vec<f64>>,
    pub eps_plus: Option<Vec<i8>>,
    pub eps_minus: Option<Vec<i8>>,
    pub n: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub box_min: Vec<f64>,
    pub box_max: Vec<f64>,
    pub counts: Vec<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSpec {
    pub k_min: i32,
    pub k_max: i32,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSpec {
    pub nodes_per_half: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoppingSpec {
    /// 0 selects the curve-dependent default.
    pub constant: Option<f64>,
    pub floor_scale: i64,
    pub node_budget: Option<usize>,
    pub n_localization: Option<u32>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairsSpec {
    /// `[[r, s], ...]`
    pub rs: Vec<[f64; 2]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSpec {
    pub n: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridPropsSpec {
    pub alphas: Vec<Vec<f64>>,
    pub points: Option<usize>,
    pub k_range: Option<i64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupportCheckSpec {
    pub scales: Vec<i64>,
    pub n_max: Option<u32>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecaySpec {
    pub magnitudes: Vec<f64>,
    pub stationary_points: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuitySpec {
    pub direction: Vec<f64>,
    pub magnitudes: Vec<f64>,
    pub r: f64,
    pub s_prime: f64,
    pub support_min: Vec<f64>,
    pub support_max: Vec<f64>,
    pub bumps: usize,
    pub cube_indicators: usize,
    pub random_fields: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DominateSpec {
    pub trials: usize,
    pub support_min: Vec<f64>,
    pub support_max: Vec<f64>,
    pub support_counts: Vec<usize>,
    /// Blocks of cells sharing one random draw, so the data is resolved by
    /// the mesh.
    pub block: Vec<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SharpnessSpec {
    pub r: f64,
    pub s: f64,
    pub eps: Vec<f64>,
    pub control: Option<bool>,
    pub cells_per_feature: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsSpec {
    pub p: f64,
    pub r: f64,
    pub s: f64,
    pub power_exponent: f64,
    pub floor: f64,
    pub ell_exp_min: i32,
    pub ell_exp_max: i32,
    pub support_min: Vec<f64>,
    pub support_max: Vec<f64>,
    pub bumps: usize,
    pub cube_indicators: usize,
    pub random_fields: usize,
}

impl ExperimentConfig {
    pub fn load(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).context("parsing the config")?;
        Ok(cfg)
    }

    pub fn curve(&self) -> Result<MonomialCurve> {
        match self.curve.kind.as_str() {
            "monomial" => {
                let alpha = self.curve.alpha.clone().context("curve.alpha required for kind = \"monomial\"")?;
                let eps_plus = self.curve.eps_plus.clone().context("curve.eps_plus required")?;
                let eps_minus = self.curve.eps_minus.clone().context("curve.eps_minus required")?;
                Ok(MonomialCurve::new(alpha, eps_plus, eps_minus)?)
            }
            "moment" => {
                let n = self.curve.n.context("curve.n required for kind = \"moment\"")?;
                Ok(MonomialCurve::moment(n)?)
            }
            other => bail!("unknown curve kind {other:?} (expected \"monomial\" or \"moment\")"),
        }
    }

    /// Grid geometry, with counts optionally refined by a factor.
    pub fn grid_geometry(&self, refine: usize) -> Result<GridGeometry> {
        let spec = self.grid.as_ref().context("a [grid] section is required for this command")?;
        let counts = spec.counts.iter().map(|c| c * refine).collect();
        let domain = BoxN::new(spec.box_min.clone(), spec.box_max.clone())?;
        Ok(GridGeometry::new(domain, counts)?)
    }

    pub fn window(&self) -> Result<TruncationWindow> {
        let w = self.window.as_ref().context("a [window] section is required for this command")?;
        Ok(TruncationWindow::new(w.k_min, w.k_max)?)
    }

    pub fn quadrature(&self, refine: usize) -> Result<QuadratureRule> {
        let nodes = self.quadrature.as_ref().map(|q| q.nodes_per_half).unwrap_or(256);
        Ok(QuadratureRule::new(nodes * refine)?)
    }

    pub fn stopping_constant(&self) -> Option<f64> {
        self.stopping.as_ref().and_then(|s| {
            let c = s.constant.unwrap_or(0.0);
            if c > 0.0 {
                Some(c)
            } else {
                None
            }
        })
    }

    pub fn floor_scale(&self) -> Result<i64> {
        Ok(self
            .stopping
            .as_ref()
            .context("a [stopping] section is required for this command")?
            .floor_scale)
    }

    pub fn node_budget(&self) -> usize {
        self.stopping
            .as_ref()
            .and_then(|s| s.node_budget)
            .unwrap_or(200_000)
    }

    pub fn n_localization(&self) -> u32 {
        self.stopping
            .as_ref()
            .and_then(|s| s.n_localization)
            .unwrap_or(htcurve::operators::PARABOLA_N_LOC)
    }

    pub fn seed(&self, override_seed: Option<u64>) -> u64 {
        override_seed.or(self.seed).unwrap_or(0)
    }

    /// Validation shared by the heavy numeric commands: the floor-scale
    /// cubes must hold at least four cells per axis, and the memory of the
    /// main grid is reported.
    pub fn validate_mesh(&self, curve: &MonomialCurve, refine: usize) -> Result<String> {
        let geom = self.grid_geometry(refine)?;
        if geom.dim() != curve.dim() {
            bail!("grid dimension {} does not match the curve dimension {}", geom.dim(), curve.dim());
        }
        let floor = self.floor_scale()?;
        let mut notes = Vec::new();
        for i in 0..geom.dim() {
            let cube_side = (floor as f64 * curve.alpha()[i]).floor().exp2();
            let cells = cube_side / geom.mesh(i);
            if cells < 4.0 - 1e-9 {
                bail!(
                    "axis {i}: floor-scale cubes hold {cells:.2} cells (< 4); \
                     refine counts[{i}] or raise stopping.floor_scale"
                );
            }
            notes.push(format!("axis {i}: {cells:.1} cells per floor cube"));
        }
        let bytes = geom.cell_count() * 8;
        notes.push(format!("grid payload {:.1} MiB", bytes as f64 / (1 << 20) as f64));
        Ok(notes.join("; "))
    }
}
