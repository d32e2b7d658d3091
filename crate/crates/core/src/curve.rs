//! Monomial curves, their nonisotropic dilations, the associated
//! quasi-metric, and the nonisotropic cubes scaled to the curve.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{gram_schmidt, BoxN, Frame};

/// A monomial curve in `R^n`:
/// `t >= 0` maps to `(eps_plus_j * t^alpha_j)_j` and `t < 0` to
/// `(eps_minus_j * |t|^alpha_j)_j`, with `0 < alpha_1 < ... < alpha_n` and
/// the two sign vectors differing in at least one slot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonomialCurve {
    alpha: Vec<f64>,
    eps_plus: Vec<f64>,
    eps_minus: Vec<f64>,
}

impl MonomialCurve {
    pub fn new(alpha: Vec<f64>, eps_plus: Vec<i8>, eps_minus: Vec<i8>) -> Result<Self> {
        let n = alpha.len();
        if n < 2 {
            return Err(Error::InvalidCurve("need dimension n >= 2".into()));
        }
        if eps_plus.len() != n || eps_minus.len() != n {
            return Err(Error::InvalidCurve("sign vectors must match the exponent count".into()));
        }
        if alpha.iter().any(|a| !a.is_finite() || *a <= 0.0) {
            return Err(Error::InvalidCurve("exponents must be positive and finite".into()));
        }
        if alpha.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidCurve("exponents must be strictly increasing".into()));
        }
        if eps_plus.iter().chain(&eps_minus).any(|e| e.abs() != 1) {
            return Err(Error::InvalidCurve("sign entries must be +1 or -1".into()));
        }
        if eps_plus == eps_minus {
            return Err(Error::InvalidCurve(
                "the two branches must differ in at least one sign".into(),
            ));
        }
        Ok(MonomialCurve {
            alpha,
            eps_plus: eps_plus.into_iter().map(f64::from).collect(),
            eps_minus: eps_minus.into_iter().map(f64::from).collect(),
        })
    }

    /// The standard parabola `(t, t^2)`.
    pub fn parabola() -> Self {
        MonomialCurve::new(vec![1.0, 2.0], vec![1, 1], vec![-1, 1]).unwrap()
    }

    /// The moment curve `(t, t^2, ..., t^n)`.
    pub fn moment(n: usize) -> Result<Self> {
        let alpha = (1..=n).map(|k| k as f64).collect();
        let eps_plus = vec![1; n];
        // odd powers flip sign for t < 0
        let eps_minus = (1..=n).map(|k| if k % 2 == 0 { 1 } else { -1 }).collect();
        MonomialCurve::new(alpha, eps_plus, eps_minus)
    }

    pub fn dim(&self) -> usize {
        self.alpha.len()
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn alpha_sum(&self) -> f64 {
        self.alpha.iter().sum()
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        debug_assert!(t.is_finite());
        let (eps, a) = if t >= 0.0 {
            (&self.eps_plus, t)
        } else {
            (&self.eps_minus, -t)
        };
        self.alpha.iter().zip(eps).map(|(&al, &e)| e * a.powf(al)).collect()
    }

    /// Nonisotropic dilation `(lambda^alpha_j x_j)_j`.
    pub fn dilate(&self, lambda: f64, x: &[f64]) -> Result<Vec<f64>> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidParameter(format!("dilation needs lambda > 0, got {lambda}")));
        }
        Ok(self
            .alpha
            .iter()
            .zip(x)
            .map(|(&al, &xi)| lambda.powf(al) * xi)
            .collect())
    }

    /// `max_j |x_j - y_j|^{1/alpha_j}`.
    pub fn quasi_metric(&self, x: &[f64], y: &[f64]) -> f64 {
        self.alpha
            .iter()
            .zip(x.iter().zip(y))
            .map(|(&al, (&a, &b))| (a - b).abs().powf(1.0 / al))
            .fold(0.0, f64::max)
    }

    /// A bound on the quasi-triangle constant of `quasi_metric`, from the
    /// subadditivity of `u^{1/alpha}` when `alpha >= 1` and the worst-case
    /// splitting otherwise.
    pub fn quasi_triangle_bound(&self) -> f64 {
        let amin = self.alpha[0];
        if amin >= 1.0 {
            1.0
        } else {
            (1.0 / amin - 1.0).exp2()
        }
    }

    /// k-th derivative of the positive branch at `t > 0`.
    pub fn derivative_pos(&self, k: usize, t: f64) -> Vec<f64> {
        debug_assert!(t > 0.0 && k >= 1);
        self.alpha
            .iter()
            .zip(&self.eps_plus)
            .map(|(&al, &e)| {
                let mut c = 1.0;
                for i in 0..k {
                    c *= al - i as f64;
                }
                e * c * t.powf(al - k as f64)
            })
            .collect()
    }

    /// Bounding box of `{gamma(t) : lambda/2 <= |t| <= lambda}`, both branches.
    pub fn annulus_reach(&self, lambda: f64) -> BoxN {
        let n = self.dim();
        let mut min = vec![f64::INFINITY; n];
        let mut max = vec![f64::NEG_INFINITY; n];
        for eps in [&self.eps_plus, &self.eps_minus] {
            for j in 0..n {
                let lo = (0.5 * lambda).powf(self.alpha[j]);
                let hi = lambda.powf(self.alpha[j]);
                let (a, b) = if eps[j] > 0.0 { (lo, hi) } else { (-hi, -lo) };
                min[j] = min[j].min(a);
                max[j] = max[j].max(b);
            }
        }
        BoxN { min, max }
    }

    /// Union of `annulus_reach(2^k)` over `k_min <= k <= k_max`.
    pub fn window_reach(&self, k_min: i32, k_max: i32) -> BoxN {
        let mut out = self.annulus_reach((k_min as f64).exp2());
        for k in (k_min + 1)..=k_max {
            out = out.hull(&self.annulus_reach((k as f64).exp2()));
        }
        out
    }

    /// Axis-aligned cube with sides scaled as `ell^alpha_j`.
    pub fn gamma_cube(&self, center: Vec<f64>, ell: f64) -> Result<GammaCube> {
        GammaCube::new(center, ell, self.alpha.clone(), None)
    }

    /// Unit vector orthogonal to the first `n-1` derivatives at `t0 > 0`;
    /// along it the phase `xi . gamma(t)` is stationary to order `n-1`,
    /// which is the slow direction of Fourier decay.
    pub fn degenerate_direction(&self, t0: f64) -> Result<Vec<f64>> {
        let cols: Vec<Vec<f64>> = (1..=self.dim()).map(|k| self.derivative_pos(k, t0)).collect();
        let basis = gram_schmidt(&cols)
            .ok_or_else(|| Error::InvalidCurve(format!("dependent derivatives at t0 = {t0}")))?;
        Ok(basis.into_iter().last().unwrap())
    }
}

/// Hyperrectangle whose sides follow the curve scaling: the side along the
/// k-th frame vector is `ell^{exponents_k}`. The frame is `None` (identity,
/// axis-parallel) for monomial curves and a rotation for torsion curves.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaCube {
    pub center: Vec<f64>,
    pub ell: f64,
    pub exponents: Vec<f64>,
    pub frame: Option<Frame>,
}

impl GammaCube {
    pub fn new(center: Vec<f64>, ell: f64, exponents: Vec<f64>, frame: Option<Frame>) -> Result<Self> {
        if center.len() != exponents.len() {
            return Err(Error::InvalidParameter("cube center/exponent dimension mismatch".into()));
        }
        if !(ell > 0.0) || !ell.is_finite() {
            return Err(Error::InvalidParameter(format!("cube scale must be positive, got {ell}")));
        }
        if exponents.iter().any(|e| *e <= 0.0) {
            return Err(Error::InvalidParameter("cube exponents must be positive".into()));
        }
        if let Some(f) = &frame {
            if f.dim() != center.len() {
                return Err(Error::InvalidParameter("frame dimension mismatch".into()));
            }
        }
        Ok(GammaCube { center, ell, exponents, frame })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn side(&self, k: usize) -> f64 {
        self.ell.powf(self.exponents[k])
    }

    pub fn sides(&self) -> Vec<f64> {
        (0..self.dim()).map(|k| self.side(k)).collect()
    }

    /// `ell^{sum of exponents}`; equals the product of the sides.
    pub fn volume(&self) -> f64 {
        self.ell.powf(self.exponents.iter().sum())
    }

    /// Axis-aligned realization; only valid when the frame is the identity.
    pub fn to_box(&self) -> Result<BoxN> {
        if let Some(f) = &self.frame {
            if !f.is_identity(1e-14) {
                return Err(Error::InvalidParameter(
                    "rotated cube has no axis-aligned box".into(),
                ));
            }
        }
        BoxN::centered(&self.center, &self.sides())
    }
}
