//! Curves with nonvanishing torsion: derivative oracles, the Taylor frame,
//! and the rescaled-torsion computation used when a curve is dilated down
//! to scale one on a subinterval.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geom::{determinant, dot, gram_schmidt, Frame};

/// A `C^n` curve on `[-1, 1]` given through a derivative oracle
/// `gamma^(k)(t)` for `1 <= k <= n`. Built-in constructors provide
/// closed-form derivatives; the point-sample fallback differentiates
/// numerically and is flagged approximate.
#[derive(Clone)]
pub struct TorsionCurve {
    dim: usize,
    kind: CurveKind,
    approximate: bool,
}

#[derive(Clone)]
enum CurveKind {
    /// `coeffs[i][j]` is the coefficient of `t^j` in component `i`.
    Polynomial(Vec<Vec<f64>>),
    /// Rotation applied to a polynomial curve.
    Rotated(Frame, Vec<Vec<f64>>),
    /// Point samples only; derivatives by central differences.
    Sampled(Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>),
}

/// Step for the central-difference fallback.
const FD_STEP: f64 = 1e-5;

impl TorsionCurve {
    /// The moment curve `(t, t^2, ..., t^n)`.
    pub fn moment(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidCurve("need dimension n >= 2".into()));
        }
        let coeffs = (1..=n)
            .map(|k| {
                let mut c = vec![0.0; k + 1];
                c[k] = 1.0;
                c
            })
            .collect();
        TorsionCurve::polynomial(coeffs)
    }

    /// The moment curve rotated by an orthonormal frame.
    pub fn rotated_moment(n: usize, rotation: Frame) -> Result<Self> {
        if rotation.dim() != n {
            return Err(Error::InvalidCurve("rotation dimension mismatch".into()));
        }
        let moment = TorsionCurve::moment(n)?;
        let CurveKind::Polynomial(coeffs) = moment.kind else { unreachable!() };
        Ok(TorsionCurve { dim: n, kind: CurveKind::Rotated(rotation, coeffs), approximate: false })
    }

    /// Curve with polynomial components; `coeffs[i][j]` multiplies `t^j` in
    /// component `i`.
    pub fn polynomial(coeffs: Vec<Vec<f64>>) -> Result<Self> {
        let n = coeffs.len();
        if n < 2 {
            return Err(Error::InvalidCurve("need dimension n >= 2".into()));
        }
        if coeffs.iter().any(|c| c.is_empty()) {
            return Err(Error::InvalidCurve("each component needs coefficients".into()));
        }
        Ok(TorsionCurve { dim: n, kind: CurveKind::Polynomial(coeffs), approximate: false })
    }

    /// Fallback for curves given only by a point function. Derivatives use
    /// central differences with step `1e-5`; `is_approximate()` reports it.
    pub fn from_point_fn<F>(dim: usize, f: F) -> Result<Self>
    where
        F: Fn(f64) -> Vec<f64> + Send + Sync + 'static,
    {
        if dim < 2 {
            return Err(Error::InvalidCurve("need dimension n >= 2".into()));
        }
        Ok(TorsionCurve { dim, kind: CurveKind::Sampled(Arc::new(f)), approximate: true })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_approximate(&self) -> bool {
        self.approximate
    }

    pub fn position(&self, t: f64) -> Vec<f64> {
        match &self.kind {
            CurveKind::Polynomial(coeffs) => poly_eval(coeffs, t),
            CurveKind::Rotated(rot, coeffs) => apply_frame(rot, &poly_eval(coeffs, t)),
            CurveKind::Sampled(f) => f(t),
        }
    }

    /// `gamma^(k)(t)` for `k >= 1`.
    pub fn derivative(&self, k: usize, t: f64) -> Vec<f64> {
        debug_assert!(k >= 1);
        match &self.kind {
            CurveKind::Polynomial(coeffs) => poly_derivative(coeffs, k, t),
            CurveKind::Rotated(rot, coeffs) => apply_frame(rot, &poly_derivative(coeffs, k, t)),
            CurveKind::Sampled(f) => central_difference(f.as_ref(), k, t),
        }
    }

    fn derivative_columns(&self, t: f64) -> Vec<Vec<f64>> {
        (1..=self.dim).map(|k| self.derivative(k, t)).collect()
    }
}

fn poly_eval(coeffs: &[Vec<f64>], t: f64) -> Vec<f64> {
    coeffs
        .iter()
        .map(|c| c.iter().rev().fold(0.0, |acc, &a| acc * t + a))
        .collect()
}

fn poly_derivative(coeffs: &[Vec<f64>], k: usize, t: f64) -> Vec<f64> {
    coeffs
        .iter()
        .map(|c| {
            let mut acc = 0.0;
            for (j, &a) in c.iter().enumerate().skip(k) {
                let mut f = 1.0;
                for i in 0..k {
                    f *= (j - i) as f64;
                }
                acc += a * f * t.powi((j - k) as i32);
            }
            acc
        })
        .collect()
}

fn apply_frame(frame: &Frame, v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let mut out = vec![0.0; n];
    for (k, &vk) in v.iter().enumerate() {
        for (o, &e) in out.iter_mut().zip(frame.column(k)) {
            *o += vk * e;
        }
    }
    out
}

/// k-th derivative by the central-difference stencil
/// `h^-k sum_j (-1)^j C(k,j) f(t + (k/2 - j) h)`.
fn central_difference(f: &(dyn Fn(f64) -> Vec<f64> + Send + Sync), k: usize, t: f64) -> Vec<f64> {
    let h = FD_STEP;
    let mut acc: Option<Vec<f64>> = None;
    for j in 0..=k {
        let mut binom = 1.0;
        for i in 0..j {
            binom *= (k - i) as f64 / (i + 1) as f64;
        }
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        let x = f(t + (k as f64 / 2.0 - j as f64) * h);
        match &mut acc {
            None => acc = Some(x.iter().map(|v| sign * binom * v).collect()),
            Some(a) => {
                for (ai, &xi) in a.iter_mut().zip(&x) {
                    *ai += sign * binom * xi;
                }
            }
        }
    }
    let scale = h.powi(k as i32);
    acc.unwrap().into_iter().map(|v| v / scale).collect()
}

/// `det(gamma^(1)(t), ..., gamma^(n)(t))`.
pub fn torsion(curve: &TorsionCurve, t: f64) -> f64 {
    determinant(&curve.derivative_columns(t))
}

/// Minimum of `|torsion|` over `samples` points of `[a, b]`; errors when it
/// vanishes (relative to the derivative magnitudes), so nonvanishing torsion
/// is checked rather than assumed.
pub fn check_torsion_nonvanishing(
    curve: &TorsionCurve,
    a: f64,
    b: f64,
    samples: usize,
) -> Result<f64> {
    debug_assert!(a < b && samples >= 2);
    let mut min_abs = f64::INFINITY;
    let mut scale: f64 = 0.0;
    for i in 0..samples {
        let t = a + (b - a) * i as f64 / (samples - 1) as f64;
        let cols = curve.derivative_columns(t);
        let d = determinant(&cols).abs();
        min_abs = min_abs.min(d);
        let col_scale = cols.iter().map(|c| crate::geom::norm(c)).fold(1.0, f64::max);
        scale = scale.max(col_scale.powi(curve.dim() as i32));
    }
    if min_abs <= 1e-10 * scale {
        return Err(Error::InvalidCurve(format!(
            "torsion vanishes on [{a}, {b}]: min |det| = {min_abs:e}"
        )));
    }
    Ok(min_abs)
}

/// Orthonormal frame from the derivatives at `t0`: `e_k` spans the same flag
/// as `gamma^(1), ..., gamma^(k)` with the sign fixed by
/// `e_k . gamma^(k)(t0) > 0`.
pub fn build_frame(curve: &TorsionCurve, t0: f64) -> Result<Frame> {
    let cols = curve.derivative_columns(t0);
    let scale = cols.iter().map(|c| crate::geom::norm(c)).fold(1.0, f64::max);
    let tor = determinant(&cols);
    if tor.abs() <= 1e-10 * scale.powi(curve.dim() as i32) {
        return Err(Error::InvalidCurve(format!(
            "vanishing torsion at t0 = {t0}: det = {tor:e}"
        )));
    }
    let mut basis = gram_schmidt(&cols)
        .ok_or_else(|| Error::InvalidCurve(format!("dependent derivatives at t0 = {t0}")))?;
    for (e, g) in basis.iter_mut().zip(&cols) {
        if dot(e, g) < 0.0 {
            for v in e.iter_mut() {
                *v = -*v;
            }
        }
    }
    Frame::new(basis)
}

/// Minimum `|torsion|` of the rescaled curve
/// `nu_k(t) = lambda^{-k} gamma_k(lambda t)` over the i-th of `m2` equal
/// subintervals of `[lambda/2, lambda]`, where `gamma_k` are the components
/// in the frame built at the subinterval's left endpoint. The caller asserts
/// the returned minimum is bounded below.
pub fn rescaled_torsion_check(
    curve: &TorsionCurve,
    lambda: f64,
    i: usize,
    m2: usize,
) -> Result<f64> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::InvalidParameter(format!("need lambda in (0, 1], got {lambda}")));
    }
    if i < 1 || i > m2 || m2 == 0 {
        return Err(Error::InvalidParameter(format!("need 1 <= i <= m2, got i = {i}, m2 = {m2}")));
    }
    let n = curve.dim();
    let half = 0.5 * lambda;
    let a_i = half + (i - 1) as f64 / m2 as f64 * half;
    let b_i = half + i as f64 / m2 as f64 * half;
    let frame = build_frame(curve, a_i)?;

    const SAMPLES: usize = 65;
    let mut min_abs = f64::INFINITY;
    for s in 0..SAMPLES {
        // sample t with lambda * t covering [a_i, b_i]
        let u = a_i + (b_i - a_i) * s as f64 / (SAMPLES - 1) as f64;
        let t = u / lambda;
        debug_assert!((lambda * t - u).abs() < 1e-12);
        // columns indexed by derivative order k, rows by frame component j:
        // nu_j^(k)(t) = lambda^{k-j} gamma_j^(k)(lambda t)
        let cols: Vec<Vec<f64>> = (1..=n)
            .map(|k| {
                let g = frame.coordinates(&curve.derivative(k, lambda * t));
                g.iter()
                    .enumerate()
                    .map(|(j, &gj)| lambda.powi(k as i32 - (j + 1) as i32) * gj)
                    .collect()
            })
            .collect();
        min_abs = min_abs.min(determinant(&cols).abs());
    }
    Ok(min_abs)
}
