//! Least-squares line fits with a confidence bound on the slope, used by
//! the continuity and sharpness exponent studies.

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub dof: usize,
}

/// Ordinary least squares of `y` on `x`; needs at least three points for a
/// standard error.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LineFit> {
    let n = x.len();
    if n != y.len() || n < 3 {
        return Err(Error::InvalidParameter(format!(
            "line fit needs >= 3 matched points, got {n} and {}",
            y.len()
        )));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|xi| (xi - mx) * (xi - mx)).sum();
    if sxx <= 0.0 {
        return Err(Error::InvalidParameter("degenerate abscissae in line fit".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(xi, yi)| (xi - mx) * (yi - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(xi, yi)| {
            let r = yi - (intercept + slope * xi);
            r * r
        })
        .sum();
    let dof = n - 2;
    let slope_se = (ss_res / dof as f64 / sxx).sqrt();
    Ok(LineFit { slope, intercept, slope_se, dof })
}

/// Fit `ln y` against `ln x`; the slope is the power-law exponent.
pub fn loglog_fit(x: &[f64], y: &[f64]) -> Result<LineFit> {
    if x.iter().chain(y).any(|v| *v <= 0.0) {
        return Err(Error::InvalidParameter("log-log fit needs positive data".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    linear_fit(&lx, &ly)
}

impl LineFit {
    /// Lower end of the two-sided confidence interval for the slope.
    pub fn slope_lower_bound(&self, confidence: f64) -> f64 {
        assert!((0.0..1.0).contains(&confidence));
        let t = StudentsT::new(0.0, 1.0, self.dof as f64)
            .expect("valid dof")
            .inverse_cdf(0.5 + 0.5 * confidence);
        self.slope - t * self.slope_se
    }

    pub fn slope_confident_positive(&self, confidence: f64) -> bool {
        self.slope_lower_bound(confidence) > 0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line_has_zero_residual() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v - 1.0).collect();
        let fit = linear_fit(&x, &y).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-12);
        assert!((fit.intercept + 1.0).abs() < 1e-12);
        assert!(fit.slope_se < 1e-12);
        assert!(fit.slope_confident_positive(0.95));
    }

    #[test]
    fn power_law_recovered() {
        let x = [0.5f64, 0.25, 0.125, 0.0625];
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v.powf(1.7)).collect();
        let fit = loglog_fit(&x, &y).unwrap();
        assert!((fit.slope - 1.7).abs() < 1e-10);
    }

    #[test]
    fn noisy_flat_data_is_not_confidently_positive() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let y = [0.1, -0.2, 0.15, -0.1, 0.05, -0.05];
        let fit = linear_fit(&x, &y).unwrap();
        assert!(!fit.slope_confident_positive(0.95));
    }

    #[test]
    fn too_few_points_rejected() {
        assert!(linear_fit(&[1.0, 2.0], &[1.0, 2.0]).is_err());
        assert!(loglog_fit(&[1.0, -1.0, 2.0], &[1.0, 1.0, 1.0]).is_err());
    }
}
