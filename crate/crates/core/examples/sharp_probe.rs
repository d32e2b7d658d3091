use htcurve::curve::MonomialCurve;
use htcurve::operators::{QuadratureRule, TruncationWindow};
use htcurve::weights::{sharpness_scan, SharpnessOptions};

fn main() {
    let curve = MonomialCurve::parabola();
    let rule = QuadratureRule::new(128).unwrap();
    let window = TruncationWindow::new(-1, 1).unwrap();
    let eps: Vec<f64> = (2..=6).map(|e| 2f64.powi(-e)).collect();
    let report = sharpness_scan(&curve, 1.25, 1.25, &eps, &window, &rule,
        &SharpnessOptions::default()).unwrap();
    for row in &report.rows {
        println!(
            "eps {:.5}  pairing {:.5}  oracle {:.5}  oracle_fine {:.5}  lambda {:.5}  sep {:.3}",
            row.eps, row.pairing, row.oracle_ratio, row.oracle_ratio_fine, row.lambda, row.separation
        );
    }
    println!("sigma_hat {:.4}  sigma_oracle {:.4}  drift {:.4}", report.sigma_hat, report.sigma_oracle, report.oracle_drift);
}
