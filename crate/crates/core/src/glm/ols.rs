use super::covariance::cluster_robust_cov_parts;
use super::{Estimator, FitResult};
use crate::design::DesignMatrix;
use crate::error::{GravityError, Result};
use crate::linalg::{scale_rows, PivotedQr, RANK_TOL};

/// Least squares on the (log) response in `design`.
///
/// Reports R², adjusted R², the classical covariance `s^2 (X'X)^{-1}` and the
/// cluster-robust sandwich.
pub fn fit_ols(design: &DesignMatrix) -> Result<FitResult> {
    let n = design.nrows();
    let p = design.ncols();
    let w: Vec<f64> = (0..n).map(|i| design.weight(i)).collect();
    let qr = PivotedQr::new(&scale_rows(&design.x, &w), RANK_TOL);
    if !qr.is_full_rank() {
        return Err(GravityError::RankDeficient {
            columns: qr
                .dependent_columns()
                .into_iter()
                .map(|j| design.names[j].clone())
                .collect(),
        });
    }
    let ys: Vec<f64> = design.y.iter().zip(&w).map(|(y, wi)| y * wi.sqrt()).collect();
    let beta = qr.solve(&ys);
    let fitted = design.linear_predictor(&beta);

    let wsum: f64 = w.iter().sum();
    let ybar = design.y.iter().zip(&w).map(|(y, wi)| y * wi).sum::<f64>() / wsum;
    let centre = if design.has_constant { ybar } else { 0.0 };
    let rss: f64 = (0..n).map(|i| w[i] * (design.y[i] - fitted[i]).powi(2)).sum();
    let tss: f64 = (0..n).map(|i| w[i] * (design.y[i] - centre).powi(2)).sum();
    let r2 = if tss > 0.0 { 1.0 - rss / tss } else { 1.0 };
    let dof = n as f64 - p as f64;
    let r2_adjusted = if dof > 0.0 {
        let lead = if design.has_constant { n as f64 - 1.0 } else { n as f64 };
        Some(1.0 - (1.0 - r2) * lead / dof)
    } else {
        None
    };
    let sigma2 = if dof > 0.0 { rss / dof } else { f64::NAN };
    let loglik = if rss > 0.0 {
        -0.5 * n as f64 * ((2.0 * std::f64::consts::PI * rss / n as f64).ln() + 1.0)
    } else {
        f64::INFINITY
    };

    let mut fit = FitResult {
        estimator: Estimator::Ols,
        names: design.names.clone(),
        coefficients: beta,
        covariance_model: Some(qr.inverse_gram() * sigma2),
        covariance_robust: None,
        small_sample_factor: f64::NAN,
        n_clusters: 0,
        loglik,
        deviance: rss,
        null_deviance: tss,
        pseudo_r2: None,
        r2: Some(r2),
        r2_adjusted,
        dispersion: None,
        n_obs: n,
        n_dropped_zeros: design.n_dropped_zeros,
        converged: true,
        iterations: 1,
        hessian_positive_definite: true,
        has_constant: design.has_constant,
        fitted,
        fixed_effect_reference: design.fixed_effect_reference.clone(),
        spec_echo: design.spec_echo.clone(),
    };
    match cluster_robust_cov_parts(design, &fit) {
        Ok(robust) => {
            fit.small_sample_factor = robust.small_sample_factor;
            fit.n_clusters = robust.n_clusters;
            fit.covariance_robust = Some(robust.matrix);
        }
        Err(GravityError::InsufficientData(_)) => fit.n_clusters = 1,
        Err(e) => return Err(e),
    }
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn design(y: Vec<f64>, x: DMatrix<f64>, names: &[&str]) -> DesignMatrix {
        let n = y.len();
        DesignMatrix::from_parts(
            y,
            x,
            names.iter().map(|s| s.to_string()).collect(),
            (0..n).map(|i| format!("c{}", i % 4)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn perfect_fit() {
        let b = [0.5, -1.25, 2.0];
        let x = DMatrix::from_fn(12, 3, |i, j| match j {
            0 => 1.0,
            1 => (i as f64 * 0.7).sin(),
            _ => (i as f64).sqrt(),
        });
        let y = (0..12).map(|i| (0..3).map(|j| x[(i, j)] * b[j]).sum()).collect();
        let fit = fit_ols(&design(y, x, &["intercept", "a", "b"])).unwrap();
        for (est, want) in fit.coefficients.iter().zip(b) {
            assert!((est - want).abs() < 1e-12);
        }
        assert!((fit.r2.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn intercept_only_is_mean() {
        let y = vec![1.0, 4.0, 2.0, 9.0];
        let fit = fit_ols(&design(y, DMatrix::from_element(4, 1, 1.0), &["intercept"])).unwrap();
        assert!((fit.coefficients[0] - 4.0).abs() < 1e-14);
        assert!(fit.r2.unwrap().abs() < 1e-14);
    }

    #[test]
    fn residuals_orthogonal_to_columns() {
        let x = DMatrix::from_fn(20, 2, |i, j| if j == 0 { 1.0 } else { (i as f64).ln_1p() });
        let y: Vec<f64> = (0..20).map(|i| ((i * 7919) % 13) as f64 * 0.3 + i as f64 * 0.1).collect();
        let d = design(y.clone(), x.clone(), &["intercept", "x"]);
        let fit = fit_ols(&d).unwrap();
        for j in 0..2 {
            let dot: f64 = (0..20).map(|i| x[(i, j)] * (y[i] - fit.fitted[i])).sum();
            let scale: f64 = (0..20).map(|i| (x[(i, j)] * y[i]).abs()).sum();
            assert!(dot.abs() <= 1e-8 * scale);
        }
        assert!(fit.r2_adjusted.unwrap() < fit.r2.unwrap());
    }
}
