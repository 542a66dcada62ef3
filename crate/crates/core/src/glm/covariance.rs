use nalgebra::DMatrix;

use super::{Estimator, FitResult};
use crate::design::DesignMatrix;
use crate::error::{GravityError, Result};
use crate::linalg::{scale_rows, symmetrize, PivotedQr, RANK_TOL};

/// Cluster-robust sandwich with its small-sample factor `G / (G - 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterCovariance {
    pub matrix: DMatrix<f64>,
    pub small_sample_factor: f64,
    pub n_clusters: usize,
}

/// `G/(G-1) * B (sum_g s_g s_g') B` with `B = (X'WX)^{-1}` and `s_g` the
/// per-cluster score sums evaluated at the fitted coefficients.
pub fn cluster_robust_cov(fit: &FitResult, design: &DesignMatrix) -> Result<ClusterCovariance> {
    cluster_robust_cov_parts(design, fit)
}

pub(super) fn cluster_robust_cov_parts(
    design: &DesignMatrix,
    fit: &FitResult,
) -> Result<ClusterCovariance> {
    let n = design.nrows();
    let p = design.ncols();
    if fit.coefficients.len() != p {
        return Err(GravityError::Internal("fit and design disagree on columns".into()));
    }
    let eta = design.linear_predictor(&fit.coefficients);

    // bread weight and score multiplier per row
    let mut w = Vec::with_capacity(n);
    let mut u = Vec::with_capacity(n);
    for i in 0..n {
        let prior = design.weight(i);
        let y = design.y[i];
        match fit.estimator {
            Estimator::Ols => {
                w.push(prior);
                u.push(prior * (y - eta[i]));
            }
            Estimator::Ppml => {
                let mu = eta[i].exp();
                w.push(prior * mu);
                u.push(prior * (y - mu));
            }
            Estimator::Nbpml => {
                let mu = eta[i].exp();
                let alpha = fit.dispersion.unwrap_or(0.0);
                let k = 1.0 + alpha * mu;
                w.push(prior * mu / k);
                u.push(prior * (y - mu) / k);
            }
        }
    }

    let qr = PivotedQr::new(&scale_rows(&design.x, &w), RANK_TOL);
    if !qr.is_full_rank() {
        return Err(GravityError::SingularBread);
    }
    let bread = qr.inverse_gram();

    let (labels, idx) = design.cluster_index();
    let g = labels.len();
    if g < 2 {
        return Err(GravityError::InsufficientData(
            "cluster-robust covariance needs at least two clusters".into(),
        ));
    }
    let mut scores = DMatrix::<f64>::zeros(g, p);
    for (j, col) in design.x.as_slice().chunks(n).enumerate() {
        for i in 0..n {
            scores[(idx[i], j)] += col[i] * u[i];
        }
    }
    let meat = scores.transpose() * &scores;
    let factor = g as f64 / (g as f64 - 1.0);
    let mut matrix = (&bread * meat * &bread) * factor;
    symmetrize(&mut matrix);
    Ok(ClusterCovariance {
        matrix,
        small_sample_factor: factor,
        n_clusters: g,
    })
}

// Test helper: the plain heteroskedasticity-robust sandwich without the factor.
#[cfg(test)]
pub(crate) fn hc0_sandwich(design: &DesignMatrix, fit: &FitResult) -> DMatrix<f64> {
    use nalgebra::DVector;
    let n = design.nrows();
    let mu: Vec<f64> = design
        .linear_predictor(&fit.coefficients)
        .into_iter()
        .map(f64::exp)
        .collect();
    let x = &design.x;
    let w = DVector::from_vec(mu.clone());
    let xtwx = x.transpose() * DMatrix::from_diagonal(&w) * x;
    let bread = xtwx.try_inverse().unwrap();
    let e2 = DVector::from_iterator(n, (0..n).map(|i| (design.y[i] - mu[i]).powi(2)));
    let meat = x.transpose() * DMatrix::from_diagonal(&e2) * x;
    &bread * meat * &bread
}
