//! Gravity-equation estimators: OLS on logs, Poisson PML and NB2 PML.

mod covariance;
mod diagnostics;
mod irls;
mod ols;

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use covariance::{cluster_robust_cov, ClusterCovariance};
pub use diagnostics::{
    cv_of, mean_variance_diagnostic, percent_effect, pseudo_r2, MeanVarianceDiagnostic,
    Z_CRIT_1PCT,
};
pub use irls::{fit_nbpml, fit_ppml, Family};
pub use ols::fit_ols;

use crate::design::{DesignMatrix, ModelSpec, ResponseScale};
use crate::error::{GravityError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Ols,
    Ppml,
    Nbpml,
}

impl Estimator {
    pub fn response_scale(self) -> ResponseScale {
        match self {
            Estimator::Ols => ResponseScale::Log,
            Estimator::Ppml | Estimator::Nbpml => ResponseScale::Natural,
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Estimator::Ols => "ols",
            Estimator::Ppml => "ppml",
            Estimator::Nbpml => "nbpml",
        })
    }
}

impl std::str::FromStr for Estimator {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "ols" => Ok(Estimator::Ols),
            "ppml" => Ok(Estimator::Ppml),
            "nbpml" => Ok(Estimator::Nbpml),
            other => Err(format!("unknown estimator `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorOptions {
    pub max_iterations: usize,
    pub deviance_rel_tol: f64,
    pub coef_rel_tol: f64,
    /// Added to the diagonal of X'WX only after a singular weighted solve.
    pub ridge_jitter: f64,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        EstimatorOptions {
            max_iterations: 100,
            deviance_rel_tol: 1e-9,
            coef_rel_tol: 1e-8,
            ridge_jitter: 0.0,
        }
    }
}

impl EstimatorOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.deviance_rel_tol > 0.0 && self.coef_rel_tol > 0.0) || self.max_iterations == 0 {
            return Err(GravityError::InvalidSpec(
                "tolerances must be positive and max_iterations at least 1".into(),
            ));
        }
        if !(self.ridge_jitter >= 0.0) {
            return Err(GravityError::InvalidSpec("ridge_jitter must be non-negative".into()));
        }
        Ok(())
    }
}

/// Output of one estimation.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub estimator: Estimator,
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    /// Model-based covariance; withheld when the Hessian check fails.
    pub covariance_model: Option<DMatrix<f64>>,
    /// Cluster-robust sandwich covariance.
    pub covariance_robust: Option<DMatrix<f64>>,
    pub small_sample_factor: f64,
    pub n_clusters: usize,
    pub loglik: f64,
    pub deviance: f64,
    pub null_deviance: f64,
    pub pseudo_r2: Option<f64>,
    pub r2: Option<f64>,
    pub r2_adjusted: Option<f64>,
    /// NB2 dispersion alpha.
    pub dispersion: Option<f64>,
    pub n_obs: usize,
    pub n_dropped_zeros: usize,
    pub converged: bool,
    pub iterations: usize,
    pub hessian_positive_definite: bool,
    pub has_constant: bool,
    /// Fitted means on the response scale.
    pub fitted: Vec<f64>,
    pub fixed_effect_reference: Option<String>,
    pub spec_echo: ModelSpec,
}

impl FitResult {
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.index_of(name).map(|i| self.coefficients[i])
    }

    pub fn robust_se(&self) -> Option<Vec<f64>> {
        self.covariance_robust
            .as_ref()
            .map(|v| (0..v.nrows()).map(|i| v[(i, i)].max(0.0).sqrt()).collect())
    }

    pub fn robust_se_of(&self, name: &str) -> Option<f64> {
        let i = self.index_of(name)?;
        self.covariance_robust.as_ref().map(|v| v[(i, i)].max(0.0).sqrt())
    }

    pub fn model_se(&self) -> Option<Vec<f64>> {
        self.covariance_model
            .as_ref()
            .map(|v| (0..v.nrows()).map(|i| v[(i, i)].max(0.0).sqrt()).collect())
    }

    /// Coefficient of variation per coefficient from robust SEs; `None` for zero estimates.
    pub fn cv_per_coef(&self) -> Vec<Option<f64>> {
        match self.robust_se() {
            Some(se) => self
                .coefficients
                .iter()
                .zip(se)
                .map(|(&b, s)| cv_of(b, s).ok())
                .collect(),
            None => vec![None; self.coefficients.len()],
        }
    }

    /// Per-coefficient table rows, in column order.
    pub fn table(&self) -> Vec<CoefficientRow> {
        let se = self.robust_se();
        let cv = self.cv_per_coef();
        self.names
            .iter()
            .enumerate()
            .map(|(i, name)| {
                let robust_se = se.as_ref().map(|s| s[i]);
                let significant = robust_se
                    .filter(|s| *s > 0.0)
                    .map(|s| (self.coefficients[i] / s).abs() > Z_CRIT_1PCT);
                CoefficientRow {
                    name: name.clone(),
                    estimate: self.coefficients[i],
                    robust_se,
                    cv: cv[i],
                    significant_at_1pct: significant,
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRow {
    pub name: String,
    pub estimate: f64,
    pub robust_se: Option<f64>,
    pub cv: Option<f64>,
    /// Two-sided normal test at the 1% level.
    pub significant_at_1pct: Option<bool>,
}

/// Dispatches to the chosen estimator.
pub fn fit(estimator: Estimator, design: &DesignMatrix, options: &EstimatorOptions) -> Result<FitResult> {
    match estimator {
        Estimator::Ols => fit_ols(design),
        Estimator::Ppml => fit_ppml(design, options),
        Estimator::Nbpml => fit_nbpml(design, options),
    }
}

/// How a fit ended when it still produced coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    Ok,
    NotConverged,
    HessianNotPositiveDefinite,
}

impl FitStatus {
    /// Process exit code for this outcome.
    pub fn exit_code(self) -> i32 {
        match self {
            FitStatus::Ok => 0,
            FitStatus::NotConverged => 3,
            FitStatus::HessianNotPositiveDefinite => 4,
        }
    }
}

/// Like [`fit`], but turns the two errors that carry a fit into a status.
pub fn fit_with_status(
    estimator: Estimator,
    design: &DesignMatrix,
    options: &EstimatorOptions,
) -> Result<(FitResult, FitStatus)> {
    match fit(estimator, design, options) {
        Ok(f) => Ok((f, FitStatus::Ok)),
        Err(GravityError::NotConverged { fit }) => Ok((*fit, FitStatus::NotConverged)),
        Err(GravityError::HessianNotPositiveDefinite { fit }) => {
            Ok((*fit, FitStatus::HessianNotPositiveDefinite))
        }
        Err(e) => Err(e),
    }
}
