use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::FitResult;
use crate::datamodel::GravityObservation;
use crate::error::{GravityError, Result};

/// Two-sided 1% critical value of the standard normal.
pub const Z_CRIT_1PCT: f64 = 2.575_829_303_548_901;

/// `1 - D(fitted) / D(null)`; `None` without a constant in the model.
pub fn pseudo_r2(fit: &FitResult) -> Option<f64> {
    if !fit.has_constant || !fit.null_deviance.is_finite() {
        return None;
    }
    if fit.null_deviance <= 0.0 {
        return Some(if fit.deviance <= 0.0 { 0.0 } else { f64::NEG_INFINITY });
    }
    Some(1.0 - fit.deviance / fit.null_deviance)
}

/// Level effect of an indicator coefficient, in percent.
pub fn percent_effect(beta: f64) -> f64 {
    beta.exp_m1() * 100.0
}

/// Coefficient of variation `se / |coef|`.
pub fn cv_of(coef: f64, robust_se: f64) -> Result<f64> {
    if coef == 0.0 {
        return Err(GravityError::ZeroCoefficient);
    }
    Ok(robust_se / coef.abs())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanVarianceDiagnostic {
    pub years: Vec<i32>,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
}

/// Per-year mean and sample variance of log trade value (positive cells only),
/// and the least-squares slope of variance on mean across years.
pub fn mean_variance_diagnostic(dataset: &[GravityObservation]) -> Result<MeanVarianceDiagnostic> {
    let mut by_year: BTreeMap<i32, Vec<f64>> = BTreeMap::new();
    for obs in dataset {
        let entry = by_year.entry(obs.year).or_default();
        if obs.value.cents() > 0 {
            entry.push(obs.value.euros().ln());
        }
    }
    if by_year.len() < 2 {
        return Err(GravityError::InsufficientData("need at least two years".into()));
    }
    let mut years = Vec::new();
    let mut means = Vec::new();
    let mut variances = Vec::new();
    for (year, logs) in by_year {
        if logs.len() < 2 {
            return Err(GravityError::InsufficientData(format!(
                "year {year} has fewer than two positive values"
            )));
        }
        let m = logs.iter().sum::<f64>() / logs.len() as f64;
        let v = logs.iter().map(|l| (l - m).powi(2)).sum::<f64>() / (logs.len() - 1) as f64;
        years.push(year);
        means.push(m);
        variances.push(v);
    }
    let k = means.len() as f64;
    let mbar = means.iter().sum::<f64>() / k;
    let vbar = variances.iter().sum::<f64>() / k;
    let sxx: f64 = means.iter().map(|m| (m - mbar).powi(2)).sum();
    if sxx <= f64::EPSILON * mbar.abs().max(1.0) * k {
        return Err(GravityError::DegenerateSpread);
    }
    let sxy: f64 = means.iter().zip(&variances).map(|(m, v)| (m - mbar) * (v - vbar)).sum();
    let slope = sxy / sxx;
    Ok(MeanVarianceDiagnostic {
        years,
        means,
        variances,
        slope,
        intercept: vbar - slope * mbar,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::{CellKey, CountryYearAttributes, Flags, Money};
    use statrs::distribution::{ContinuousCDF, Normal};

    #[test]
    fn critical_value_matches_normal_quantile() {
        let z = Normal::standard().inverse_cdf(0.995);
        assert!((z - Z_CRIT_1PCT).abs() < 1e-9);
    }

    fn obs(year: i32, euros: f64) -> GravityObservation {
        GravityObservation {
            year,
            destination: "FR".into(),
            key: CellKey::Total,
            value: Money((euros * 100.0).round() as i64),
            attrs: CountryYearAttributes {
                iso: "FR".into(),
                year,
                gdp: 1.0,
                population: 1.0,
                area_km2: 1.0,
                distance_km: 1.0,
                religion_share: 1.0,
                flags: Flags::default(),
            },
            remoteness: None,
        }
    }

    #[test]
    fn percent_effects() {
        assert!((percent_effect(0.64) - 90.0).abs() < 0.5);
        assert!((percent_effect(-1.58) - -79.0).abs() < 0.5);
        assert_eq!(percent_effect(0.0), 0.0);
    }

    #[test]
    fn coefficient_of_variation() {
        assert!((cv_of(2.0, 0.2).unwrap() - 0.1).abs() < 1e-15);
        // inverse check against a published distance estimate
        let se = 0.10 * 0.62;
        assert!((cv_of(-0.62, se).unwrap() - 0.10).abs() < 1e-12);
        assert!((se - 0.062).abs() < 1e-12);
        assert_eq!(cv_of(1.0, 0.0).unwrap(), 0.0);
        assert!(matches!(cv_of(0.0, 1.0), Err(GravityError::ZeroCoefficient)));
    }

    #[test]
    fn constant_years_have_zero_slope() {
        let data = vec![obs(2000, 10.0), obs(2000, 10.0), obs(2001, 50.0), obs(2001, 50.0)];
        let d = mean_variance_diagnostic(&data).unwrap();
        assert_eq!(d.variances, vec![0.0, 0.0]);
        assert_eq!(d.slope, 0.0);
    }

    #[test]
    fn identical_years_are_degenerate() {
        let data = vec![obs(2000, 10.0), obs(2000, 20.0), obs(2001, 10.0), obs(2001, 20.0)];
        assert!(matches!(mean_variance_diagnostic(&data), Err(GravityError::DegenerateSpread)));
    }

    #[test]
    fn insufficient_data() {
        assert!(mean_variance_diagnostic(&[obs(2000, 1.0), obs(2000, 2.0)]).is_err());
        assert!(mean_variance_diagnostic(&[obs(2000, 1.0), obs(2000, 2.0), obs(2001, 3.0)]).is_err());
    }
}
