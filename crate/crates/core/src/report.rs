//! Output files: coefficient tables, fit summaries, impact tables, run manifests.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::datamodel::Sector;
use crate::design::ModelSpec;
use crate::error::{GravityError, Result};
use crate::glm::{FitResult, FitStatus};
use crate::scenario::{DestinationGroup, ImpactReport, SubstitutionEntry, ValueTotals};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const IMPACT_FILE: &str = "impact.csv";
pub const SUBSTITUTION_FILE: &str = "substitution.csv";
pub const SUMMARY_FILE: &str = "summary.md";

pub fn coefficients_file(sector: Sector) -> String {
    format!("coefficients_{}.csv", sector.slug())
}

pub fn fit_file(sector: Sector) -> String {
    format!("fit_{}.json", sector.slug())
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

fn csv_err(e: csv::Error) -> GravityError {
    GravityError::Internal(format!("csv output: {e}"))
}

fn opt(v: Option<f64>) -> String {
    v.filter(|x| x.is_finite()).map(|x| x.to_string()).unwrap_or_default()
}

/// `name,estimate,robust_se,cv,significant_at_1pct`
pub fn write_coefficients<W: Write>(w: W, fit: &FitResult) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["name", "estimate", "robust_se", "cv", "significant_at_1pct"])
        .map_err(csv_err)?;
    for row in fit.table() {
        out.write_record([
            row.name,
            row.estimate.to_string(),
            opt(row.robust_se),
            opt(row.cv),
            row.significant_at_1pct.map(|b| b.to_string()).unwrap_or_default(),
        ])
        .map_err(csv_err)?;
    }
    out.flush().map_err(|e| GravityError::Internal(e.to_string()))
}

#[derive(Debug, Serialize)]
struct CoefficientEntry<'a> {
    name: &'a str,
    estimate: f64,
    robust_se: Option<f64>,
    model_se: Option<f64>,
    cv: Option<f64>,
    significant_at_1pct: Option<bool>,
}

#[derive(Debug, Serialize)]
struct FitSummary<'a> {
    manifest: &'static str,
    sector: &'a str,
    estimator: String,
    status: FitStatus,
    converged: bool,
    iterations: usize,
    hessian_positive_definite: bool,
    n_obs: usize,
    n_dropped_zeros: usize,
    n_clusters: usize,
    small_sample_factor: Option<f64>,
    loglik: Option<f64>,
    deviance: Option<f64>,
    null_deviance: Option<f64>,
    pseudo_r2: Option<f64>,
    r2: Option<f64>,
    r2_adjusted: Option<f64>,
    dispersion: Option<f64>,
    has_constant: bool,
    fixed_effect_reference: Option<&'a str>,
    coefficients: Vec<CoefficientEntry<'a>>,
    covariance_robust: Option<Vec<Vec<f64>>>,
    spec: &'a ModelSpec,
}

/// Pretty JSON summary of one fit. Non-finite statistics are written as null.
pub fn fit_json(fit: &FitResult, sector: Sector, status: FitStatus) -> Result<String> {
    let table = fit.table();
    let model_se = fit.model_se();
    let coefficients = table
        .iter()
        .enumerate()
        .map(|(i, r)| CoefficientEntry {
            name: &fit.names[i],
            estimate: r.estimate,
            robust_se: r.robust_se.and_then(finite),
            model_se: model_se.as_ref().and_then(|s| finite(s[i])),
            cv: r.cv.and_then(finite),
            significant_at_1pct: r.significant_at_1pct,
        })
        .collect();
    let summary = FitSummary {
        manifest: MANIFEST_FILE,
        sector: sector.slug(),
        estimator: fit.estimator.to_string(),
        status,
        converged: fit.converged,
        iterations: fit.iterations,
        hessian_positive_definite: fit.hessian_positive_definite,
        n_obs: fit.n_obs,
        n_dropped_zeros: fit.n_dropped_zeros,
        n_clusters: fit.n_clusters,
        small_sample_factor: finite(fit.small_sample_factor),
        loglik: finite(fit.loglik),
        deviance: finite(fit.deviance),
        null_deviance: finite(fit.null_deviance),
        pseudo_r2: fit.pseudo_r2.and_then(finite),
        r2: fit.r2.and_then(finite),
        r2_adjusted: fit.r2_adjusted.and_then(finite),
        dispersion: fit.dispersion.and_then(finite),
        has_constant: fit.has_constant,
        fixed_effect_reference: fit.fixed_effect_reference.as_deref(),
        coefficients,
        covariance_robust: fit.covariance_robust.as_ref().map(|m| {
            (0..m.nrows())
                .map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect())
                .collect()
        }),
        spec: &fit.spec_echo,
    };
    let mut s = serde_json::to_string_pretty(&summary).map_err(|e| GravityError::Internal(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// `sector,metric,value`, followed by the GNI* block under sector `all_sectors`.
pub fn write_impact<W: Write>(w: W, report: &ImpactReport) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["sector", "metric", "value"]).map_err(csv_err)?;
    for r in &report.rows {
        out.write_record([r.sector.slug(), &r.metric, &r.value.to_string()])
            .map_err(csv_err)?;
    }
    if let Some(g) = &report.gni {
        let all = Sector::AllSectors.slug();
        for (metric, v) in [
            ("gni_star_bn", g.gni_star),
            ("exports_soft_bn", g.soft_total),
            ("exports_scenario_bn", g.scenario_total),
            ("gni_star_adjusted_bn", g.adjusted),
            ("gni_star_change_pct", g.percent_change),
        ] {
            out.write_record([all, metric, &v.to_string()]).map_err(csv_err)?;
        }
    }
    out.flush().map_err(|e| GravityError::Internal(e.to_string()))
}

/// `year,cn8,old_dest,disposition,new_dest,old_value,new_value`
pub fn write_substitution<W: Write>(w: W, log: &[SubstitutionEntry]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["year", "cn8", "old_dest", "disposition", "new_dest", "old_value", "new_value"])
        .map_err(csv_err)?;
    for e in log {
        out.write_record([
            e.year.to_string(),
            e.cn8.to_string(),
            e.old_dest.clone(),
            e.disposition.label().to_owned(),
            e.new_dest.clone(),
            e.old_value.to_string(),
            e.new_value.to_string(),
        ])
        .map_err(csv_err)?;
    }
    out.flush().map_err(|e| GravityError::Internal(e.to_string()))
}

fn cell(v: Option<f64>, decimals: usize) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x:.decimals$}"),
        _ => "n/a".into(),
    }
}

/// Markdown summary: indicator impacts, elasticity impacts, value impacts and
/// the GNI* block, one row per sector.
pub fn impact_markdown(report: &ImpactReport, soft: &ValueTotals, scenario: &ValueTotals) -> String {
    let mut sectors: Vec<Sector> = Vec::new();
    for r in &report.rows {
        if !sectors.contains(&r.sector) {
            sectors.push(r.sector);
        }
    }
    let mut md = String::new();
    let _ = writeln!(md, "# Scenario `{}` against soft", report.kind);
    let _ = writeln!(md);
    let _ = writeln!(md, "Tariff incidence: `{}`. Worst case uses the {}.", report.incidence.label(), report.worst_case_se_source);
    let _ = writeln!(md, "Run details: `{MANIFEST_FILE}`.");

    let _ = writeln!(md, "\n## Indicator relative impacts (%)\n");
    let _ = writeln!(md, "| Sector | GB | NI | GB worst case (2 SE) | NI worst case (2 SE) |");
    let _ = writeln!(md, "|---|---:|---:|---:|---:|");
    for s in &sectors {
        let v = |m: &str| cell(report.value(*s, m), 1);
        let _ = writeln!(
            md,
            "| {} | {} | {} | {} | {} |",
            s.display_name(),
            v("gb_relative_impact_pct"),
            v("ni_relative_impact_pct"),
            v("gb_worst_case_2se_pct"),
            v("ni_worst_case_2se_pct"),
        );
    }

    let _ = writeln!(md, "\n## Elasticity relative impacts (%)\n");
    let _ = writeln!(md, "| Sector | GDP | Distance |");
    let _ = writeln!(md, "|---|---:|---:|");
    for s in &sectors {
        let v = |m: &str| cell(report.value(*s, m), 1);
        let _ = writeln!(
            md,
            "| {} | {} | {} |",
            s.display_name(),
            v("gdp_relative_impact_pct"),
            v("distance_relative_impact_pct"),
        );
    }

    let _ = writeln!(md, "\n## Export values (EUR m)\n");
    let _ = writeln!(md, "| Sector | Group | Soft | Scenario | Change (%) |");
    let _ = writeln!(md, "|---|---|---:|---:|---:|");
    for ((sector, group), base) in soft {
        if *group == DestinationGroup::World && *sector != Sector::AllSectors {
            continue;
        }
        let after = scenario.get(&(*sector, *group)).copied().unwrap_or_default();
        let pct = (base.cents() != 0)
            .then(|| 100.0 * (after.cents() - base.cents()) as f64 / base.cents() as f64);
        let _ = writeln!(
            md,
            "| {} | {} | {:.1} | {:.1} | {} |",
            sector.display_name(),
            group.label(),
            base.euros() / 1e6,
            after.euros() / 1e6,
            cell(pct, 2),
        );
    }

    if let Some(g) = &report.gni {
        let _ = writeln!(md, "\n## GNI* adjustment (EUR bn)\n");
        let _ = writeln!(md, "| GNI* | Exports (soft) | Exports (scenario) | Adjusted GNI* | Change (%) |");
        let _ = writeln!(md, "|---:|---:|---:|---:|---:|");
        let _ = writeln!(
            md,
            "| {:.1} | {:.1} | {:.1} | {:.1} | {:.1} |",
            g.gni_star, g.soft_total, g.scenario_total, g.adjusted, g.percent_change
        );
    }
    md
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| GravityError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Provenance record written next to every set of outputs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: Vec<String>,
    pub config_paths: Vec<String>,
    /// Input path to SHA-256 of its contents.
    pub inputs: BTreeMap<String, String>,
    /// Output file name to SHA-256 of its contents.
    pub outputs: BTreeMap<String, String>,
    pub spec_echo: Option<ModelSpec>,
    pub seed: Option<u64>,
    pub rng: Option<String>,
    pub settings: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub started_unix_s: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub finished_unix_s: Option<u64>,
}

impl RunManifest {
    pub fn new(command: Vec<String>) -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command,
            config_paths: Vec::new(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            spec_echo: None,
            seed: None,
            rng: None,
            settings: BTreeMap::new(),
            started_unix_s: None,
            finished_unix_s: None,
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        let digest = sha256_file(path)?;
        self.inputs.insert(path.display().to_string(), digest);
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| GravityError::Internal(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }
}

pub fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Writes files into one directory and records their digests for the manifest.
#[derive(Debug)]
pub struct OutputDir<'a> {
    pub dir: &'a Path,
    pub written: BTreeMap<String, String>,
}

impl<'a> OutputDir<'a> {
    pub fn create(dir: &'a Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| GravityError::io(dir, e))?;
        Ok(OutputDir {
            dir,
            written: BTreeMap::new(),
        })
    }

    /// `name` may contain a subdirectory.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| GravityError::io(parent, e))?;
        }
        std::fs::write(&path, bytes).map_err(|e| GravityError::io(&path, e))?;
        self.written.insert(name.to_owned(), sha256_hex(bytes));
        Ok(())
    }

    pub fn write_with<F>(&mut self, name: &str, f: F) -> Result<()>
    where
        F: FnOnce(&mut Vec<u8>) -> Result<()>,
    {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(name, &buf)
    }

    /// Coefficient CSV and fit JSON for one sector, under `prefix` if given.
    pub fn write_fit(&mut self, prefix: Option<&str>, sector: Sector, fit: &FitResult, status: FitStatus) -> Result<()> {
        let join = |f: String| match prefix {
            Some(p) => format!("{p}/{f}"),
            None => f,
        };
        self.write_with(&join(coefficients_file(sector)), |b| write_coefficients(b, fit))?;
        let json = fit_json(fit, sector, status)?;
        self.write(&join(fit_file(sector)), json.as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glm::{fit_ppml, EstimatorOptions};
    use crate::design::DesignMatrix;
    use nalgebra::DMatrix;

    fn toy_fit() -> FitResult {
        let x = DMatrix::from_fn(8, 2, |i, j| if j == 0 { 1.0 } else { i as f64 * 0.25 });
        let y = vec![1.0, 2.0, 1.0, 3.0, 4.0, 3.0, 6.0, 8.0];
        let d = DesignMatrix::from_parts(
            y,
            x,
            vec!["intercept".into(), "x".into()],
            ["a", "a", "b", "b", "c", "c", "d", "d"].iter().map(|s| s.to_string()).collect(),
        )
        .unwrap();
        fit_ppml(&d, &EstimatorOptions::default()).unwrap()
    }

    #[test]
    fn coefficient_csv_layout() {
        let mut buf = Vec::new();
        write_coefficients(&mut buf, &toy_fit()).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "name,estimate,robust_se,cv,significant_at_1pct");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("intercept,"));
    }

    #[test]
    fn fit_json_round_trips_as_json() {
        let s = fit_json(&toy_fit(), Sector::AllSectors, FitStatus::Ok).unwrap();
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["estimator"], "ppml");
        assert_eq!(v["manifest"], MANIFEST_FILE);
        assert_eq!(v["coefficients"].as_array().unwrap().len(), 2);
    }

    #[test]
    fn digest_is_stable() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
