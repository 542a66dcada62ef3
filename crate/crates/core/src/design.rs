//! Declarative model specs and their realisation as numeric regression problems.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::datamodel::{Attribute, CellKey, CountryYearAttributes, Flag, GravityObservation};
use crate::error::{GravityError, Result};
use crate::linalg::{PivotedQr, RANK_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseScale {
    /// Trade value in levels (PPML, NB-PML).
    #[default]
    Natural,
    /// Log trade value; zero cells are dropped (OLS).
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    #[default]
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "TermRepr", into = "TermRepr")]
pub struct ContinuousTerm {
    pub attribute: Attribute,
    pub transform: Transform,
}

// Terms may be written as a bare attribute name or as a table.
#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum TermRepr {
    Bare(Attribute),
    Full {
        attribute: Attribute,
        #[serde(default)]
        transform: Transform,
    },
}

impl From<TermRepr> for ContinuousTerm {
    fn from(r: TermRepr) -> Self {
        match r {
            TermRepr::Bare(attribute) => ContinuousTerm {
                attribute,
                transform: Transform::Log,
            },
            TermRepr::Full { attribute, transform } => ContinuousTerm { attribute, transform },
        }
    }
}

impl From<ContinuousTerm> for TermRepr {
    fn from(t: ContinuousTerm) -> Self {
        TermRepr::Full {
            attribute: t.attribute,
            transform: t.transform,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterBy {
    #[default]
    Destination,
}

fn default_true() -> bool {
    true
}

fn default_time_origin() -> i32 {
    1992
}

/// Declarative gravity model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    #[serde(default)]
    pub response: ResponseScale,
    #[serde(default)]
    pub continuous_terms: Vec<ContinuousTerm>,
    /// `log(year - time_origin)`.
    #[serde(default)]
    pub time_term: bool,
    #[serde(default = "default_time_origin")]
    pub time_origin: i32,
    #[serde(default)]
    pub indicator_terms: Vec<Flag>,
    #[serde(default)]
    pub remoteness_terms: bool,
    /// One `log r_t` column per year (default) instead of a single `log r_t` column.
    #[serde(default = "default_true")]
    pub remoteness_by_year: bool,
    #[serde(default)]
    pub importer_fixed_effects: bool,
    #[serde(default)]
    pub cluster_by: ClusterBy,
    #[serde(default = "default_true")]
    pub intercept: bool,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            response: ResponseScale::Natural,
            continuous_terms: Vec::new(),
            time_term: false,
            time_origin: default_time_origin(),
            indicator_terms: Vec::new(),
            remoteness_terms: false,
            remoteness_by_year: true,
            importer_fixed_effects: false,
            cluster_by: ClusterBy::Destination,
            intercept: true,
        }
    }
}

impl ModelSpec {
    /// The classical model: five logged covariates, the time trend and all seven indicators.
    pub fn basic() -> Self {
        ModelSpec {
            continuous_terms: [
                Attribute::Gdp,
                Attribute::Distance,
                Attribute::Population,
                Attribute::Area,
                Attribute::Religion,
            ]
            .into_iter()
            .map(|attribute| ContinuousTerm {
                attribute,
                transform: Transform::Log,
            })
            .collect(),
            time_term: true,
            indicator_terms: Flag::ALL.to_vec(),
            ..Default::default()
        }
    }

    /// The basic model with the time trend replaced by year-interacted remoteness.
    pub fn remoteness() -> Self {
        ModelSpec {
            time_term: false,
            remoteness_terms: true,
            ..Self::basic()
        }
    }

    pub fn with_response(mut self, scale: ResponseScale) -> Self {
        self.response = scale;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.time_term && self.remoteness_terms {
            return Err(GravityError::InvalidSpec(
                "time_term and remoteness_terms are mutually exclusive".into(),
            ));
        }
        let attrs: BTreeSet<_> = self.continuous_terms.iter().map(|t| t.attribute).collect();
        if attrs.len() != self.continuous_terms.len() {
            return Err(GravityError::InvalidSpec("duplicate continuous term".into()));
        }
        let flags: BTreeSet<_> = self.indicator_terms.iter().collect();
        if flags.len() != self.indicator_terms.len() {
            return Err(GravityError::InvalidSpec("duplicate indicator term".into()));
        }
        Ok(())
    }

    /// Parses JSON or TOML, chosen by file extension (`.json` / `.toml`).
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| GravityError::io(path, e))?;
        let spec = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::from_json(&text)?,
            Some("toml") => Self::from_toml(&text)?,
            _ => {
                return Err(GravityError::InvalidSpec(format!(
                    "{}: expected a .json or .toml file",
                    path.display()
                )))
            }
        };
        Ok(spec)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ModelSpec =
            serde_json::from_str(text).map_err(|e| GravityError::InvalidSpec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: ModelSpec =
            toml::from_str(text).map_err(|e| GravityError::InvalidSpec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }
}

pub fn continuous_column(attr: Attribute) -> String {
    format!("log_{}", attr.name())
}

pub const INTERCEPT: &str = "intercept";
pub const TIME_COLUMN: &str = "log_time";

pub fn remoteness_column(year: Option<i32>) -> String {
    match year {
        Some(y) => format!("log_r_{y}"),
        None => "log_r".into(),
    }
}

pub fn fixed_effect_column(iso: &str) -> String {
    format!("fe_{iso}")
}

/// Value of an attribute-derived column (intercept, logged covariates, time, indicators).
///
/// Returns `None` for names that are not attribute-derived (remoteness, fixed effects).
pub fn attribute_column_value(
    column: &str,
    attrs: &CountryYearAttributes,
    time_origin: i32,
) -> Option<f64> {
    if column == INTERCEPT {
        return Some(1.0);
    }
    if column == TIME_COLUMN {
        return Some(((attrs.year - time_origin) as f64).ln());
    }
    if let Some(name) = column.strip_prefix("log_") {
        let attr = [
            Attribute::Gdp,
            Attribute::Distance,
            Attribute::Population,
            Attribute::Area,
            Attribute::Religion,
        ]
        .into_iter()
        .find(|a| a.name() == name)?;
        return Some(attrs.attribute(attr).ln());
    }
    Flag::ALL
        .into_iter()
        .find(|f| f.name() == column)
        .map(|f| if attrs.flags.get(f) { 1.0 } else { 0.0 })
}

/// Identifies the source cell of a design row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowId {
    pub year: i32,
    pub destination: String,
    pub key: CellKey,
}

/// A realised regression problem.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub y: Vec<f64>,
    pub x: DMatrix<f64>,
    pub names: Vec<String>,
    /// Cluster label per row.
    pub clusters: Vec<String>,
    pub rows: Vec<RowId>,
    /// Prior observation weights; `None` means uniform.
    pub weights: Option<Vec<f64>>,
    pub spec_echo: ModelSpec,
    pub n_dropped_zeros: usize,
    pub fixed_effect_reference: Option<String>,
    /// The constant lies in the column span (explicit intercept or absorbed).
    pub has_constant: bool,
}

impl DesignMatrix {
    /// Builds a design directly from arrays; rank is checked like `build_design`.
    pub fn from_parts(
        y: Vec<f64>,
        x: DMatrix<f64>,
        names: Vec<String>,
        clusters: Vec<String>,
    ) -> Result<Self> {
        if y.len() != x.nrows() || clusters.len() != x.nrows() || names.len() != x.ncols() {
            return Err(GravityError::Internal("design dimensions disagree".into()));
        }
        let has_constant = names.iter().any(|n| n == INTERCEPT);
        let rows = (0..y.len())
            .map(|i| RowId {
                year: 0,
                destination: clusters[i].clone(),
                key: CellKey::Total,
            })
            .collect();
        let d = DesignMatrix {
            y,
            x,
            names,
            clusters,
            rows,
            weights: None,
            spec_echo: ModelSpec::default(),
            n_dropped_zeros: 0,
            fixed_effect_reference: None,
            has_constant,
        };
        d.check_rank()?;
        Ok(d)
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Self {
        self.weights = Some(weights);
        self
    }

    pub fn nrows(&self) -> usize {
        self.x.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.x.ncols()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[i])
    }

    /// `X b` for a coefficient vector in column order.
    pub fn linear_predictor(&self, coef: &[f64]) -> Vec<f64> {
        let n = self.nrows();
        let mut eta = vec![0.0; n];
        for (j, col) in self.x.as_slice().chunks(n).enumerate() {
            let b = coef[j];
            if b == 0.0 {
                continue;
            }
            for (e, v) in eta.iter_mut().zip(col) {
                *e += v * b;
            }
        }
        eta
    }

    /// `exp(x_i b)` evaluated from named coefficients.
    pub fn predict_named(&self, coef: &BTreeMap<String, f64>) -> Result<Vec<f64>> {
        let ordered = self
            .names
            .iter()
            .map(|n| {
                coef.get(n)
                    .copied()
                    .ok_or_else(|| GravityError::InvalidSpec(format!("no coefficient for `{n}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.linear_predictor(&ordered).into_iter().map(f64::exp).collect())
    }

    /// Distinct cluster labels (sorted) and each row's index into them.
    pub fn cluster_index(&self) -> (Vec<String>, Vec<usize>) {
        let labels: Vec<String> = self
            .clusters
            .iter()
            .cloned()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let lookup: BTreeMap<&str, usize> =
            labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
        let idx = self.clusters.iter().map(|c| lookup[c.as_str()]).collect();
        (labels, idx)
    }

    fn check_rank(&self) -> Result<()> {
        if self.nrows() < self.ncols() || self.ncols() == 0 {
            if self.ncols() == 0 {
                return Err(GravityError::InvalidSpec("design has no columns".into()));
            }
            return Err(GravityError::RankDeficient {
                columns: self.names.clone(),
            });
        }
        let qr = PivotedQr::new(&self.x, RANK_TOL);
        if !qr.is_full_rank() {
            return Err(GravityError::RankDeficient {
                columns: qr
                    .dependent_columns()
                    .into_iter()
                    .map(|j| self.names[j].clone())
                    .collect(),
            });
        }
        Ok(())
    }
}

/// Realises `spec` on `dataset`.
///
/// Rows keep dataset order (minus zero-value rows on the log scale). Fixed
/// effects drop the lexicographically first destination. With per-year
/// remoteness columns the constant is already spanned, so no separate
/// intercept column is emitted.
pub fn build_design(dataset: &[GravityObservation], spec: &ModelSpec) -> Result<DesignMatrix> {
    spec.validate()?;

    let mut kept: Vec<&GravityObservation> = Vec::with_capacity(dataset.len());
    let mut n_dropped_zeros = 0;
    for obs in dataset {
        if spec.response == ResponseScale::Log && obs.value.cents() == 0 {
            n_dropped_zeros += 1;
        } else {
            kept.push(obs);
        }
    }
    if kept.is_empty() {
        return Err(if dataset.is_empty() {
            GravityError::InsufficientData("dataset is empty".into())
        } else {
            GravityError::AllZeroResponse
        });
    }

    let years: Vec<i32> = kept
        .iter()
        .map(|o| o.year)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let countries: Vec<&str> = kept
        .iter()
        .map(|o| o.destination.as_str())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();

    let by_year_remoteness = spec.remoteness_terms && spec.remoteness_by_year;
    let emit_intercept = spec.intercept && !by_year_remoteness;
    let has_constant = spec.intercept || by_year_remoteness;

    let mut names: Vec<String> = Vec::new();
    if emit_intercept {
        names.push(INTERCEPT.into());
    }
    names.extend(spec.continuous_terms.iter().map(|t| continuous_column(t.attribute)));
    if spec.time_term {
        names.push(TIME_COLUMN.into());
    }
    names.extend(spec.indicator_terms.iter().map(|f| f.name().to_owned()));
    if spec.remoteness_terms {
        if by_year_remoteness {
            names.extend(years.iter().map(|&y| remoteness_column(Some(y))));
        } else {
            names.push(remoteness_column(None));
        }
    }
    let fe_reference = spec
        .importer_fixed_effects
        .then(|| countries.first().map(|c| (*c).to_owned()))
        .flatten();
    let fe_countries: Vec<&str> = if spec.importer_fixed_effects {
        countries[1..].to_vec()
    } else {
        Vec::new()
    };
    names.extend(fe_countries.iter().map(|c| fixed_effect_column(c)));

    let n = kept.len();
    let p = names.len();
    let year_pos: BTreeMap<i32, usize> = years.iter().enumerate().map(|(i, &y)| (y, i)).collect();
    let fe_pos: BTreeMap<&str, usize> =
        fe_countries.iter().enumerate().map(|(i, &c)| (c, i)).collect();

    let mut x = DMatrix::<f64>::zeros(n, p);
    let mut y = Vec::with_capacity(n);
    for (i, obs) in kept.iter().enumerate() {
        let mut j = 0;
        let mut put = |x: &mut DMatrix<f64>, v: f64| {
            x[(i, j)] = v;
            j += 1;
        };
        if emit_intercept {
            put(&mut x, 1.0);
        }
        for term in &spec.continuous_terms {
            let raw = obs.attrs.attribute(term.attribute);
            if !(raw > 0.0) {
                return Err(GravityError::NonPositiveUnderLog {
                    attribute: term.attribute.name().into(),
                    row: i,
                });
            }
            put(&mut x, raw.ln());
        }
        if spec.time_term {
            let span = obs.year - spec.time_origin;
            if span <= 0 {
                return Err(GravityError::NonPositiveUnderLog {
                    attribute: "time".into(),
                    row: i,
                });
            }
            put(&mut x, (span as f64).ln());
        }
        for flag in &spec.indicator_terms {
            put(&mut x, if obs.attrs.flags.get(*flag) { 1.0 } else { 0.0 });
        }
        if spec.remoteness_terms {
            let r = obs.remoteness.ok_or(GravityError::MissingRemoteness(obs.year))?;
            if !(r > 0.0) {
                return Err(GravityError::NonPositiveUnderLog {
                    attribute: "remoteness".into(),
                    row: i,
                });
            }
            if by_year_remoteness {
                let base = j;
                x[(i, base + year_pos[&obs.year])] = r.ln();
                j += years.len();
            } else {
                put(&mut x, r.ln());
            }
        }
        if let Some(&k) = fe_pos.get(obs.destination.as_str()) {
            x[(i, j + k)] = 1.0;
        }

        let value = obs.value.euros();
        y.push(match spec.response {
            ResponseScale::Natural => value,
            ResponseScale::Log => value.ln(),
        });
    }

    let design = DesignMatrix {
        y,
        x,
        names,
        clusters: kept.iter().map(|o| o.destination.clone()).collect(),
        rows: kept
            .iter()
            .map(|o| RowId {
                year: o.year,
                destination: o.destination.clone(),
                key: o.key.clone(),
            })
            .collect(),
        weights: None,
        spec_echo: spec.clone(),
        n_dropped_zeros,
        fixed_effect_reference: fe_reference,
        has_constant,
    };
    design.check_rank()?;
    Ok(design)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::{Flags, Money};

    fn obs(year: i32, iso: &str, value: i64, gdp: f64, distance: f64) -> GravityObservation {
        GravityObservation {
            year,
            destination: iso.into(),
            key: CellKey::Total,
            value: Money(value),
            attrs: CountryYearAttributes {
                iso: iso.into(),
                year,
                gdp,
                population: 1.0,
                area_km2: 1.0,
                distance_km: distance,
                religion_share: 0.5,
                flags: Flags::default(),
            },
            remoteness: None,
        }
    }

    fn spec_gdp_distance() -> ModelSpec {
        ModelSpec {
            continuous_terms: vec![
                ContinuousTerm {
                    attribute: Attribute::Gdp,
                    transform: Transform::Log,
                },
                ContinuousTerm {
                    attribute: Attribute::Distance,
                    transform: Transform::Log,
                },
            ],
            ..Default::default()
        }
    }

    #[test]
    fn log_identities_on_a_row() {
        let e = std::f64::consts::E;
        // the rank check needs more rows than columns; the first row is the one under test
        let data = vec![
            obs(2016, "FR", 100, e * e, e),
            obs(2016, "DE", 100, 3.0, 7.0),
            obs(2016, "IT", 100, 11.0, 2.0),
        ];
        let d = build_design(&data, &spec_gdp_distance()).unwrap();
        assert_eq!(d.names, ["intercept", "log_gdp", "log_distance"]);
        let row: Vec<f64> = (0..3).map(|j| d.x[(0, j)]).collect();
        assert!((row[0] - 1.0).abs() < 1e-15);
        assert!((row[1] - 2.0).abs() < 1e-15);
        assert!((row[2] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn time_column_is_log_years_since_1992() {
        let spec = ModelSpec {
            time_term: true,
            ..Default::default()
        };
        let data = vec![obs(1994, "FR", 1, 1.0, 1.0), obs(1995, "FR", 1, 1.0, 1.0)];
        let d = build_design(&data, &spec).unwrap();
        let t = d.column_index(TIME_COLUMN).unwrap();
        assert!((d.x[(0, t)] - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn remoteness_block_per_year() {
        let spec = ModelSpec {
            remoteness_terms: true,
            continuous_terms: spec_gdp_distance().continuous_terms,
            ..Default::default()
        };
        let mut data = vec![
            obs(2015, "FR", 10, 5.0, 3.0),
            obs(2015, "DE", 20, 9.0, 2.0),
            obs(2016, "FR", 30, 6.0, 3.5),
            obs(2016, "DE", 40, 8.0, 2.2),
            obs(2016, "IT", 50, 4.0, 5.0),
        ];
        for o in &mut data {
            o.remoteness = Some(if o.year == 2015 { 100.0 } else { 200.0 });
        }
        let d = build_design(&data, &spec).unwrap();
        let r15 = d.column_index("log_r_2015").unwrap();
        let r16 = d.column_index("log_r_2016").unwrap();
        assert_eq!(d.names.iter().filter(|n| n.starts_with("log_r_")).count(), 2);
        for (i, row) in d.rows.iter().enumerate() {
            let (own, other) = if row.year == 2015 { (r15, r16) } else { (r16, r15) };
            assert!(d.x[(i, own)] > 0.0);
            assert_eq!(d.x[(i, other)], 0.0);
        }
        assert!(d.has_constant && d.column_index(INTERCEPT).is_none());
    }

    #[test]
    fn missing_remoteness() {
        let spec = ModelSpec {
            remoteness_terms: true,
            ..Default::default()
        };
        let err = build_design(&[obs(2016, "FR", 1, 1.0, 1.0)], &spec).unwrap_err();
        assert!(matches!(err, GravityError::MissingRemoteness(2016)));
    }

    #[test]
    fn time_and_remoteness_exclusive() {
        let spec = ModelSpec {
            remoteness_terms: true,
            time_term: true,
            ..Default::default()
        };
        assert!(matches!(spec.validate(), Err(GravityError::InvalidSpec(_))));
    }

    #[test]
    fn fixed_effects_drop_first_iso() {
        let spec = ModelSpec {
            importer_fixed_effects: true,
            ..Default::default()
        };
        let data = vec![
            obs(2016, "FR", 1, 1.0, 1.0),
            obs(2016, "AT", 1, 1.0, 1.0),
            obs(2016, "DE", 1, 1.0, 1.0),
            obs(2017, "DE", 1, 1.0, 1.0),
        ];
        let d = build_design(&data, &spec).unwrap();
        assert_eq!(d.names, ["intercept", "fe_DE", "fe_FR"]);
        assert_eq!(d.fixed_effect_reference.as_deref(), Some("AT"));
    }

    #[test]
    fn rank_deficiency_names_columns() {
        // constant distance is collinear with the intercept
        let data: Vec<_> = (0..4).map(|i| obs(2016, "FR", 10, 1.0 + i as f64, 5.0)).collect();
        let err = build_design(&data, &spec_gdp_distance()).unwrap_err();
        match err {
            GravityError::RankDeficient { columns } => assert_eq!(columns.len(), 1),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn log_response_drops_zeros() {
        let spec = spec_gdp_distance().with_response(ResponseScale::Log);
        let data = vec![
            obs(2016, "FR", 100, 2.0, 3.0),
            obs(2016, "DE", 0, 3.0, 4.0),
            obs(2016, "IT", 300, 5.0, 2.0),
            obs(2016, "ES", 400, 7.0, 9.0),
        ];
        let d = build_design(&data, &spec).unwrap();
        assert_eq!(d.n_dropped_zeros, 1);
        assert_eq!(d.nrows(), 3);
        assert!((d.y[0] - 1f64.ln()).abs() < 1e-15);

        let zeros: Vec<_> = (0..3).map(|i| obs(2016, "FR", 0, 1.0 + i as f64, 1.0)).collect();
        assert!(matches!(build_design(&zeros, &spec), Err(GravityError::AllZeroResponse)));
    }

    #[test]
    fn non_positive_under_log() {
        let spec = spec_gdp_distance();
        let data = vec![obs(2016, "FR", 1, 0.0, 1.0)];
        assert!(matches!(
            build_design(&data, &spec),
            Err(GravityError::NonPositiveUnderLog { ref attribute, row: 0 }) if attribute == "gdp"
        ));
    }

    #[test]
    fn spec_files_parse() {
        let toml_spec = r#"
            continuous_terms = ["gdp", { attribute = "distance", transform = "log" }]
            indicator_terms = ["gb", "ni", "eu"]
            remoteness_terms = true
        "#;
        let s = ModelSpec::from_toml(toml_spec).unwrap();
        assert_eq!(s.continuous_terms.len(), 2);
        assert!(s.intercept && s.remoteness_by_year);
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(ModelSpec::from_json(&json).unwrap(), s);
        assert!(ModelSpec::from_toml("time_term = true\nremoteness_terms = true").is_err());
        assert!(ModelSpec::from_toml("bogus = 1").is_err());
    }

    #[test]
    fn attribute_columns_resolve() {
        let o = obs(1994, "FR", 1, std::f64::consts::E, 1.0);
        assert_eq!(attribute_column_value("intercept", &o.attrs, 1992), Some(1.0));
        assert_eq!(attribute_column_value("log_gdp", &o.attrs, 1992), Some(1.0));
        assert_eq!(attribute_column_value("log_time", &o.attrs, 1992), Some(2f64.ln()));
        assert_eq!(attribute_column_value("eu", &o.attrs, 1992), Some(0.0));
        assert_eq!(attribute_column_value("fe_FR", &o.attrs, 1992), None);
    }
}
