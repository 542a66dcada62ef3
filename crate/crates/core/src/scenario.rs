//! Counterfactual trade-policy scenarios.
//!
//! Each scenario rewrites the baseline inputs, re-aggregates, and re-estimates
//! the same model. Impacts are read off either the coefficients (indicator and
//! elasticity shifts against the soft fit) or the flow values (EU-28 totals,
//! GNI* adjustment).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datamodel::{
    sector_of, Cn8, CountryYearAttributes, Flag, Flags, Hs6, Money, Sector, SectorMap,
    TariffLine, TradeFlowRecord,
};
use crate::design::{build_design, continuous_column, ModelSpec};
use crate::error::{GravityError, Result};
use crate::glm::{fit_with_status, Estimator, EstimatorOptions, FitResult, FitStatus};
use crate::ingest::{complete_cells, merge, remoteness_by_year, sector_cells, AggregationLevel, SectorFilter};
use crate::remoteness::RemotenessIndex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ScenarioKind {
    Baseline,
    SoftBrexit,
    RegulatoryAlignment,
    HardBrexit,
    LongTermHardBrexit,
}

impl ScenarioKind {
    pub fn slug(self) -> &'static str {
        match self {
            ScenarioKind::Baseline => "baseline",
            ScenarioKind::SoftBrexit => "soft",
            ScenarioKind::RegulatoryAlignment => "regalign",
            ScenarioKind::HardBrexit => "hard",
            ScenarioKind::LongTermHardBrexit => "longterm",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

impl FromStr for ScenarioKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "baseline" => Ok(ScenarioKind::Baseline),
            "soft" => Ok(ScenarioKind::SoftBrexit),
            "regalign" => Ok(ScenarioKind::RegulatoryAlignment),
            "hard" => Ok(ScenarioKind::HardBrexit),
            "longterm" => Ok(ScenarioKind::LongTermHardBrexit),
            other => Err(format!("unknown scenario `{other}`")),
        }
    }
}

/// How an ad-valorem rate reduces the exporter's receipts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TariffIncidence {
    /// `value * (1 - rate)`
    #[default]
    Multiplicative,
    /// `value / (1 + rate)`
    Divisive,
}

impl TariffIncidence {
    pub fn label(self) -> &'static str {
        match self {
            TariffIncidence::Multiplicative => "value*(1-rate)",
            TariffIncidence::Divisive => "value/(1+rate)",
        }
    }

    fn apply(self, value: Money, rate: f64) -> Money {
        let v = value.cents() as f64;
        let out = match self {
            TariffIncidence::Multiplicative => v * (1.0 - rate),
            TariffIncidence::Divisive => v / (1.0 + rate),
        };
        Money(out.round() as i64)
    }
}

impl FromStr for TariffIncidence {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "multiplicative" => Ok(TariffIncidence::Multiplicative),
            "divisive" => Ok(TariffIncidence::Divisive),
            other => Err(format!("unknown tariff incidence `{other}`")),
        }
    }
}

/// HS6-keyed ad-valorem rates.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TariffSchedule {
    rates: BTreeMap<Hs6, f64>,
}

impl TariffSchedule {
    /// Rejects any rate above 100%.
    pub fn new(lines: &[TariffLine]) -> Result<Self> {
        let mut rates = BTreeMap::new();
        for line in lines {
            if line.rate > 1.0 {
                return Err(GravityError::RateAbove100Pct {
                    hs6: line.hs6.to_string(),
                    rate: line.rate,
                });
            }
            rates.insert(line.hs6.clone(), line.rate);
        }
        Ok(TariffSchedule { rates })
    }

    pub fn rate(&self, hs6: &Hs6) -> Option<f64> {
        self.rates.get(hs6).copied()
    }
}

type AttrLookup<'a> = BTreeMap<(i32, &'a str), &'a Flags>;

fn flag_lookup(attrs: &[CountryYearAttributes]) -> AttrLookup<'_> {
    attrs.iter().map(|a| ((a.year, a.iso.as_str()), &a.flags)).collect()
}

/// Sets the EU indicator to zero on every GB or NI row.
pub fn apply_soft(attrs: &[CountryYearAttributes]) -> Vec<CountryYearAttributes> {
    attrs
        .iter()
        .map(|a| {
            let mut a = a.clone();
            if a.flags.is_uk() {
                a.flags.eu = false;
            }
            a
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TariffOutcome {
    pub flows: Vec<TradeFlowRecord>,
    pub n_tariffed: usize,
    /// Targeted rows whose HS6 heading is absent from the schedule (rate 0 applied).
    pub n_missing_rate: usize,
}

/// Applies the schedule to every row bound for one of `targets`.
pub fn apply_tariffs(
    flows: &[TradeFlowRecord],
    schedule: &TariffSchedule,
    targets: &BTreeSet<String>,
    incidence: TariffIncidence,
) -> TariffOutcome {
    let mut n_tariffed = 0;
    let mut n_missing_rate = 0;
    let flows = flows
        .iter()
        .map(|f| {
            if !targets.contains(&f.destination) {
                return f.clone();
            }
            n_tariffed += 1;
            match schedule.rate(&f.cn8.hs6()) {
                Some(rate) => TradeFlowRecord {
                    value: incidence.apply(f.value, rate),
                    ..f.clone()
                },
                None => {
                    n_missing_rate += 1;
                    f.clone()
                }
            }
        })
        .collect();
    TariffOutcome {
        flows,
        n_tariffed,
        n_missing_rate,
    }
}

/// Destinations flagged GB or NI in any year (optionally only GB).
pub fn uk_destinations(attrs: &[CountryYearAttributes], gb_only: bool) -> BTreeSet<String> {
    attrs
        .iter()
        .filter(|a| a.flags.gb || (!gb_only && a.flags.ni))
        .map(|a| a.iso.clone())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Disposition {
    Kept,
    Tariffed { rate: f64 },
    /// Targeted but the HS6 heading has no rate; value unchanged.
    TariffMissingRate,
    Reassigned { to: String },
    /// Reassigned without a unit value on one side; value unchanged.
    ReassignedNoUnitValue { to: String },
}

impl Disposition {
    pub fn label(&self) -> &'static str {
        match self {
            Disposition::Kept => "kept",
            Disposition::Tariffed { .. } => "tariffed",
            Disposition::TariffMissingRate => "flagged_no_rate",
            Disposition::Reassigned { .. } => "reassigned",
            Disposition::ReassignedNoUnitValue { .. } => "flagged_no_unit_value",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubstitutionEntry {
    pub year: i32,
    pub cn8: Cn8,
    pub old_dest: String,
    pub new_dest: String,
    pub old_value: Money,
    pub new_value: Money,
    pub disposition: Disposition,
}

#[derive(Default)]
struct Candidate {
    value: Money,
    volume: Option<f64>,
}

/// Redirects UK-bound goods to the EU-27 market that already buys most of the
/// same CN8 code that year, repricing at that market's unit value; goods with
/// no EU-27 buyer stay put and pay the tariff.
///
/// Ties between candidate markets go to the lexicographically first ISO code.
pub fn apply_substitution(
    flows: &[TradeFlowRecord],
    attrs: &[CountryYearAttributes],
    schedule: &TariffSchedule,
    incidence: TariffIncidence,
) -> (Vec<TradeFlowRecord>, Vec<SubstitutionEntry>) {
    let flags = flag_lookup(attrs);
    let is_target = |f: &TradeFlowRecord| {
        flags
            .get(&(f.year, f.destination.as_str()))
            .is_some_and(|fl| fl.is_uk())
    };
    let is_eu27 = |f: &TradeFlowRecord| {
        flags
            .get(&(f.year, f.destination.as_str()))
            .is_some_and(|fl| fl.eu && !fl.is_uk())
    };

    let mut pool: BTreeMap<(i32, &Cn8), BTreeMap<&str, Candidate>> = BTreeMap::new();
    for f in flows.iter().filter(|f| is_eu27(f) && f.value.cents() > 0) {
        let c = pool
            .entry((f.year, &f.cn8))
            .or_default()
            .entry(f.destination.as_str())
            .or_insert_with(|| Candidate {
                value: Money::ZERO,
                volume: Some(0.0),
            });
        c.value += f.value;
        c.volume = match (c.volume, f.volume) {
            (Some(a), Some(b)) => Some(a + b),
            _ => None,
        };
    }

    let mut out = Vec::with_capacity(flows.len());
    let mut log = Vec::with_capacity(flows.len());
    for f in flows {
        let (new, disposition) = if !is_target(f) {
            (f.clone(), Disposition::Kept)
        } else {
            let best = pool.get(&(f.year, &f.cn8)).and_then(|cands| {
                // max value; iteration is ISO-ascending so the first maximum wins ties
                cands
                    .iter()
                    .fold(None::<(&str, &Candidate)>, |acc, (iso, c)| match acc {
                        Some((_, b)) if b.value >= c.value => acc,
                        _ => Some((iso, c)),
                    })
            });
            match best {
                Some((iso, cand)) => {
                    let unit = cand.volume.filter(|v| *v > 0.0).map(|v| cand.value.cents() as f64 / v);
                    match (f.volume, unit) {
                        (Some(vol), Some(unit)) => (
                            TradeFlowRecord {
                                destination: iso.to_owned(),
                                value: Money((vol * unit).round() as i64),
                                ..f.clone()
                            },
                            Disposition::Reassigned { to: iso.to_owned() },
                        ),
                        _ => (
                            TradeFlowRecord {
                                destination: iso.to_owned(),
                                ..f.clone()
                            },
                            Disposition::ReassignedNoUnitValue { to: iso.to_owned() },
                        ),
                    }
                }
                None => match schedule.rate(&f.cn8.hs6()) {
                    Some(rate) => (
                        TradeFlowRecord {
                            value: incidence.apply(f.value, rate),
                            ..f.clone()
                        },
                        Disposition::Tariffed { rate },
                    ),
                    None => (f.clone(), Disposition::TariffMissingRate),
                },
            }
        };
        log.push(SubstitutionEntry {
            year: f.year,
            cn8: f.cn8.clone(),
            old_dest: f.destination.clone(),
            new_dest: new.destination.clone(),
            old_value: f.value,
            new_value: new.value,
            disposition,
        });
        out.push(new);
    }
    (out, log)
}

/// Borrowed baseline inputs shared by every scenario.
#[derive(Debug, Clone, Copy)]
pub struct ScenarioInputs<'a> {
    pub flows: &'a [TradeFlowRecord],
    pub attrs: &'a [CountryYearAttributes],
    pub tariffs: &'a [TariffLine],
    pub sectors: Option<&'a SectorMap>,
    pub remoteness: Option<&'a [RemotenessIndex]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub spec: ModelSpec,
    pub estimator: Estimator,
    pub options: EstimatorOptions,
    pub level: AggregationLevel,
    pub religion_floor: f64,
    pub incidence: TariffIncidence,
    /// Restricts value totals to one year; `None` sums all years.
    pub report_year: Option<i32>,
}

impl ScenarioConfig {
    pub fn new(spec: ModelSpec, estimator: Estimator) -> Self {
        ScenarioConfig {
            spec: spec.with_response(estimator.response_scale()),
            estimator,
            options: EstimatorOptions::default(),
            level: AggregationLevel::YearCountry,
            religion_floor: crate::ingest::DEFAULT_RELIGION_FLOOR,
            incidence: TariffIncidence::default(),
            report_year: None,
        }
    }
}

/// Scenario-rewritten inputs before estimation.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedInputs {
    pub kind: ScenarioKind,
    pub flows: Vec<TradeFlowRecord>,
    pub attrs: Vec<CountryYearAttributes>,
    pub substitution_log: Vec<SubstitutionEntry>,
    pub n_missing_rate: usize,
}

pub fn transform(
    kind: ScenarioKind,
    inputs: &ScenarioInputs<'_>,
    incidence: TariffIncidence,
) -> Result<TransformedInputs> {
    let schedule = TariffSchedule::new(inputs.tariffs)?;
    let attrs = match kind {
        ScenarioKind::Baseline => inputs.attrs.to_vec(),
        _ => apply_soft(inputs.attrs),
    };
    let mut n_missing_rate = 0;
    let mut log = Vec::new();
    let flows = match kind {
        ScenarioKind::Baseline | ScenarioKind::SoftBrexit => inputs.flows.to_vec(),
        ScenarioKind::RegulatoryAlignment | ScenarioKind::HardBrexit => {
            let gb_only = kind == ScenarioKind::RegulatoryAlignment;
            let targets = uk_destinations(inputs.attrs, gb_only);
            let out = apply_tariffs(inputs.flows, &schedule, &targets, incidence);
            n_missing_rate = out.n_missing_rate;
            out.flows
        }
        ScenarioKind::LongTermHardBrexit => {
            let (flows, entries) = apply_substitution(inputs.flows, inputs.attrs, &schedule, incidence);
            n_missing_rate = entries
                .iter()
                .filter(|e| e.disposition == Disposition::TariffMissingRate)
                .count();
            log = entries;
            flows
        }
    };
    Ok(TransformedInputs {
        kind,
        flows,
        attrs,
        substitution_log: log,
        n_missing_rate,
    })
}

/// Fits `transformed` for one sector slice. Baseline cells that the scenario
/// empties are kept as zeros so every scenario shares the baseline's rows.
pub fn fit_transformed(
    transformed: &TransformedInputs,
    inputs: &ScenarioInputs<'_>,
    config: &ScenarioConfig,
    sector: Sector,
) -> Result<(FitResult, FitStatus)> {
    let filter = SectorFilter::from(sector);
    let universe = sector_cells(inputs.flows, filter, config.level, inputs.sectors)?;
    let cells = complete_cells(
        sector_cells(&transformed.flows, filter, config.level, inputs.sectors)?,
        &universe,
    );
    let lookup = inputs.remoteness.map(remoteness_by_year);
    let (dataset, _) = merge(&cells, &transformed.attrs, lookup.as_ref(), config.religion_floor)?;
    let spec = config.spec.clone().with_response(config.estimator.response_scale());
    let design = build_design(&dataset, &spec)?;
    fit_with_status(config.estimator, &design, &config.options)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DestinationGroup {
    Gb,
    Ni,
    Eu27,
    Eu28,
    World,
}

impl DestinationGroup {
    pub const ALL: [DestinationGroup; 5] = [
        DestinationGroup::Gb,
        DestinationGroup::Ni,
        DestinationGroup::Eu27,
        DestinationGroup::Eu28,
        DestinationGroup::World,
    ];

    pub fn label(self) -> &'static str {
        match self {
            DestinationGroup::Gb => "GB",
            DestinationGroup::Ni => "NI",
            DestinationGroup::Eu27 => "EU-27",
            DestinationGroup::Eu28 => "EU-28",
            DestinationGroup::World => "World",
        }
    }
}

pub type ValueTotals = BTreeMap<(Sector, DestinationGroup), Money>;

/// Value sums by sector and destination group. Group membership always comes
/// from the baseline (pre-scenario) attributes so that totals stay comparable.
pub fn value_totals(
    flows: &[TradeFlowRecord],
    baseline_attrs: &[CountryYearAttributes],
    sectors: Option<&SectorMap>,
    year: Option<i32>,
) -> Result<ValueTotals> {
    let flags = flag_lookup(baseline_attrs);
    let mut totals = ValueTotals::new();
    let mut sector_list = vec![Sector::AllSectors];
    if sectors.is_some() {
        sector_list.extend(Sector::MAPPED);
    }
    for s in &sector_list {
        for g in DestinationGroup::ALL {
            totals.insert((*s, g), Money::ZERO);
        }
    }
    for f in flows.iter().filter(|f| year.is_none_or(|y| f.year == y)) {
        let fl = flags.get(&(f.year, f.destination.as_str()));
        let mut groups = vec![DestinationGroup::World];
        if let Some(fl) = fl {
            if fl.gb {
                groups.extend([DestinationGroup::Gb, DestinationGroup::Eu28]);
            } else if fl.ni {
                groups.extend([DestinationGroup::Ni, DestinationGroup::Eu28]);
            } else if fl.eu {
                groups.extend([DestinationGroup::Eu27, DestinationGroup::Eu28]);
            }
        }
        let mut secs = vec![Sector::AllSectors];
        if let Some(map) = sectors {
            secs.push(sector_of(&f.cn8, map)?);
        }
        for s in secs {
            for g in &groups {
                *totals.entry((s, *g)).or_default() += f.value;
            }
        }
    }
    Ok(totals)
}

/// Hard-vs-soft level effect of an indicator, `(exp(b_s - b_soft) - 1) * 100`.
pub fn indicator_relative_impact(beta_scenario: f64, beta_soft: f64) -> f64 {
    (beta_scenario - beta_soft).exp_m1() * 100.0
}

/// Relative change of an elasticity, `(b_s - b_soft) / b_soft * 100`.
pub fn continuous_relative_impact(beta_scenario: f64, beta_soft: f64) -> Result<f64> {
    if beta_soft == 0.0 {
        return Err(GravityError::ZeroBaseline);
    }
    Ok((beta_scenario - beta_soft) / beta_soft * 100.0)
}

/// `(exp(delta - 2 se) - 1) * 100`.
pub fn worst_case_two_se(delta: f64, se: f64) -> f64 {
    (delta - 2.0 * se).exp_m1() * 100.0
}

/// Percent change of EU-28 export value against the soft scenario, per sector.
pub fn eu28_impact(scenario: &ValueTotals, soft: &ValueTotals) -> Result<BTreeMap<Sector, f64>> {
    let mut out = BTreeMap::new();
    for (&(sector, group), &base) in soft {
        if group != DestinationGroup::Eu28 {
            continue;
        }
        if base.cents() == 0 {
            return Err(GravityError::ZeroBaseValue(sector.to_string()));
        }
        let v = scenario
            .get(&(sector, group))
            .copied()
            .unwrap_or(Money::ZERO);
        out.insert(
            sector,
            100.0 * (v.cents() - base.cents()) as f64 / base.cents() as f64,
        );
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GniAdjustment {
    pub gni_star: f64,
    pub soft_total: f64,
    pub scenario_total: f64,
    pub adjusted: f64,
    pub percent_change: f64,
}

pub fn gni_adjustment(gni_star: f64, soft_total: f64, scenario_total: f64) -> GniAdjustment {
    let adjusted = gni_star - (soft_total - scenario_total);
    GniAdjustment {
        gni_star,
        soft_total,
        scenario_total,
        adjusted,
        percent_change: 100.0 * (adjusted - gni_star) / gni_star,
    }
}

/// Result of one scenario for one sector slice.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOutcome {
    pub kind: ScenarioKind,
    pub sector: Sector,
    pub flows: Vec<TradeFlowRecord>,
    pub attrs: Vec<CountryYearAttributes>,
    pub fit: FitResult,
    pub fit_status: FitStatus,
    pub substitution_log: Vec<SubstitutionEntry>,
    pub n_missing_rate: usize,
    pub totals: ValueTotals,
}

/// Transforms the inputs for `kind` and re-estimates `config.spec` on `sector`.
pub fn run_scenario(
    kind: ScenarioKind,
    inputs: &ScenarioInputs<'_>,
    config: &ScenarioConfig,
    sector: Sector,
) -> Result<ScenarioOutcome> {
    let transformed = transform(kind, inputs, config.incidence)?;
    let (fit, fit_status) = fit_transformed(&transformed, inputs, config, sector)?;
    let totals = value_totals(&transformed.flows, inputs.attrs, inputs.sectors, config.report_year)?;
    Ok(ScenarioOutcome {
        kind,
        sector,
        flows: transformed.flows,
        attrs: transformed.attrs,
        fit,
        fit_status,
        substitution_log: transformed.substitution_log,
        n_missing_rate: transformed.n_missing_rate,
        totals,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactRow {
    pub sector: Sector,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactReport {
    pub kind: ScenarioKind,
    pub rows: Vec<ImpactRow>,
    pub gni: Option<GniAdjustment>,
    pub incidence: TariffIncidence,
    /// Which standard error feeds the worst-case rows.
    pub worst_case_se_source: String,
}

impl ImpactReport {
    pub fn value(&self, sector: Sector, metric: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.sector == sector && r.metric == metric)
            .map(|r| r.value)
    }
}

/// The three fits a sector contributes to the report.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorFits {
    pub sector: Sector,
    pub baseline: FitResult,
    pub baseline_status: FitStatus,
    pub soft: FitResult,
    pub soft_status: FitStatus,
    pub scenario: FitResult,
    pub scenario_status: FitStatus,
}

pub const WORST_CASE_SE_SOURCE: &str = "scenario fit robust SE of the indicator coefficient";

pub fn build_impact_report(
    kind: ScenarioKind,
    fits: &[SectorFits],
    soft_totals: &ValueTotals,
    scenario_totals: &ValueTotals,
    gni_star: Option<f64>,
    incidence: TariffIncidence,
) -> Result<ImpactReport> {
    let eu28 = eu28_impact(scenario_totals, soft_totals)?;
    let mut rows = Vec::new();
    for sf in fits {
        let mut push = |metric: &str, value: f64| {
            if value.is_finite() {
                rows.push(ImpactRow {
                    sector: sf.sector,
                    metric: metric.to_owned(),
                    value,
                });
            }
        };
        for flag in [Flag::Gb, Flag::Ni] {
            let name = flag.name();
            let (Some(bs), Some(bsoft)) = (sf.scenario.coefficient(name), sf.soft.coefficient(name))
            else {
                continue;
            };
            push(&format!("{name}_relative_impact_pct"), indicator_relative_impact(bs, bsoft));
            if let Some(se) = sf.scenario.robust_se_of(name) {
                push(&format!("{name}_worst_case_2se_pct"), worst_case_two_se(bs - bsoft, se));
            }
            if let Some(bb) = sf.baseline.coefficient(name) {
                push(&format!("{name}_coef_shift_vs_baseline"), bsoft - bb);
            }
        }
        if let Some(eu) = sf.baseline.coefficient(Flag::Eu.name()) {
            push("eu_coef_baseline", eu);
        }
        for attr in [crate::datamodel::Attribute::Gdp, crate::datamodel::Attribute::Distance] {
            let col = continuous_column(attr);
            if let (Some(bs), Some(bsoft)) = (sf.scenario.coefficient(&col), sf.soft.coefficient(&col)) {
                if let Ok(v) = continuous_relative_impact(bs, bsoft) {
                    push(&format!("{}_relative_impact_pct", attr.name()), v);
                }
            }
        }
        if let Some(v) = eu28.get(&sf.sector) {
            push("eu28_value_impact_pct", *v);
        }
    }
    let gni = gni_star.map(|g| {
        let world = |t: &ValueTotals| {
            t.get(&(Sector::AllSectors, DestinationGroup::World))
                .map_or(0.0, |m| m.cents() as f64 / 1e11)
        };
        gni_adjustment(g, world(soft_totals), world(scenario_totals))
    });
    Ok(ImpactReport {
        kind,
        rows,
        gni,
        incidence,
        worst_case_se_source: WORST_CASE_SE_SOURCE.into(),
    })
}

/// Everything one `scenario` invocation produces.
#[derive(Debug)]
pub struct ScenarioRun {
    pub kind: ScenarioKind,
    pub transformed: TransformedInputs,
    pub fits: Vec<SectorFits>,
    /// Sectors whose fits failed outright; they are absent from `fits` and the report.
    pub failures: Vec<(Sector, GravityError)>,
    pub soft_totals: ValueTotals,
    pub scenario_totals: ValueTotals,
    pub report: ImpactReport,
}

/// Baseline, soft and `kind` fits for every sector, plus the impact report.
///
/// Sectors are fitted in parallel on the current rayon pool; output order
/// follows `sectors`. A sector whose fits fail is recorded in `failures` and
/// left out of the report.
pub fn run_comparison(
    kind: ScenarioKind,
    inputs: &ScenarioInputs<'_>,
    config: &ScenarioConfig,
    sectors: &[Sector],
    gni_star: Option<f64>,
) -> Result<ScenarioRun> {
    let baseline = transform(ScenarioKind::Baseline, inputs, config.incidence)?;
    let soft = transform(ScenarioKind::SoftBrexit, inputs, config.incidence)?;
    let scenario = transform(kind, inputs, config.incidence)?;

    let results: Vec<(Sector, Result<SectorFits>)> = sectors
        .par_iter()
        .map(|&sector| {
            let r = (|| {
                let (b, bs) = fit_transformed(&baseline, inputs, config, sector)?;
                let (s, ss) = fit_transformed(&soft, inputs, config, sector)?;
                let (c, cs) = if kind == ScenarioKind::SoftBrexit {
                    (s.clone(), ss)
                } else {
                    fit_transformed(&scenario, inputs, config, sector)?
                };
                Ok(SectorFits {
                    sector,
                    baseline: b,
                    baseline_status: bs,
                    soft: s,
                    soft_status: ss,
                    scenario: c,
                    scenario_status: cs,
                })
            })();
            (sector, r)
        })
        .collect();
    let mut fits = Vec::new();
    let mut failures = Vec::new();
    for (sector, r) in results {
        match r {
            Ok(f) => fits.push(f),
            Err(e) => failures.push((sector, e)),
        }
    }

    let soft_totals = value_totals(&soft.flows, inputs.attrs, inputs.sectors, config.report_year)?;
    let scenario_totals = value_totals(&scenario.flows, inputs.attrs, inputs.sectors, config.report_year)?;
    let report = build_impact_report(
        kind,
        &fits,
        &soft_totals,
        &scenario_totals,
        gni_star,
        config.incidence,
    )?;
    Ok(ScenarioRun {
        kind,
        transformed: scenario,
        fits,
        failures,
        soft_totals,
        scenario_totals,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(year: i32, dest: &str, cn8: &str, cents: i64, volume: Option<f64>) -> TradeFlowRecord {
        TradeFlowRecord {
            year,
            destination: dest.into(),
            cn8: Cn8::new(cn8).unwrap(),
            value: Money(cents),
            volume,
        }
    }

    fn attr(iso: &str, year: i32, gb: bool, ni: bool, eu: bool) -> CountryYearAttributes {
        CountryYearAttributes {
            iso: iso.into(),
            year,
            gdp: 1.0,
            population: 1.0,
            area_km2: 1.0,
            distance_km: 1.0,
            religion_share: 0.5,
            flags: Flags {
                gb,
                ni,
                eu,
                ..Default::default()
            },
        }
    }

    fn schedule(lines: &[(&str, f64)]) -> TariffSchedule {
        TariffSchedule::new(
            &lines
                .iter()
                .map(|(h, r)| TariffLine {
                    hs6: Hs6::new(h).unwrap(),
                    rate: *r,
                })
                .collect::<Vec<_>>(),
        )
        .unwrap()
    }

    #[test]
    fn soft_flips_only_uk_eu_flag() {
        let attrs = vec![attr("GB", 2016, true, false, true), attr("FR", 2016, false, false, true)];
        let out = apply_soft(&attrs);
        assert!(!out[0].flags.eu && out[0].flags.gb);
        assert_eq!(out[1], attrs[1]);
        let no_uk = vec![attr("FR", 2016, false, false, true)];
        assert_eq!(apply_soft(&no_uk), no_uk);
    }

    #[test]
    fn tariff_definition() {
        let targets: BTreeSet<String> = ["GB".to_string()].into();
        let s = schedule(&[("010121", 0.10), ("020110", 0.0)]);
        let out = apply_tariffs(
            &[rec(2016, "GB", "01012100", 1000, None), rec(2016, "GB", "02011000", 700, None)],
            &s,
            &targets,
            TariffIncidence::Multiplicative,
        );
        assert_eq!(out.flows[0].value, Money(900));
        assert_eq!(out.flows[1].value, Money(700));
    }

    #[test]
    fn tariff_mixed_rows() {
        let targets: BTreeSet<String> = ["GB".to_string()].into();
        let s = schedule(&[("010121", 0.0), ("020110", 0.5)]);
        let flows = vec![
            rec(2016, "GB", "01012100", 1000, None),
            rec(2016, "GB", "02011000", 1000, None),
            rec(2016, "GB", "03011000", 1000, None),
        ];
        let out = apply_tariffs(&flows, &s, &targets, TariffIncidence::Multiplicative);
        let values: Vec<i64> = out.flows.iter().map(|f| f.value.cents()).collect();
        assert_eq!(values, vec![1000, 500, 1000]);
        assert_eq!(out.n_missing_rate, 1);
    }

    #[test]
    fn divisive_incidence() {
        let targets: BTreeSet<String> = ["GB".to_string()].into();
        let s = schedule(&[("010121", 0.25)]);
        let out = apply_tariffs(&[rec(2016, "GB", "01012100", 1000, None)], &s, &targets, TariffIncidence::Divisive);
        assert_eq!(out.flows[0].value, Money(800));
    }

    #[test]
    fn rate_above_100pct_rejected() {
        let err = TariffSchedule::new(&[TariffLine {
            hs6: Hs6::new("010121").unwrap(),
            rate: 1.5,
        }])
        .unwrap_err();
        assert!(matches!(err, GravityError::RateAbove100Pct { .. }));
    }

    #[test]
    fn substitution_reprices_at_candidate_unit_value() {
        let attrs = vec![
            attr("GB", 2016, true, false, true),
            attr("FR", 2016, false, false, true),
            attr("DE", 2016, false, false, true),
        ];
        // GB unit value 10/unit; FR 20/unit; DE smaller market
        let flows = vec![
            rec(2016, "GB", "01012100", 1000, Some(100.0)),
            rec(2016, "FR", "01012100", 4000, Some(200.0)),
            rec(2016, "DE", "01012100", 300, Some(10.0)),
        ];
        let (out, log) = apply_substitution(&flows, &attrs, &TariffSchedule::default(), TariffIncidence::Multiplicative);
        assert_eq!(out[0].destination, "FR");
        assert_eq!(out[0].value, Money(2000));
        assert_eq!(log[0].disposition, Disposition::Reassigned { to: "FR".into() });
        assert_eq!(out[1], flows[1]);
        assert_eq!(log[1].disposition, Disposition::Kept);
    }

    #[test]
    fn substitution_falls_back_to_tariff() {
        let attrs = vec![attr("GB", 2016, true, false, true), attr("FR", 2016, false, false, true)];
        let flows = vec![rec(2016, "GB", "01012100", 1000, Some(1.0)), rec(2016, "FR", "02012100", 50, None)];
        let s = schedule(&[("010121", 0.2)]);
        let (out, log) = apply_substitution(&flows, &attrs, &s, TariffIncidence::Multiplicative);
        assert_eq!(out[0].destination, "GB");
        assert_eq!(out[0].value, Money(800));
        assert_eq!(log[0].disposition, Disposition::Tariffed { rate: 0.2 });
    }

    #[test]
    fn substitution_without_unit_values_is_flagged() {
        let attrs = vec![attr("GB", 2016, true, false, true), attr("FR", 2016, false, false, true)];
        let flows = vec![rec(2016, "GB", "01012100", 1000, None), rec(2016, "FR", "01012100", 50, None)];
        let (out, log) = apply_substitution(&flows, &attrs, &TariffSchedule::default(), TariffIncidence::Multiplicative);
        assert_eq!(out[0].destination, "FR");
        assert_eq!(out[0].value, Money(1000));
        assert_eq!(log[0].disposition, Disposition::ReassignedNoUnitValue { to: "FR".into() });
    }

    #[test]
    fn substitution_tie_breaks_on_iso() {
        let attrs = vec![
            attr("GB", 2016, true, false, true),
            attr("FR", 2016, false, false, true),
            attr("DE", 2016, false, false, true),
        ];
        let flows = vec![
            rec(2016, "GB", "01012100", 1000, None),
            rec(2016, "FR", "01012100", 500, None),
            rec(2016, "DE", "01012100", 500, None),
        ];
        let (out, _) = apply_substitution(&flows, &attrs, &TariffSchedule::default(), TariffIncidence::Multiplicative);
        assert_eq!(out[0].destination, "DE");
    }

    #[test]
    fn impact_formulas() {
        assert!((indicator_relative_impact(-0.850, -0.800) - -4.9).abs() < 0.1);
        assert!((indicator_relative_impact(-1.787, -1.721) - -6.4).abs() < 0.1);
        assert_eq!(indicator_relative_impact(0.3, 0.3), 0.0);
        assert!((continuous_relative_impact(-0.146, -0.088).unwrap() - 65.9).abs() < 0.1);
        assert!((continuous_relative_impact(0.380, 0.432).unwrap() - -12.0).abs() < 0.1);
        assert_eq!(continuous_relative_impact(0.2, 0.2).unwrap(), 0.0);
        assert!(matches!(continuous_relative_impact(1.0, 0.0), Err(GravityError::ZeroBaseline)));
        assert_eq!(worst_case_two_se(0.0, 0.0), 0.0);
        assert!((worst_case_two_se(-0.05, 0.1) - ((-0.25f64).exp() - 1.0) * 100.0).abs() < 1e-12);
        assert!((worst_case_two_se(-0.05, 0.1) - -22.12).abs() < 0.005);
        // inverse check: a 6.8% worst-case drop at delta = -0.05 needs se ~ 0.010
        let se = (-0.05 - (1.0f64 - 0.068).ln()) / 2.0;
        assert!((se - 0.0101).abs() < 2e-4);
        assert!((worst_case_two_se(-0.05, se) - -6.8).abs() < 1e-9);
    }

    #[test]
    fn gni_rows() {
        let hard = gni_adjustment(181.0, 115.5, 114.7);
        assert!((hard.adjusted - 180.2).abs() < 0.05);
        assert!((hard.percent_change - -0.4).abs() < 0.05);
        let long = gni_adjustment(181.0, 115.5, 106.3);
        assert!((long.adjusted - 171.8).abs() < 0.05);
        assert!((long.percent_change - -5.1).abs() < 0.05);
        let same = gni_adjustment(181.0, 115.5, 115.5);
        assert_eq!((same.adjusted, same.percent_change), (181.0, 0.0));
    }

    #[test]
    fn eu28_uniform_tariff_on_uk_share() {
        // UK worth 30% of EU-28; 10% tariff on all UK flows => -3%
        let attrs = vec![
            attr("GB", 2016, true, false, true),
            attr("XI", 2016, false, true, true),
            attr("FR", 2016, false, false, true),
            attr("US", 2016, false, false, false),
        ];
        let flows = vec![
            rec(2016, "GB", "01012100", 200_000, None),
            rec(2016, "XI", "01012100", 100_000, None),
            rec(2016, "FR", "01012100", 700_000, None),
            rec(2016, "US", "01012100", 900_000, None),
        ];
        let s = schedule(&[("010121", 0.10)]);
        let targets = uk_destinations(&attrs, false);
        let hard = apply_tariffs(&flows, &s, &targets, TariffIncidence::Multiplicative).flows;
        let soft_t = value_totals(&flows, &attrs, None, None).unwrap();
        let hard_t = value_totals(&hard, &attrs, None, None).unwrap();
        let impact = eu28_impact(&hard_t, &soft_t).unwrap();
        assert!((impact[&Sector::AllSectors] - -3.0).abs() < 0.01);
        let zero = eu28_impact(&soft_t, &soft_t).unwrap();
        assert_eq!(zero[&Sector::AllSectors], 0.0);
    }

    #[test]
    fn complete_cells_zero_fills() {
        use crate::ingest::aggregate;
        let universe = aggregate(
            &[rec(2016, "GB", "01012100", 5, None), rec(2016, "FR", "01012100", 5, None)],
            AggregationLevel::YearCountry,
            None,
        )
        .unwrap();
        let moved = aggregate(&[rec(2016, "FR", "01012100", 10, None)], AggregationLevel::YearCountry, None).unwrap();
        let done = complete_cells(moved, &universe);
        assert_eq!(done.len(), 2);
        assert!(done.iter().any(|c| c.destination == "GB" && c.value == Money::ZERO));
    }
}
