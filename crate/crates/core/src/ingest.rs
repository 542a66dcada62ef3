//! CSV readers/writers for the input bundle, aggregation and the attribute join.
//!
//! Every reader checks the header against a fixed column list and reports the
//! file, line and column of the first invalid field.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datamodel::{
    is_country_code, sector_of, BilateralTradeRecord, CellKey, Cn8, CountryYearAttributes, Flags,
    GravityObservation, Hs6, Money, Sector, SectorMap, TariffLine, TradeFlowRecord,
};
use crate::error::{GravityError, Result};
use crate::remoteness::{DistanceTable, RemotenessIndex};

pub const FLOWS_HEADER: &[&str] = &["year", "destination", "cn8", "value_eur", "volume"];
pub const ATTRS_HEADER: &[&str] = &[
    "iso",
    "year",
    "gdp",
    "population",
    "area_km2",
    "distance_km",
    "religion_share",
    "gb",
    "ni",
    "gatt_wto",
    "english",
    "eu",
    "euro",
    "legal",
];
pub const BILATERAL_HEADER: &[&str] = &["year", "reporter", "partner", "flow_value"];
pub const TARIFFS_HEADER: &[&str] = &["hs6", "advalorem_rate"];
pub const SECTORS_HEADER: &[&str] = &["cn_prefix", "sector_label"];
pub const DISTANCES_HEADER: &[&str] = &["country_a", "country_b", "distance_km"];
pub const DISTANCES_BY_YEAR_HEADER: &[&str] = &["year", "country_a", "country_b", "distance_km"];
pub const REMOTENESS_HEADER: &[&str] = &["country", "year", "r"];

pub const DEFAULT_RELIGION_FLOOR: f64 = 1e-4;

/// Field access for one CSV row with error context attached.
struct Row<'a> {
    file: &'a str,
    line: usize,
    header: &'a [&'a str],
    record: &'a csv::StringRecord,
}

impl<'a> Row<'a> {
    fn raw(&self, idx: usize) -> &'a str {
        self.record.get(idx).unwrap_or("").trim()
    }

    fn err(&self, idx: usize, message: impl Into<String>) -> GravityError {
        GravityError::Parse {
            file: self.file.to_owned(),
            row: self.line,
            column: self.header[idx].to_owned(),
            message: message.into(),
        }
    }

    fn year(&self, idx: usize) -> Result<i32> {
        self.raw(idx)
            .parse::<i32>()
            .map_err(|_| self.err(idx, format!("invalid year `{}`", self.raw(idx))))
    }

    fn real(&self, idx: usize) -> Result<f64> {
        let text = self.raw(idx);
        match text.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(self.err(idx, format!("invalid number `{text}`"))),
        }
    }

    fn non_negative(&self, idx: usize) -> Result<f64> {
        let v = self.real(idx)?;
        if v < 0.0 {
            return Err(GravityError::NegativeValue {
                file: self.file.to_owned(),
                row: self.line,
                column: self.header[idx].to_owned(),
            });
        }
        Ok(v)
    }

    fn positive(&self, idx: usize) -> Result<f64> {
        let v = self.real(idx)?;
        if v <= 0.0 {
            return Err(GravityError::NonPositiveCovariate {
                file: self.file.to_owned(),
                row: self.line,
                column: self.header[idx].to_owned(),
            });
        }
        Ok(v)
    }

    fn flag(&self, idx: usize) -> Result<bool> {
        match self.raw(idx) {
            "0" => Ok(false),
            "1" => Ok(true),
            other => Err(self.err(idx, format!("flag must be 0 or 1, got `{other}`"))),
        }
    }

    fn country(&self, idx: usize) -> Result<String> {
        let code = self.raw(idx);
        if is_country_code(code) {
            Ok(code.to_owned())
        } else {
            Err(self.bad_code(idx))
        }
    }

    fn bad_code(&self, idx: usize) -> GravityError {
        GravityError::BadCode {
            file: self.file.to_owned(),
            row: self.line,
            column: self.header[idx].to_owned(),
            code: self.raw(idx).to_owned(),
        }
    }
}

fn label_of(path: &Path) -> String {
    path.display().to_string()
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| GravityError::io(path, e))
}

/// Runs `parse` over every data row after checking the header.
fn read_rows<R: Read, T>(
    reader: R,
    file: &str,
    header: &[&str],
    mut parse: impl FnMut(&Row<'_>) -> Result<T>,
) -> Result<Vec<T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let found = rdr.headers().map_err(|e| csv_err(file, e))?.clone();
    check_header(file, header, &found)?;
    let mut out = Vec::new();
    for result in rdr.records() {
        let record = result.map_err(|e| csv_err(file, e))?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let row = Row {
            file,
            line,
            header,
            record: &record,
        };
        out.push(parse(&row)?);
    }
    Ok(out)
}

fn check_header(file: &str, expected: &[&str], found: &csv::StringRecord) -> Result<()> {
    let found_cols: Vec<&str> = found.iter().map(str::trim).collect();
    if found_cols != expected {
        return Err(GravityError::SchemaMismatch {
            file: file.to_owned(),
            expected: expected.join(","),
            found: found_cols.join(","),
        });
    }
    Ok(())
}

fn csv_err(file: &str, e: csv::Error) -> GravityError {
    let row = e.position().map(|p| p.line() as usize).unwrap_or(0);
    GravityError::Parse {
        file: file.to_owned(),
        row,
        column: String::new(),
        message: e.to_string(),
    }
}

pub fn read_trade_flows(path: &Path) -> Result<Vec<TradeFlowRecord>> {
    read_trade_flows_from(open(path)?, &label_of(path))
}

pub fn read_trade_flows_from<R: Read>(reader: R, file: &str) -> Result<Vec<TradeFlowRecord>> {
    read_rows(reader, file, FLOWS_HEADER, |row| {
        let year = row.year(0)?;
        let destination = row.country(1)?;
        let cn8 = Cn8::new(row.raw(2)).ok_or_else(|| row.bad_code(2))?;
        let raw_value = row.raw(3);
        let value = match Money::parse_euros(raw_value) {
            Some(v) => v,
            None if raw_value.starts_with('-') => {
                return Err(GravityError::NegativeValue {
                    file: file.to_owned(),
                    row: row.line,
                    column: "value_eur".into(),
                })
            }
            None => return Err(row.err(3, format!("invalid euro amount `{raw_value}`"))),
        };
        let volume = if row.raw(4).is_empty() {
            None
        } else {
            Some(row.non_negative(4)?)
        };
        Ok(TradeFlowRecord {
            year,
            destination,
            cn8,
            value,
            volume,
        })
    })
}

pub fn read_attributes(path: &Path) -> Result<Vec<CountryYearAttributes>> {
    read_attributes_from(open(path)?, &label_of(path))
}

pub fn read_attributes_from<R: Read>(reader: R, file: &str) -> Result<Vec<CountryYearAttributes>> {
    read_rows(reader, file, ATTRS_HEADER, |row| {
        let religion_share = row.non_negative(6)?;
        if religion_share > 1.0 {
            return Err(row.err(6, "share must lie in [0, 1]"));
        }
        let flags = Flags {
            gb: row.flag(7)?,
            ni: row.flag(8)?,
            gatt_wto: row.flag(9)?,
            english: row.flag(10)?,
            eu: row.flag(11)?,
            euro: row.flag(12)?,
            legal: row.flag(13)?,
        };
        if flags.gb && flags.ni {
            return Err(GravityError::FlagConflict {
                file: file.to_owned(),
                row: row.line,
            });
        }
        Ok(CountryYearAttributes {
            iso: row.country(0)?,
            year: row.year(1)?,
            gdp: row.positive(2)?,
            population: row.positive(3)?,
            area_km2: row.positive(4)?,
            distance_km: row.positive(5)?,
            religion_share,
            flags,
        })
    })
}

pub fn read_bilateral(path: &Path) -> Result<Vec<BilateralTradeRecord>> {
    read_bilateral_from(open(path)?, &label_of(path))
}

pub fn read_bilateral_from<R: Read>(reader: R, file: &str) -> Result<Vec<BilateralTradeRecord>> {
    read_rows(reader, file, BILATERAL_HEADER, |row| {
        let reporter = row.country(1)?;
        let partner = row.country(2)?;
        if reporter == partner {
            return Err(row.err(2, "partner equals reporter"));
        }
        Ok(BilateralTradeRecord {
            year: row.year(0)?,
            reporter,
            partner,
            flow_value: row.non_negative(3)?,
        })
    })
}

pub fn read_tariffs(path: &Path) -> Result<Vec<TariffLine>> {
    read_tariffs_from(open(path)?, &label_of(path))
}

pub fn read_tariffs_from<R: Read>(reader: R, file: &str) -> Result<Vec<TariffLine>> {
    let mut seen = BTreeSet::new();
    read_rows(reader, file, TARIFFS_HEADER, |row| {
        let hs6 = Hs6::new(row.raw(0)).ok_or_else(|| row.bad_code(0))?;
        if !seen.insert(hs6.clone()) {
            return Err(row.err(0, format!("duplicate hs6 `{hs6}`")));
        }
        Ok(TariffLine {
            hs6,
            rate: row.non_negative(1)?,
        })
    })
}

pub fn read_sector_map(path: &Path) -> Result<SectorMap> {
    read_sector_map_from(open(path)?, &label_of(path))
}

pub fn read_sector_map_from<R: Read>(reader: R, file: &str) -> Result<SectorMap> {
    let rules = read_rows(reader, file, SECTORS_HEADER, |row| {
        let sector: Sector = row.raw(1).parse().map_err(|e: String| row.err(1, e))?;
        Ok((row.raw(0).to_owned(), sector, row.line))
    })?;
    let mut map = SectorMap::new();
    for (prefix, sector, line) in rules {
        map.insert(&prefix, sector).map_err(|message| GravityError::Parse {
            file: file.to_owned(),
            row: line,
            column: "cn_prefix".into(),
            message,
        })?;
    }
    Ok(map)
}

/// Reads `distances.csv`; a leading `year` column selects the per-year form.
pub fn read_distances(path: &Path) -> Result<DistanceTable> {
    read_distances_from(open(path)?, &label_of(path))
}

pub fn read_distances_from<R: Read>(reader: R, file: &str) -> Result<DistanceTable> {
    let mut buf = String::new();
    let mut reader = reader;
    reader
        .read_to_string(&mut buf)
        .map_err(|e| GravityError::io(file, e))?;
    let per_year = buf.trim_start().starts_with("year");
    let header = if per_year {
        DISTANCES_BY_YEAR_HEADER
    } else {
        DISTANCES_HEADER
    };
    let off = usize::from(per_year);
    let rows = read_rows(buf.as_bytes(), file, header, |row| {
        let year = if per_year { Some(row.year(0)?) } else { None };
        let a = row.country(off)?;
        let b = row.country(off + 1)?;
        if a == b {
            return Err(row.err(off + 1, "distance to self"));
        }
        Ok((year, a, b, row.positive(off + 2)?, row.line))
    })?;
    let mut table = DistanceTable::default();
    for (year, a, b, km, line) in rows {
        table
            .insert(year, &a, &b, km)
            .map_err(|_| GravityError::AsymmetricDistance {
                file: file.to_owned(),
                row: line,
                a: a.clone(),
                b: b.clone(),
            })?;
    }
    Ok(table)
}

pub fn read_remoteness(path: &Path) -> Result<Vec<RemotenessIndex>> {
    read_remoteness_from(open(path)?, &label_of(path))
}

pub fn read_remoteness_from<R: Read>(reader: R, file: &str) -> Result<Vec<RemotenessIndex>> {
    read_rows(reader, file, REMOTENESS_HEADER, |row| {
        Ok(RemotenessIndex {
            country: row.country(0)?,
            year: row.year(1)?,
            r: row.positive(2)?,
        })
    })
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().has_headers(false).from_writer(w)
}

fn write_err(e: impl std::fmt::Display) -> GravityError {
    GravityError::Internal(format!("csv write failed: {e}"))
}

fn bit(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

pub fn write_trade_flows<W: Write>(w: W, flows: &[TradeFlowRecord]) -> Result<()> {
    let mut wtr = csv_writer(w);
    wtr.write_record(FLOWS_HEADER).map_err(write_err)?;
    for f in flows {
        let volume = f.volume.map(|v| v.to_string()).unwrap_or_default();
        wtr.write_record([
            f.year.to_string(),
            f.destination.clone(),
            f.cn8.to_string(),
            f.value.to_string(),
            volume,
        ])
        .map_err(write_err)?;
    }
    wtr.flush().map_err(write_err)
}

pub fn write_attributes<W: Write>(w: W, attrs: &[CountryYearAttributes]) -> Result<()> {
    let mut wtr = csv_writer(w);
    wtr.write_record(ATTRS_HEADER).map_err(write_err)?;
    for a in attrs {
        let f = &a.flags;
        wtr.write_record([
            a.iso.clone(),
            a.year.to_string(),
            a.gdp.to_string(),
            a.population.to_string(),
            a.area_km2.to_string(),
            a.distance_km.to_string(),
            a.religion_share.to_string(),
            bit(f.gb).into(),
            bit(f.ni).into(),
            bit(f.gatt_wto).into(),
            bit(f.english).into(),
            bit(f.eu).into(),
            bit(f.euro).into(),
            bit(f.legal).into(),
        ])
        .map_err(write_err)?;
    }
    wtr.flush().map_err(write_err)
}

pub fn write_bilateral<W: Write>(w: W, rows: &[BilateralTradeRecord]) -> Result<()> {
    let mut wtr = csv_writer(w);
    wtr.write_record(BILATERAL_HEADER).map_err(write_err)?;
    for r in rows {
        wtr.write_record([
            r.year.to_string(),
            r.reporter.clone(),
            r.partner.clone(),
            r.flow_value.to_string(),
        ])
        .map_err(write_err)?;
    }
    wtr.flush().map_err(write_err)
}

pub fn write_tariffs<W: Write>(w: W, lines: &[TariffLine]) -> Result<()> {
    let mut wtr = csv_writer(w);
    wtr.write_record(TARIFFS_HEADER).map_err(write_err)?;
    for t in lines {
        wtr.write_record([t.hs6.to_string(), t.rate.to_string()])
            .map_err(write_err)?;
    }
    wtr.flush().map_err(write_err)
}

pub fn write_sector_map<W: Write>(w: W, map: &SectorMap) -> Result<()> {
    let mut wtr = csv_writer(w);
    wtr.write_record(SECTORS_HEADER).map_err(write_err)?;
    for (prefix, sector) in map.rules() {
        wtr.write_record([prefix, sector.slug()]).map_err(write_err)?;
    }
    wtr.flush().map_err(write_err)
}

pub fn write_distances<W: Write>(w: W, table: &DistanceTable) -> Result<()> {
    let mut wtr = csv_writer(w);
    wtr.write_record(DISTANCES_HEADER).map_err(write_err)?;
    for (a, b, km) in table.static_pairs() {
        wtr.write_record([a, b, &km.to_string()]).map_err(write_err)?;
    }
    wtr.flush().map_err(write_err)
}

pub fn write_remoteness<W: Write>(w: W, indices: &[RemotenessIndex]) -> Result<()> {
    let mut wtr = csv_writer(w);
    wtr.write_record(REMOTENESS_HEADER).map_err(write_err)?;
    for r in indices {
        wtr.write_record([r.country.clone(), r.year.to_string(), r.r.to_string()])
            .map_err(write_err)?;
    }
    wtr.flush().map_err(write_err)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationLevel {
    YearCountry,
    YearCountrySector,
    YearCountryCn8,
}

/// Flow value summed over one (year, destination, key) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatedFlow {
    pub year: i32,
    pub destination: String,
    pub key: CellKey,
    pub value: Money,
    pub n_records: usize,
}

/// Sums flows into cells, ordered by (year, destination, key). Zero cells are kept.
///
/// `YearCountrySector` needs `sectors`; an unmapped code fails with `NoSectorMatch`.
pub fn aggregate(
    flows: &[TradeFlowRecord],
    level: AggregationLevel,
    sectors: Option<&SectorMap>,
) -> Result<Vec<AggregatedFlow>> {
    let mut cells: BTreeMap<(i32, String, CellKey), (Money, usize)> = BTreeMap::new();
    for f in flows {
        let key = match level {
            AggregationLevel::YearCountry => CellKey::Total,
            AggregationLevel::YearCountryCn8 => CellKey::Cn8(f.cn8.clone()),
            AggregationLevel::YearCountrySector => {
                let map = sectors.ok_or_else(|| {
                    GravityError::InvalidSpec("sector aggregation requires a sector map".into())
                })?;
                CellKey::Sector(sector_of(&f.cn8, map)?)
            }
        };
        let slot = cells
            .entry((f.year, f.destination.clone(), key))
            .or_insert((Money::ZERO, 0));
        slot.0 += f.value;
        slot.1 += 1;
    }
    Ok(cells
        .into_iter()
        .map(|((year, destination, key), (value, n_records))| AggregatedFlow {
            year,
            destination,
            key,
            value,
            n_records,
        })
        .collect())
}

/// Number of records that share a (year, destination, cn8) key with an earlier record.
pub fn duplicate_flow_keys(flows: &[TradeFlowRecord]) -> usize {
    let mut seen = BTreeSet::new();
    flows
        .iter()
        .filter(|f| !seen.insert((f.year, f.destination.as_str(), f.cn8.as_str())))
        .count()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeReport {
    pub n_flows_read: usize,
    pub n_attrs_read: usize,
    pub n_cells: usize,
    pub n_matched: usize,
    pub n_dropped_no_attrs: usize,
    pub n_clamped: usize,
    pub duplicate_keys: usize,
}

impl std::fmt::Display for MergeReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "flows read:            {}", self.n_flows_read)?;
        writeln!(f, "duplicate flow keys:   {}", self.duplicate_keys)?;
        writeln!(f, "attribute rows read:   {}", self.n_attrs_read)?;
        writeln!(f, "aggregated cells:      {}", self.n_cells)?;
        writeln!(f, "matched observations:  {}", self.n_matched)?;
        writeln!(f, "dropped (no attrs):    {}", self.n_dropped_no_attrs)?;
        write!(f, "religion shares clamped: {}", self.n_clamped)
    }
}

/// Inner join of flow cells with destination-year attributes.
///
/// Cells without attributes are dropped and counted. Zero religion shares are
/// raised to `religion_floor` on matched rows. Output keeps the cell order.
pub fn merge(
    cells: &[AggregatedFlow],
    attrs: &[CountryYearAttributes],
    remoteness: Option<&BTreeMap<i32, f64>>,
    religion_floor: f64,
) -> Result<(Vec<GravityObservation>, MergeReport)> {
    let mut by_key: BTreeMap<(i32, &str), &CountryYearAttributes> = BTreeMap::new();
    for a in attrs {
        if by_key.insert((a.year, a.iso.as_str()), a).is_some() {
            return Err(GravityError::DuplicateAttributeKey {
                iso: a.iso.clone(),
                year: a.year,
            });
        }
    }
    let mut report = MergeReport {
        n_attrs_read: attrs.len(),
        n_cells: cells.len(),
        ..Default::default()
    };
    let mut out = Vec::with_capacity(cells.len());
    for cell in cells {
        let Some(a) = by_key.get(&(cell.year, cell.destination.as_str())) else {
            report.n_dropped_no_attrs += 1;
            continue;
        };
        let mut attrs = (*a).clone();
        if attrs.religion_share <= 0.0 {
            attrs.religion_share = religion_floor;
            report.n_clamped += 1;
        }
        out.push(GravityObservation {
            year: cell.year,
            destination: cell.destination.clone(),
            key: cell.key.clone(),
            value: cell.value,
            attrs,
            remoteness: remoteness.and_then(|r| r.get(&cell.year).copied()),
        });
    }
    report.n_matched = out.len();
    Ok((out, report))
}

/// Which slice of the flows feeds a regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SectorFilter {
    All,
    Only(Sector),
}

impl From<Sector> for SectorFilter {
    fn from(s: Sector) -> Self {
        if s == Sector::AllSectors {
            SectorFilter::All
        } else {
            SectorFilter::Only(s)
        }
    }
}

pub fn filter_sector(
    flows: &[TradeFlowRecord],
    filter: SectorFilter,
    sectors: Option<&SectorMap>,
) -> Result<Vec<TradeFlowRecord>> {
    match filter {
        SectorFilter::All => Ok(flows.to_vec()),
        SectorFilter::Only(target) => {
            let map = sectors.ok_or_else(|| {
                GravityError::InvalidSpec(format!("sector `{target}` requires a sector map"))
            })?;
            let mut out = Vec::new();
            for f in flows {
                if sector_of(&f.cn8, map)? == target {
                    out.push(f.clone());
                }
            }
            Ok(out)
        }
    }
}

/// Adds zero cells for every `universe` cell the transformed flows no longer reach.
pub fn complete_cells(cells: Vec<AggregatedFlow>, universe: &[AggregatedFlow]) -> Vec<AggregatedFlow> {
    let mut map: BTreeMap<(i32, String, CellKey), AggregatedFlow> = cells
        .into_iter()
        .map(|c| ((c.year, c.destination.clone(), c.key.clone()), c))
        .collect();
    for u in universe {
        map.entry((u.year, u.destination.clone(), u.key.clone()))
            .or_insert_with(|| AggregatedFlow {
                value: Money::ZERO,
                n_records: 0,
                ..u.clone()
            });
    }
    map.into_values().collect()
}

/// Sector slice aggregated at `level`. At year x country level every
/// destination-year present in the full flows gets a cell, zero when it buys
/// nothing from the sector.
pub fn sector_cells(
    flows: &[TradeFlowRecord],
    filter: SectorFilter,
    level: AggregationLevel,
    sectors: Option<&SectorMap>,
) -> Result<Vec<AggregatedFlow>> {
    let slice = filter_sector(flows, filter, sectors)?;
    let cells = aggregate(&slice, level, sectors)?;
    if filter == SectorFilter::All || level != AggregationLevel::YearCountry {
        return Ok(cells);
    }
    let universe = aggregate(flows, AggregationLevel::YearCountry, None)?;
    Ok(complete_cells(cells, &universe))
}

/// Remoteness series for one exporter as a year lookup.
pub fn remoteness_by_year(indices: &[RemotenessIndex]) -> BTreeMap<i32, f64> {
    indices.iter().map(|r| (r.year, r.r)).collect()
}

/// All loaded inputs for one run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Bundle {
    pub flows: Vec<TradeFlowRecord>,
    pub attrs: Vec<CountryYearAttributes>,
    pub bilateral: Vec<BilateralTradeRecord>,
    pub tariffs: Vec<TariffLine>,
    pub sectors: Option<SectorMap>,
    pub distances: Option<DistanceTable>,
    pub remoteness: Option<Vec<RemotenessIndex>>,
}

impl Bundle {
    /// Sector slice, aggregation, and join in one step, with a complete report.
    pub fn dataset(
        &self,
        filter: SectorFilter,
        level: AggregationLevel,
        religion_floor: f64,
    ) -> Result<(Vec<GravityObservation>, MergeReport)> {
        build_dataset(
            &self.flows,
            &self.attrs,
            self.sectors.as_ref(),
            self.remoteness.as_deref(),
            filter,
            level,
            religion_floor,
        )
    }
}

pub fn build_dataset(
    flows: &[TradeFlowRecord],
    attrs: &[CountryYearAttributes],
    sectors: Option<&SectorMap>,
    remoteness: Option<&[RemotenessIndex]>,
    filter: SectorFilter,
    level: AggregationLevel,
    religion_floor: f64,
) -> Result<(Vec<GravityObservation>, MergeReport)> {
    let cells = sector_cells(flows, filter, level, sectors)?;
    let lookup = remoteness.map(remoteness_by_year);
    let (obs, mut report) = merge(&cells, attrs, lookup.as_ref(), religion_floor)?;
    report.n_flows_read = flows.len();
    report.duplicate_keys = duplicate_flow_keys(flows);
    Ok((obs, report))
}
