//! Seeded synthetic bundles and brute-force reference computations.
//!
//! Every generator is a pure function of its config. Randomness comes from
//! ChaCha20 with one stream per generator stage, so adding draws to one stage
//! never shifts another.

pub mod oracle;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::datamodel::{
    BilateralTradeRecord, Cn8, CountryYearAttributes, Flags, Hs6, Money, Sector, SectorMap,
    TariffLine, TradeFlowRecord,
};
use crate::design::{attribute_column_value, DesignMatrix};
use crate::error::{GravityError, Result};
use crate::ingest::{self, Bundle};
use crate::remoteness::{exporter_remoteness_series, DistanceTable};

pub use oracle::{oracle_mle_grid, oracle_sandwich};

/// Identifier written into run manifests.
pub const RNG_ALGORITHM: &str = "chacha20/rand_chacha-0.9/stream-per-stage";

pub const GB_LIKE: &str = "GB";
pub const NI_LIKE: &str = "XI";
pub const SYNTH_EXPORTER: &str = "IE";

/// Largest mean (EUR) a draw may have; keeps values inside integer cents.
pub const MAX_MEAN: f64 = 1e14;

const STREAM_FLAGS: u64 = 1;
const STREAM_ATTRS: u64 = 2;
const STREAM_FLOWS: u64 = 3;
const STREAM_GOODS: u64 = 4;
const STREAM_WORLD: u64 = 5;
const STREAM_TARIFFS: u64 = 6;
const STREAM_DESIGN: u64 = 7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseFamily {
    Poisson,
    /// Poisson-gamma mixture with `Var = mu + alpha mu^2`.
    NegBin { alpha: f64 },
    /// `mu * exp(sigma z - sigma^2 / 2)`, so the mean stays `mu`.
    LogNormal { sigma: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttributeRanges {
    pub gdp: (f64, f64),
    pub population: (f64, f64),
    pub area_km2: (f64, f64),
    pub distance_km: (f64, f64),
    pub religion_share: (f64, f64),
}

impl Default for AttributeRanges {
    fn default() -> Self {
        AttributeRanges {
            gdp: (1e9, 2e13),
            population: (1e5, 1.4e9),
            area_km2: (1e2, 1.7e7),
            distance_km: (300.0, 19_000.0),
            religion_share: (0.0, 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    /// Destinations, including the GB-like and NI-like ones.
    pub n_countries: usize,
    pub first_year: i32,
    pub last_year: i32,
    pub seed: u64,
    /// Coefficients keyed by design column name.
    pub beta_true: BTreeMap<String, f64>,
    pub family: NoiseFamily,
    pub ranges: AttributeRanges,
    pub goods_per_sector: usize,
    pub with_volumes: bool,
    pub time_origin: i32,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let beta_true = [
            ("intercept", -6.0),
            ("log_gdp", 0.9),
            ("log_distance", -0.7),
            ("log_population", 0.1),
            ("log_area", -0.05),
            ("log_religion", 0.05),
            ("log_time", 0.1),
            ("gb", 0.5),
            ("ni", -0.6),
            ("gatt_wto", 0.2),
            ("english", 0.4),
            ("eu", 0.3),
            ("euro", 0.1),
            ("legal", 0.1),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_owned(), v))
        .collect();
        SynthConfig {
            n_countries: 60,
            first_year: 2012,
            last_year: 2016,
            seed: 1,
            beta_true,
            family: NoiseFamily::Poisson,
            ranges: AttributeRanges::default(),
            goods_per_sector: 2,
            with_volumes: true,
            time_origin: 1992,
        }
    }
}

impl SynthConfig {
    pub fn years(&self) -> std::ops::RangeInclusive<i32> {
        self.first_year..=self.last_year
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(GravityError::InvalidSpec(format!("synth config: {m}")));
        if self.n_countries < 2 {
            return bad("n_countries must be at least 2");
        }
        if self.first_year > self.last_year {
            return bad("first_year after last_year");
        }
        if self.first_year <= self.time_origin {
            return bad("years must follow time_origin");
        }
        if self.goods_per_sector == 0 || self.goods_per_sector > 99 {
            return bad("goods_per_sector must be in 1..=99");
        }
        let r = &self.ranges;
        for (name, (lo, hi)) in [
            ("gdp", r.gdp),
            ("population", r.population),
            ("area_km2", r.area_km2),
            ("distance_km", r.distance_km),
        ] {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return bad(&format!("{name} range must be positive and ordered"));
            }
        }
        let (lo, hi) = r.religion_share;
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return bad("religion_share range must lie in [0, 1]");
        }
        match self.family {
            NoiseFamily::NegBin { alpha } if alpha.is_nan() || alpha < 0.0 => bad("alpha must be non-negative"),
            NoiseFamily::LogNormal { sigma } if sigma.is_nan() || sigma < 0.0 => bad("sigma must be non-negative"),
            _ => Ok(()),
        }
    }

    fn rng(&self, stream: u64) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

/// Destination codes: GB-like, NI-like, then `AAA`, `AAB`, ...
pub fn country_codes(n: usize) -> Vec<String> {
    let mut codes = vec![GB_LIKE.to_owned(), NI_LIKE.to_owned()];
    for i in 0..n.saturating_sub(2) {
        let a = (b'A' + (i / 26 / 26 % 26) as u8) as char;
        let b = (b'A' + (i / 26 % 26) as u8) as char;
        let c = (b'A' + (i % 26) as u8) as char;
        codes.push(format!("{a}{b}{c}"));
    }
    codes.truncate(n);
    codes
}

fn log_uniform<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp()
}

fn jitter<R: Rng>(rng: &mut R, base: f64, rel: f64, (lo, hi): (f64, f64)) -> f64 {
    (base * (1.0 + rel * (2.0 * rng.random::<f64>() - 1.0))).clamp(lo, hi)
}

/// Country-year attributes. Flags are fixed per country; GB-like and NI-like
/// rows carry `eu = 1` in every year. Continuous covariates drift by a few
/// percent a year within the configured ranges.
pub fn generate_attributes(config: &SynthConfig) -> Result<Vec<CountryYearAttributes>> {
    config.validate()?;
    let codes = country_codes(config.n_countries);
    let r = &config.ranges;

    let mut frng = config.rng(STREAM_FLAGS);
    let flags: Vec<Flags> = codes
        .iter()
        .map(|iso| {
            let uk = iso == GB_LIKE || iso == NI_LIKE;
            let eu = uk || frng.random_bool(0.4);
            Flags {
                gb: iso == GB_LIKE,
                ni: iso == NI_LIKE,
                gatt_wto: uk || frng.random_bool(0.85),
                english: uk || frng.random_bool(0.25),
                eu,
                euro: !uk && eu && frng.random_bool(0.7),
                legal: uk || frng.random_bool(0.3),
            }
        })
        .collect();

    let mut arng = config.rng(STREAM_ATTRS);
    let bases: Vec<[f64; 5]> = codes
        .iter()
        .map(|_| {
            [
                log_uniform(&mut arng, r.gdp),
                log_uniform(&mut arng, r.population),
                log_uniform(&mut arng, r.area_km2),
                log_uniform(&mut arng, r.distance_km),
                r.religion_share.0 + arng.random::<f64>() * (r.religion_share.1 - r.religion_share.0),
            ]
        })
        .collect();

    let mut out = Vec::with_capacity(codes.len() * config.years().count());
    for year in config.years() {
        for (i, iso) in codes.iter().enumerate() {
            let b = bases[i];
            out.push(CountryYearAttributes {
                iso: iso.clone(),
                year,
                gdp: jitter(&mut arng, b[0], 0.05, r.gdp),
                population: jitter(&mut arng, b[1], 0.02, r.population),
                area_km2: jitter(&mut arng, b[2], 0.01, r.area_km2),
                distance_km: jitter(&mut arng, b[3], 0.01, r.distance_km),
                religion_share: jitter(&mut arng, b[4], 0.02, r.religion_share),
                flags: flags[i],
            });
        }
    }
    Ok(out)
}

/// One draw with mean `mu` from `family`.
pub fn draw_response<R: Rng>(mu: f64, family: NoiseFamily, rng: &mut R) -> Result<f64> {
    if mu <= 0.0 {
        return Ok(0.0);
    }
    let poisson = |lambda: f64, rng: &mut R| -> Result<f64> {
        if lambda <= 0.0 {
            return Ok(0.0);
        }
        Poisson::new(lambda)
            .map(|d| d.sample(rng))
            .map_err(|e| GravityError::Internal(format!("poisson({lambda}): {e}")))
    };
    match family {
        NoiseFamily::Poisson => poisson(mu, rng),
        NoiseFamily::NegBin { alpha: 0.0 } => poisson(mu, rng),
        NoiseFamily::NegBin { alpha } => {
            let g = Gamma::new(1.0 / alpha, alpha)
                .map_err(|e| GravityError::Internal(format!("gamma({alpha}): {e}")))?;
            let scale: f64 = g.sample(rng);
            poisson(mu * scale, rng)
        }
        NoiseFamily::LogNormal { sigma } => {
            if sigma == 0.0 {
                return Ok(mu);
            }
            let z: f64 = StandardNormal.sample(rng);
            Ok(mu * (sigma * z - 0.5 * sigma * sigma).exp())
        }
    }
}

/// `exp(x . beta_true)` for one attribute row.
pub fn mean_of(config: &SynthConfig, attrs: &CountryYearAttributes) -> Result<f64> {
    let mut eta = 0.0;
    for (name, b) in &config.beta_true {
        let v = attribute_column_value(name, attrs, config.time_origin).ok_or_else(|| {
            GravityError::InvalidSpec(format!("beta_true names unknown column `{name}`"))
        })?;
        eta += b * v;
    }
    Ok(eta.exp())
}

/// Goods catalogue: `goods_per_sector` CN8 codes under a two-digit chapter per sector.
pub fn goods(config: &SynthConfig) -> Vec<(Cn8, Sector)> {
    let mut out = Vec::new();
    for (s, sector) in Sector::MAPPED.into_iter().enumerate() {
        for k in 0..config.goods_per_sector {
            let code = format!("{}{:02}1000", sector_chapter(s), k + 1);
            out.push((Cn8::new(&code).expect("well-formed synthetic code"), sector));
        }
    }
    out
}

fn sector_chapter(index: usize) -> String {
    format!("{:02}", 10 * (index + 1))
}

pub fn generate_sector_map() -> SectorMap {
    let mut map = SectorMap::new();
    for (s, sector) in Sector::MAPPED.into_iter().enumerate() {
        map.insert(&sector_chapter(s), sector)
            .expect("well-formed synthetic prefix");
    }
    map
}

/// CN8 flows whose destination-year totals follow the configured family
/// around `exp(x . beta_true)`.
///
/// Each destination splits its total across goods with fixed shares; about
/// one good in seven is never shipped to a given destination. The GB-like and
/// NI-like destinations take every good. With two or more goods per sector
/// the first good of each sector has no EU-27 buyer, so a market-substitution
/// scenario leaves some UK trade in every sector. Totals are
/// split in integer cents by largest remainder, so aggregation returns the
/// drawn total exactly.
pub fn generate_flows(attrs: &[CountryYearAttributes], config: &SynthConfig) -> Result<Vec<TradeFlowRecord>> {
    config.validate()?;
    let catalogue = goods(config);
    let per_sector = config.goods_per_sector;
    let mut grng = config.rng(STREAM_GOODS);
    let mut shares: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    let mut prices: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    let base_price: Vec<f64> = catalogue.iter().map(|_| 1.0 + 99.0 * grng.random::<f64>()).collect();
    for a in attrs {
        if shares.contains_key(a.iso.as_str()) {
            continue;
        }
        let uk = a.iso == GB_LIKE || a.iso == NI_LIKE;
        let eu27 = a.flags.eu && !uk;
        let mut w: Vec<f64> = catalogue
            .iter()
            .enumerate()
            .map(|(g, _)| {
                let skip = grng.random_bool(1.0 / 7.0);
                if (skip && !uk) || (eu27 && per_sector > 1 && g % per_sector == 0) {
                    0.0
                } else {
                    0.2 + grng.random::<f64>()
                }
            })
            .collect();
        if w.iter().all(|&x| x == 0.0) {
            w[0] = 1.0;
        }
        let total: f64 = w.iter().sum();
        shares.insert(&a.iso, w.into_iter().map(|x| x / total).collect());
        prices.insert(
            &a.iso,
            base_price.iter().map(|p| p * (0.8 + 0.4 * grng.random::<f64>())).collect(),
        );
    }

    let mut rng = config.rng(STREAM_FLOWS);
    let mut out = Vec::new();
    for (row, a) in attrs.iter().enumerate() {
        let mu = mean_of(config, a)?;
        if !mu.is_finite() || mu > MAX_MEAN {
            return Err(GravityError::MeanOverflow(row));
        }
        let y = draw_response(mu, config.family, &mut rng)?;
        let cents = split_cents((y * 100.0).round() as i64, &shares[a.iso.as_str()]);
        for (g, (cn8, _)) in catalogue.iter().enumerate() {
            if shares[a.iso.as_str()][g] == 0.0 {
                continue;
            }
            let value = Money(cents[g]);
            let volume = config
                .with_volumes
                .then(|| value.euros() / prices[a.iso.as_str()][g]);
            out.push(TradeFlowRecord {
                year: a.year,
                destination: a.iso.clone(),
                cn8: cn8.clone(),
                value,
                volume,
            });
        }
    }
    Ok(out)
}

/// Largest-remainder split of `total` cents by `shares` (summing to 1).
fn split_cents(total: i64, shares: &[f64]) -> Vec<i64> {
    let raw: Vec<f64> = shares.iter().map(|s| s * total as f64).collect();
    let mut parts: Vec<i64> = raw.iter().map(|r| r.floor() as i64).collect();
    let mut rest = total - parts.iter().sum::<i64>();
    let mut order: Vec<usize> = (0..shares.len()).filter(|&i| shares[i] > 0.0).collect();
    order.sort_by(|&a, &b| {
        let fa = raw[a] - raw[a].floor();
        let fb = raw[b] - raw[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if rest <= 0 {
            break;
        }
        parts[i] += 1;
        rest -= 1;
    }
    parts
}

/// Ad-valorem rates for every HS6 heading in the catalogue; about a fifth are zero.
pub fn generate_tariffs(config: &SynthConfig) -> Vec<TariffLine> {
    let mut rng = config.rng(STREAM_TARIFFS);
    let mut lines: BTreeMap<Hs6, f64> = BTreeMap::new();
    for (cn8, _) in goods(config) {
        let rate = if rng.random_bool(0.2) {
            0.0
        } else {
            (rng.random::<f64>() * 0.25 * 1e4).round() / 1e4
        };
        lines.entry(cn8.hs6()).or_insert(rate);
    }
    lines.into_iter().map(|(hs6, rate)| TariffLine { hs6, rate }).collect()
}

/// Planar positions: the exporter at the origin, each destination at its
/// first-year distance in a random direction.
fn positions(attrs: &[CountryYearAttributes], config: &SynthConfig) -> BTreeMap<String, (f64, f64)> {
    let mut rng = config.rng(STREAM_WORLD);
    let mut pos = BTreeMap::new();
    pos.insert(SYNTH_EXPORTER.to_owned(), (0.0, 0.0));
    for a in attrs.iter().filter(|a| a.year == config.first_year) {
        let theta = rng.random::<f64>() * std::f64::consts::TAU;
        pos.insert(a.iso.clone(), (a.distance_km * theta.cos(), a.distance_km * theta.sin()));
    }
    pos
}

/// Static great-circle stand-in: Euclidean distance between planar positions,
/// floored at 50 km.
pub fn generate_distances(attrs: &[CountryYearAttributes], config: &SynthConfig) -> DistanceTable {
    let pos = positions(attrs, config);
    let mut table = DistanceTable::default();
    let codes: Vec<&String> = pos.keys().collect();
    for (i, a) in codes.iter().enumerate() {
        for b in &codes[i + 1..] {
            let (pa, pb) = (pos[*a], pos[*b]);
            let d = ((pa.0 - pb.0).powi(2) + (pa.1 - pb.1).powi(2)).sqrt().max(50.0);
            table
                .insert(None, a, b, d)
                .expect("pairs are visited once");
        }
    }
    table
}

/// World trade among all destinations and the exporter: a frictionless
/// gravity flow `gdp_a gdp_b / distance` with lognormal noise.
pub fn generate_bilateral(
    attrs: &[CountryYearAttributes],
    distances: &DistanceTable,
    config: &SynthConfig,
) -> Vec<BilateralTradeRecord> {
    let mut rng = config.rng(STREAM_WORLD);
    rng.set_word_pos(1 << 20);
    let exporter_gdp = 3e11;
    let mut out = Vec::new();
    for year in config.years() {
        let mut gdp: BTreeMap<&str, f64> = attrs
            .iter()
            .filter(|a| a.year == year)
            .map(|a| (a.iso.as_str(), a.gdp))
            .collect();
        gdp.insert(SYNTH_EXPORTER, exporter_gdp);
        for (&a, &ga) in &gdp {
            for (&b, &gb) in &gdp {
                if a == b {
                    continue;
                }
                let d = distances.get(Some(year), a, b).unwrap_or(1000.0);
                let z: f64 = StandardNormal.sample(&mut rng);
                let v = ga * gb / d / 1e12 * (0.3 * z).exp();
                out.push(BilateralTradeRecord {
                    year,
                    reporter: a.to_owned(),
                    partner: b.to_owned(),
                    flow_value: (v * 1e3).round() / 1e3,
                });
            }
        }
    }
    out
}

/// Complete self-consistent bundle for `config`.
pub fn generate_bundle(config: &SynthConfig) -> Result<Bundle> {
    let attrs = generate_attributes(config)?;
    let flows = generate_flows(&attrs, config)?;
    let distances = generate_distances(&attrs, config);
    let bilateral = generate_bilateral(&attrs, &distances, config);
    let years: Vec<i32> = config.years().collect();
    let remoteness = exporter_remoteness_series(SYNTH_EXPORTER, &years, &bilateral, &distances)?;
    Ok(Bundle {
        flows,
        attrs,
        bilateral,
        tariffs: generate_tariffs(config),
        sectors: Some(generate_sector_map()),
        distances: Some(distances),
        remoteness: Some(remoteness),
    })
}

/// Small bundle for substitution checks. For every UK-bound good there is an
/// EU-27 twin in the same CN8 code, except for a handful of goods only the UK
/// buys (these fall back to the tariff) and a handful shipped without volumes.
pub fn twin_goods_bundle(seed: u64) -> Bundle {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_GOODS);
    let dests: [(&str, Flags); 5] = [
        (GB_LIKE, Flags { gb: true, eu: true, gatt_wto: true, english: true, legal: true, ..Flags::default() }),
        (NI_LIKE, Flags { ni: true, eu: true, gatt_wto: true, english: true, legal: true, ..Flags::default() }),
        ("DE", Flags { eu: true, euro: true, gatt_wto: true, ..Flags::default() }),
        ("FR", Flags { eu: true, euro: true, gatt_wto: true, ..Flags::default() }),
        ("US", Flags { gatt_wto: true, english: true, legal: true, ..Flags::default() }),
    ];
    let years = [2015, 2016];
    let mut attrs = Vec::new();
    for &year in &years {
        for (iso, flags) in &dests {
            attrs.push(CountryYearAttributes {
                iso: (*iso).to_owned(),
                year,
                gdp: 1e11 * (1.0 + rng.random::<f64>()),
                population: 1e7 * (1.0 + rng.random::<f64>()),
                area_km2: 1e5 * (1.0 + rng.random::<f64>()),
                distance_km: 500.0 + 5000.0 * rng.random::<f64>(),
                religion_share: rng.random::<f64>(),
                flags: *flags,
            });
        }
    }

    let mut flows = Vec::new();
    let mut tariffs = Vec::new();
    for g in 0..24u32 {
        let code = format!("{:02}{:02}{:04}", 10 * (g % 8 + 1), g / 8 + 1, 1000 + g);
        let cn8 = Cn8::new(&code).expect("well-formed synthetic code");
        tariffs.push(TariffLine {
            hs6: cn8.hs6(),
            rate: (rng.random::<f64>() * 0.2 * 1e4).round() / 1e4,
        });
        let uk_only = g % 6 == 5;
        let no_volume = g % 6 == 4;
        for &year in &years {
            for (iso, _) in &dests {
                let twin = !matches!(*iso, GB_LIKE | NI_LIKE);
                if twin && uk_only && *iso != "US" {
                    continue;
                }
                let value = Money(rng.random_range(10_000..5_000_000));
                let price = 2.0 + 50.0 * rng.random::<f64>();
                let volume = (!(no_volume && !twin)).then(|| value.euros() / price);
                flows.push(TradeFlowRecord {
                    year,
                    destination: (*iso).to_owned(),
                    cn8: cn8.clone(),
                    value,
                    volume,
                });
            }
        }
    }
    tariffs.sort_by(|a, b| a.hs6.cmp(&b.hs6));
    tariffs.dedup_by(|a, b| a.hs6 == b.hs6);
    Bundle {
        flows,
        attrs,
        tariffs,
        sectors: Some(generate_sector_map()),
        ..Bundle::default()
    }
}

/// File names used for bundle directories.
pub mod files {
    pub const FLOWS: &str = "flows.csv";
    pub const ATTRS: &str = "attrs.csv";
    pub const BILATERAL: &str = "bilateral.csv";
    pub const TARIFFS: &str = "tariffs.csv";
    pub const SECTORS: &str = "sectors.csv";
    pub const DISTANCES: &str = "distances.csv";
    pub const REMOTENESS: &str = "remoteness.csv";
}

/// Writes every present part of `bundle` into `dir` using the ingest schemas.
pub fn write_bundle(bundle: &Bundle, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| GravityError::io(dir, e))?;
    let open = |name: &str| -> Result<BufWriter<File>> {
        let p = dir.join(name);
        File::create(&p).map(BufWriter::new).map_err(|e| GravityError::io(&p, e))
    };
    ingest::write_trade_flows(open(files::FLOWS)?, &bundle.flows)?;
    ingest::write_attributes(open(files::ATTRS)?, &bundle.attrs)?;
    if !bundle.bilateral.is_empty() {
        ingest::write_bilateral(open(files::BILATERAL)?, &bundle.bilateral)?;
    }
    if !bundle.tariffs.is_empty() {
        ingest::write_tariffs(open(files::TARIFFS)?, &bundle.tariffs)?;
    }
    if let Some(map) = &bundle.sectors {
        ingest::write_sector_map(open(files::SECTORS)?, map)?;
    }
    if let Some(d) = &bundle.distances {
        ingest::write_distances(open(files::DISTANCES)?, d)?;
    }
    if let Some(r) = &bundle.remoteness {
        ingest::write_remoteness(open(files::REMOTENESS)?, r)?;
    }
    Ok(())
}

/// Design-level sample: an intercept plus `beta.len() - 1` standard-normal
/// regressors scaled by 0.5, responses drawn around `exp(x . beta)`, rows
/// assigned round-robin to `n_clusters` clusters.
pub fn design_sample(
    n: usize,
    beta: &[f64],
    n_clusters: usize,
    family: NoiseFamily,
    seed: u64,
) -> Result<DesignMatrix> {
    let p = beta.len();
    if p == 0 || n_clusters == 0 {
        return Err(GravityError::InvalidSpec("design sample needs coefficients and clusters".into()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_DESIGN);
    let mut x = DMatrix::<f64>::zeros(n, p);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        x[(i, 0)] = 1.0;
        for j in 1..p {
            let z: f64 = StandardNormal.sample(&mut rng);
            x[(i, j)] = 0.5 * z;
        }
        let eta: f64 = (0..p).map(|j| x[(i, j)] * beta[j]).sum();
        let mu = eta.exp();
        if !mu.is_finite() || mu > MAX_MEAN {
            return Err(GravityError::MeanOverflow(i));
        }
        y.push(draw_response(mu, family, &mut rng)?);
    }
    let mut names = vec!["intercept".to_owned()];
    names.extend((1..p).map(|j| format!("x{j}")));
    let clusters = (0..n).map(|i| format!("g{:03}", i % n_clusters)).collect();
    DesignMatrix::from_parts(y, x, names, clusters)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{aggregate, AggregationLevel};

    fn small() -> SynthConfig {
        SynthConfig {
            n_countries: 3,
            first_year: 2015,
            last_year: 2016,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn attributes_are_deterministic() {
        let c = SynthConfig::default();
        assert_eq!(generate_attributes(&c).unwrap(), generate_attributes(&c).unwrap());
        let other = SynthConfig { seed: 2, ..c.clone() };
        assert_ne!(generate_attributes(&c).unwrap(), generate_attributes(&other).unwrap());
    }

    #[test]
    fn attribute_row_count_and_uk_rows() {
        let attrs = generate_attributes(&small()).unwrap();
        assert_eq!(attrs.len(), 6);
        for a in &attrs {
            if a.iso == GB_LIKE || a.iso == NI_LIKE {
                assert!(a.flags.eu);
            }
        }
        assert!(attrs.iter().any(|a| a.flags.gb) && attrs.iter().any(|a| a.flags.ni));
    }

    #[test]
    fn attributes_within_ranges() {
        let c = SynthConfig::default();
        let r = &c.ranges;
        let inside = |v: f64, (lo, hi): (f64, f64)| lo <= v && v <= hi;
        for a in generate_attributes(&c).unwrap() {
            assert!(inside(a.gdp, r.gdp));
            assert!(inside(a.population, r.population));
            assert!(inside(a.area_km2, r.area_km2));
            assert!(inside(a.distance_km, r.distance_km));
            assert!(inside(a.religion_share, r.religion_share));
        }
    }

    #[test]
    fn zero_beta_gives_unit_means() {
        let c = SynthConfig {
            beta_true: [("intercept".to_owned(), 0.0), ("log_gdp".to_owned(), 0.0)].into(),
            ..small()
        };
        for a in generate_attributes(&c).unwrap() {
            assert_eq!(mean_of(&c, &a).unwrap(), 1.0);
        }
    }

    #[test]
    fn lognormal_without_noise_is_exact() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for mu in [0.5, 1.0, 1234.5678] {
            assert_eq!(draw_response(mu, NoiseFamily::LogNormal { sigma: 0.0 }, &mut rng).unwrap(), mu);
        }
    }

    #[test]
    fn poisson_sample_mean() {
        let d = design_sample(200, &[1.0, 0.5], 20, NoiseFamily::Poisson, 42).unwrap();
        let mu: f64 = (0..200).map(|i| (d.x[(i, 0)] + 0.5 * d.x[(i, 1)]).exp()).sum();
        let y: f64 = d.y.iter().sum();
        assert!((y / mu - 1.0).abs() < 0.05, "{y} vs {mu}");
    }

    #[test]
    fn overflow_detected() {
        let c = SynthConfig {
            beta_true: [("intercept".to_owned(), 60.0)].into(),
            ..small()
        };
        let attrs = generate_attributes(&c).unwrap();
        assert!(matches!(generate_flows(&attrs, &c), Err(GravityError::MeanOverflow(0))));
    }

    #[test]
    fn unknown_beta_name_rejected() {
        let c = SynthConfig {
            beta_true: [("log_nonsense".to_owned(), 1.0)].into(),
            ..small()
        };
        let attrs = generate_attributes(&c).unwrap();
        assert!(matches!(generate_flows(&attrs, &c), Err(GravityError::InvalidSpec(_))));
    }

    #[test]
    fn split_preserves_totals() {
        let c = SynthConfig::default();
        let attrs = generate_attributes(&c).unwrap();
        let flows = generate_flows(&attrs, &c).unwrap();
        let cells = aggregate(&flows, AggregationLevel::YearCountry, None).unwrap();
        assert_eq!(cells.len(), attrs.len());
        assert_eq!(split_cents(1001, &[0.5, 0.0, 0.5]).iter().sum::<i64>(), 1001);
        assert_eq!(split_cents(7, &[1.0 / 3.0; 3]), vec![3, 2, 2]);
    }

    #[test]
    fn bundle_is_self_consistent() {
        let b = generate_bundle(&small()).unwrap();
        let map = b.sectors.as_ref().unwrap();
        for f in &b.flows {
            crate::datamodel::sector_of(&f.cn8, map).unwrap();
        }
        assert_eq!(b.remoteness.as_ref().unwrap().len(), 2);
        let schedule = crate::scenario::TariffSchedule::new(&b.tariffs).unwrap();
        assert!(b.flows.iter().all(|f| schedule.rate(&f.cn8.hs6()).is_some()));
    }

    #[test]
    fn twin_bundle_shape() {
        let b = twin_goods_bundle(5);
        assert_eq!(b, twin_goods_bundle(5));
        assert!(b.flows.iter().any(|f| f.destination == GB_LIKE && f.volume.is_none()));
    }
}
