//! Value types shared by every stage of the pipeline.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{GravityError, Result};

/// Nominal euro amount held as integer cents so aggregation is exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct Money(pub i64);

impl Money {
    pub const ZERO: Money = Money(0);

    pub fn from_cents(cents: i64) -> Self {
        Money(cents)
    }

    pub fn cents(self) -> i64 {
        self.0
    }

    pub fn euros(self) -> f64 {
        self.0 as f64 / 100.0
    }

    /// Parses a plain decimal euro amount (`"1000"`, `"12.5"`, `"0.07"`).
    /// At most two fractional digits; no sign, exponent or separators.
    pub fn parse_euros(text: &str) -> Option<Money> {
        let text = text.trim();
        let (whole, frac) = match text.split_once('.') {
            Some((w, f)) => (w, f),
            None => (text, ""),
        };
        if whole.is_empty() && frac.is_empty() {
            return None;
        }
        if frac.len() > 2
            || !whole.bytes().all(|b| b.is_ascii_digit())
            || !frac.bytes().all(|b| b.is_ascii_digit())
        {
            return None;
        }
        let whole: i64 = if whole.is_empty() { 0 } else { whole.parse().ok()? };
        let mut frac_cents: i64 = if frac.is_empty() { 0 } else { frac.parse().ok()? };
        if frac.len() == 1 {
            frac_cents *= 10;
        }
        whole.checked_mul(100)?.checked_add(frac_cents).map(Money)
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        let (whole, frac) = (abs / 100, abs % 100);
        if frac == 0 {
            write!(f, "{sign}{whole}")
        } else {
            write!(f, "{sign}{whole}.{frac:02}")
        }
    }
}

impl std::ops::Add for Money {
    type Output = Money;
    fn add(self, rhs: Money) -> Money {
        Money(self.0 + rhs.0)
    }
}

impl std::ops::AddAssign for Money {
    fn add_assign(&mut self, rhs: Money) {
        self.0 += rhs.0;
    }
}

impl std::iter::Sum for Money {
    fn sum<I: Iterator<Item = Money>>(iter: I) -> Money {
        iter.fold(Money::ZERO, |a, b| a + b)
    }
}

/// Country code as supplied by the data (ISO-3166 alpha-2/3, upper case).
pub type CountryCode = String;

pub fn is_country_code(code: &str) -> bool {
    (2..=3).contains(&code.len()) && code.bytes().all(|b| b.is_ascii_uppercase())
}

/// 8-digit Combined Nomenclature code.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Cn8(String);

impl Cn8 {
    pub fn new(code: &str) -> Option<Cn8> {
        (code.len() == 8 && code.bytes().all(|b| b.is_ascii_digit())).then(|| Cn8(code.to_owned()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn hs6(&self) -> Hs6 {
        Hs6(self.0[..6].to_owned())
    }
}

impl TryFrom<String> for Cn8 {
    type Error = String;
    fn try_from(s: String) -> std::result::Result<Self, String> {
        Cn8::new(&s).ok_or_else(|| format!("not an 8-digit code: {s}"))
    }
}

impl From<Cn8> for String {
    fn from(c: Cn8) -> String {
        c.0
    }
}

impl fmt::Display for Cn8 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// 6-digit Harmonised System code (the leading six digits of a CN8 code).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Hs6(String);

impl Hs6 {
    pub fn new(code: &str) -> Option<Hs6> {
        (code.len() == 6 && code.bytes().all(|b| b.is_ascii_digit())).then(|| Hs6(code.to_owned()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for Hs6 {
    type Error = String;
    fn try_from(s: String) -> std::result::Result<Self, String> {
        Hs6::new(&s).ok_or_else(|| format!("not a 6-digit code: {s}"))
    }
}

impl From<Hs6> for String {
    fn from(c: Hs6) -> String {
        c.0
    }
}

impl fmt::Display for Hs6 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// One export observation from the single exporter under study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeFlowRecord {
    pub year: i32,
    pub destination: CountryCode,
    pub cn8: Cn8,
    pub value: Money,
    pub volume: Option<f64>,
}

/// The seven destination indicators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    Gb,
    Ni,
    GattWto,
    English,
    Eu,
    Euro,
    Legal,
}

impl Flag {
    pub const ALL: [Flag; 7] = [
        Flag::Gb,
        Flag::Ni,
        Flag::GattWto,
        Flag::English,
        Flag::Eu,
        Flag::Euro,
        Flag::Legal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Flag::Gb => "gb",
            Flag::Ni => "ni",
            Flag::GattWto => "gatt_wto",
            Flag::English => "english",
            Flag::Eu => "eu",
            Flag::Euro => "euro",
            Flag::Legal => "legal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Flags {
    pub gb: bool,
    pub ni: bool,
    pub gatt_wto: bool,
    pub english: bool,
    pub eu: bool,
    pub euro: bool,
    pub legal: bool,
}

impl Flags {
    pub fn get(&self, flag: Flag) -> bool {
        match flag {
            Flag::Gb => self.gb,
            Flag::Ni => self.ni,
            Flag::GattWto => self.gatt_wto,
            Flag::English => self.english,
            Flag::Eu => self.eu,
            Flag::Euro => self.euro,
            Flag::Legal => self.legal,
        }
    }

    pub fn set(&mut self, flag: Flag, on: bool) {
        let slot = match flag {
            Flag::Gb => &mut self.gb,
            Flag::Ni => &mut self.ni,
            Flag::GattWto => &mut self.gatt_wto,
            Flag::English => &mut self.english,
            Flag::Eu => &mut self.eu,
            Flag::Euro => &mut self.euro,
            Flag::Legal => &mut self.legal,
        };
        *slot = on;
    }

    /// UK destinations (Great Britain or Northern Ireland).
    pub fn is_uk(&self) -> bool {
        self.gb || self.ni
    }
}

/// Continuous gravity covariates, each entering under a natural log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    Gdp,
    Distance,
    Population,
    Area,
    Religion,
}

impl Attribute {
    pub fn name(self) -> &'static str {
        match self {
            Attribute::Gdp => "gdp",
            Attribute::Distance => "distance",
            Attribute::Population => "population",
            Attribute::Area => "area",
            Attribute::Religion => "religion",
        }
    }
}

/// Gravity covariates and indicators for one destination-year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountryYearAttributes {
    pub iso: CountryCode,
    pub year: i32,
    pub gdp: f64,
    pub population: f64,
    pub area_km2: f64,
    pub distance_km: f64,
    pub religion_share: f64,
    pub flags: Flags,
}

impl CountryYearAttributes {
    pub fn attribute(&self, attr: Attribute) -> f64 {
        match attr {
            Attribute::Gdp => self.gdp,
            Attribute::Distance => self.distance_km,
            Attribute::Population => self.population,
            Attribute::Area => self.area_km2,
            Attribute::Religion => self.religion_share,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BilateralTradeRecord {
    pub year: i32,
    pub reporter: CountryCode,
    pub partner: CountryCode,
    pub flow_value: f64,
}

/// Ad-valorem rate for one HS6 heading, as a fraction (0.1 = 10%).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TariffLine {
    pub hs6: Hs6,
    pub rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Sector {
    Agriculture,
    Mining,
    FoodBeverage,
    Textiles,
    WoodPaper,
    ChemicalsPharma,
    MetalsMachinery,
    OtherProducts,
    /// Union of all sectors; never a mapping target.
    AllSectors,
}

impl Sector {
    pub const MAPPED: [Sector; 8] = [
        Sector::Agriculture,
        Sector::Mining,
        Sector::FoodBeverage,
        Sector::Textiles,
        Sector::WoodPaper,
        Sector::ChemicalsPharma,
        Sector::MetalsMachinery,
        Sector::OtherProducts,
    ];

    pub fn slug(self) -> &'static str {
        match self {
            Sector::Agriculture => "Agriculture",
            Sector::Mining => "Mining",
            Sector::FoodBeverage => "FoodBeverage",
            Sector::Textiles => "Textiles",
            Sector::WoodPaper => "WoodPaper",
            Sector::ChemicalsPharma => "ChemicalsPharma",
            Sector::MetalsMachinery => "MetalsMachinery",
            Sector::OtherProducts => "OtherProducts",
            Sector::AllSectors => "AllSectors",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Sector::Agriculture => "Agriculture/Forestry/Fishing",
            Sector::Mining => "Mining/Quarrying",
            Sector::FoodBeverage => "Food/Beverage",
            Sector::Textiles => "Textiles",
            Sector::WoodPaper => "Wood/Paper",
            Sector::ChemicalsPharma => "Chemicals/Pharma/Rubber",
            Sector::MetalsMachinery => "Metals/Machinery",
            Sector::OtherProducts => "OtherProducts",
            Sector::AllSectors => "AllSectors",
        }
    }
}

impl fmt::Display for Sector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

impl FromStr for Sector {
    type Err = String;

    /// Accepts either the slug or the display name, ignoring case and punctuation.
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let norm = |t: &str| {
            t.chars()
                .filter(|c| c.is_ascii_alphanumeric())
                .map(|c| c.to_ascii_lowercase())
                .collect::<String>()
        };
        let key = norm(s);
        Sector::MAPPED
            .iter()
            .chain(std::iter::once(&Sector::AllSectors))
            .copied()
            .find(|sec| norm(sec.slug()) == key || norm(sec.display_name()) == key)
            .or_else(|| (key == "all").then_some(Sector::AllSectors))
            .ok_or_else(|| format!("unknown sector `{s}`"))
    }
}

/// CN prefix (2 to 8 digits) to sector lookup with longest-prefix matching.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SectorMap {
    rules: BTreeMap<String, Sector>,
}

impl SectorMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds or replaces a prefix rule. Rejects malformed prefixes and `AllSectors`.
    pub fn insert(&mut self, prefix: &str, sector: Sector) -> std::result::Result<(), String> {
        if !(2..=8).contains(&prefix.len()) || !prefix.bytes().all(|b| b.is_ascii_digit()) {
            return Err(format!("prefix `{prefix}` must be 2 to 8 digits"));
        }
        if sector == Sector::AllSectors {
            return Err("AllSectors is an aggregate, not a mapping target".into());
        }
        self.rules.insert(prefix.to_owned(), sector);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn rules(&self) -> impl Iterator<Item = (&str, Sector)> {
        self.rules.iter().map(|(p, s)| (p.as_str(), *s))
    }
}

pub fn sector_of(cn8: &Cn8, map: &SectorMap) -> Result<Sector> {
    let code = cn8.as_str();
    (2..=8)
        .rev()
        .find_map(|len| map.rules.get(&code[..len]).copied())
        .ok_or_else(|| GravityError::NoSectorMatch(code.to_owned()))
}

/// Aggregation key below the (year, destination) level.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CellKey {
    Total,
    Sector(Sector),
    Cn8(Cn8),
}

impl fmt::Display for CellKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CellKey::Total => f.write_str("total"),
            CellKey::Sector(s) => write!(f, "{s}"),
            CellKey::Cn8(c) => write!(f, "{c}"),
        }
    }
}

/// One regression row: an aggregated flow joined to its destination-year attributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GravityObservation {
    pub year: i32,
    pub destination: CountryCode,
    pub key: CellKey,
    pub value: Money,
    pub attrs: CountryYearAttributes,
    /// Exporter remoteness for this year, when supplied.
    pub remoteness: Option<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cn8(s: &str) -> Cn8 {
        Cn8::new(s).unwrap()
    }

    #[test]
    fn direct_prefix_hit() {
        let mut map = SectorMap::new();
        map.insert("01", Sector::Agriculture).unwrap();
        assert_eq!(sector_of(&cn8("01012100"), &map).unwrap(), Sector::Agriculture);
    }

    #[test]
    fn longest_prefix_wins() {
        let mut map = SectorMap::new();
        map.insert("30", Sector::OtherProducts).unwrap();
        map.insert("3004", Sector::ChemicalsPharma).unwrap();
        assert_eq!(sector_of(&cn8("30049000"), &map).unwrap(), Sector::ChemicalsPharma);
        assert_eq!(sector_of(&cn8("30010000"), &map).unwrap(), Sector::OtherProducts);
    }

    #[test]
    fn empty_map_has_no_match() {
        let err = sector_of(&cn8("99999999"), &SectorMap::new()).unwrap_err();
        assert!(matches!(err, GravityError::NoSectorMatch(c) if c == "99999999"));
    }

    #[test]
    fn all_sectors_is_not_a_mapping_target() {
        assert!(SectorMap::new().insert("01", Sector::AllSectors).is_err());
        assert!(SectorMap::new().insert("1", Sector::Mining).is_err());
    }

    #[test]
    fn money_parsing() {
        assert_eq!(Money::parse_euros("1000"), Some(Money(100_000)));
        assert_eq!(Money::parse_euros("12.5"), Some(Money(1250)));
        assert_eq!(Money::parse_euros("0.07"), Some(Money(7)));
        assert_eq!(Money::parse_euros("-5"), None);
        assert_eq!(Money::parse_euros("1.234"), None);
        assert_eq!(Money::parse_euros("1,000"), None);
        assert_eq!(Money::parse_euros(""), None);
        assert_eq!(Money(1250).to_string(), "12.50");
        assert_eq!(Money(100_000).to_string(), "1000");
    }

    #[test]
    fn codes() {
        assert_eq!(cn8("30049000").hs6().as_str(), "300490");
        assert!(Cn8::new("3004900").is_none());
        assert!(Cn8::new("3004900a").is_none());
        assert!(Hs6::new("300490").is_some());
        assert!(is_country_code("FR") && is_country_code("IRL") && !is_country_code("fr"));
    }

    #[test]
    fn sector_names_parse() {
        assert_eq!("Food/Beverage".parse::<Sector>().unwrap(), Sector::FoodBeverage);
        assert_eq!("chemicalspharma".parse::<Sector>().unwrap(), Sector::ChemicalsPharma);
        assert_eq!("all".parse::<Sector>().unwrap(), Sector::AllSectors);
        assert!("Fisheries".parse::<Sector>().is_err());
    }
}
