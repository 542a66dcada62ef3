//! Expenditure-weighted remoteness indices used as multilateral-resistance proxies.
//!
//! For exporter `j` in year `t`:
//!
//! ```text
//! r_jt = sum_{k != j} D_jk * E_kt / sum_{k != j} E_kt
//! ```
//!
//! where `E_kt` is partner `k`'s total imports in the bilateral table. The
//! exporter's own expenditure is left out and the weights renormalised over the
//! remaining partners.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::datamodel::{BilateralTradeRecord, CountryCode};
use crate::error::{GravityError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemotenessIndex {
    pub country: CountryCode,
    pub year: i32,
    pub r: f64,
}

fn pair(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_owned(), b.to_owned())
    } else {
        (b.to_owned(), a.to_owned())
    }
}

/// Symmetric bilateral distances, optionally overridden per year.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DistanceTable {
    fixed: BTreeMap<(String, String), f64>,
    by_year: BTreeMap<(i32, String, String), f64>,
}

fn insert_once<K: Ord>(map: &mut BTreeMap<K, f64>, key: K, km: f64) -> std::result::Result<(), f64> {
    match map.entry(key) {
        std::collections::btree_map::Entry::Vacant(v) => {
            v.insert(km);
            Ok(())
        }
        std::collections::btree_map::Entry::Occupied(o) if *o.get() == km => Ok(()),
        std::collections::btree_map::Entry::Occupied(o) => Err(*o.get()),
    }
}

impl DistanceTable {
    /// Inserts a distance; re-inserting a pair with a different value fails
    /// with the value already stored.
    pub fn insert(&mut self, year: Option<i32>, a: &str, b: &str, km: f64) -> std::result::Result<(), f64> {
        let (x, y) = pair(a, b);
        match year {
            None => insert_once(&mut self.fixed, (x, y), km),
            Some(t) => insert_once(&mut self.by_year, (t, x, y), km),
        }
    }

    /// The per-year value when one exists, otherwise the time-invariant one.
    pub fn get(&self, year: Option<i32>, a: &str, b: &str) -> Option<f64> {
        let (x, y) = pair(a, b);
        year.and_then(|t| self.by_year.get(&(t, x.clone(), y.clone())).copied())
            .or_else(|| self.fixed.get(&(x, y)).copied())
    }

    pub fn static_pairs(&self) -> impl Iterator<Item = (&str, &str, f64)> {
        self.fixed.iter().map(|((a, b), km)| (a.as_str(), b.as_str(), *km))
    }

    pub fn is_empty(&self) -> bool {
        self.fixed.is_empty() && self.by_year.is_empty()
    }
}

/// Import expenditure per country and the world total for one year.
#[derive(Debug, Clone, PartialEq)]
pub struct Expenditures {
    pub year: i32,
    pub by_country: BTreeMap<CountryCode, f64>,
    pub world_total: f64,
}

pub fn expenditures(bilateral: &[BilateralTradeRecord], year: i32) -> Result<Expenditures> {
    let mut by_country: BTreeMap<CountryCode, f64> = BTreeMap::new();
    let mut any = false;
    for rec in bilateral.iter().filter(|r| r.year == year) {
        any = true;
        *by_country.entry(rec.partner.clone()).or_insert(0.0) += rec.flow_value;
        by_country.entry(rec.reporter.clone()).or_insert(0.0);
    }
    if !any {
        return Err(GravityError::EmptyYear(year));
    }
    // summing the per-country totals keeps sum_k E_k == Y exact
    let world_total = by_country.values().sum();
    Ok(Expenditures {
        year,
        by_country,
        world_total,
    })
}

pub fn remoteness_of(
    country: &str,
    year: i32,
    distances: &DistanceTable,
    expenditures: &Expenditures,
) -> Result<RemotenessIndex> {
    let mut weighted = 0.0;
    let mut total = 0.0;
    for (partner, &e) in &expenditures.by_country {
        if partner == country || e <= 0.0 {
            continue;
        }
        let d = distances
            .get(Some(year), country, partner)
            .ok_or_else(|| GravityError::MissingDistance {
                from: country.to_owned(),
                to: partner.clone(),
            })?;
        weighted += d * e;
        total += e;
    }
    if total <= 0.0 {
        return Err(GravityError::InsufficientData(format!(
            "no partner of {country} has positive expenditure in {year}"
        )));
    }
    Ok(RemotenessIndex {
        country: country.to_owned(),
        year,
        r: weighted / total,
    })
}

pub fn exporter_remoteness_series(
    exporter: &str,
    years: &[i32],
    bilateral: &[BilateralTradeRecord],
    distances: &DistanceTable,
) -> Result<Vec<RemotenessIndex>> {
    years
        .iter()
        .map(|&year| {
            let e = expenditures(bilateral, year)?;
            remoteness_of(exporter, year, distances, &e)
        })
        .collect()
}

/// Distinct years present in a bilateral table, ascending.
pub fn bilateral_years(bilateral: &[BilateralTradeRecord]) -> Vec<i32> {
    let mut years: Vec<i32> = bilateral.iter().map(|r| r.year).collect();
    years.sort_unstable();
    years.dedup();
    years
}
