//! Admin-unit data model and CSV ingestion.
//!
//! Three comma-separated files with mandatory headers make up a dataset:
//!
//! ```text
//! timeseries.csv  unit_id,variable,year,dekad,value
//! yields.csv      unit_id,crop,year,yield_t_ha
//! units.csv       unit_id,name,production_weight_t
//! ```
//!
//! Seasons that cross the calendar boundary are labelled by harvest year:
//! November/December of year `t - 1` feed the season labelled `t`.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::calendar::DekadIndex;
use crate::error::{Error, Result};
use crate::phenology::SeasonWindow;

pub const MIN_UNIT_YEARS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Variable {
    Ndvi,
    Rain,
    T,
    Tmin,
    Tmax,
    Rad,
}

impl Variable {
    pub const ALL: [Variable; 6] = [
        Variable::Ndvi,
        Variable::Rain,
        Variable::T,
        Variable::Tmin,
        Variable::Tmax,
        Variable::Rad,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variable::Ndvi => "NDVI",
            Variable::Rain => "Rain",
            Variable::T => "T",
            Variable::Tmin => "Tmin",
            Variable::Tmax => "Tmax",
            Variable::Rad => "Rad",
        }
    }

    /// Physical range check for a single sample.
    pub fn accepts(self, value: f64) -> bool {
        if !value.is_finite() {
            return false;
        }
        match self {
            Variable::Ndvi => (-0.2..=1.0).contains(&value),
            Variable::Rain | Variable::Rad => value >= 0.0,
            Variable::T | Variable::Tmin | Variable::Tmax => true,
        }
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variable {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variable::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| format!("unknown variable '{s}'"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdminUnit {
    pub id: String,
    pub name: String,
    /// Multi-year average production in tonnes.
    pub production_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DekadalSeries {
    pub unit: String,
    pub variable: Variable,
    pub samples: BTreeMap<DekadIndex, f64>,
}

impl DekadalSeries {
    pub fn new(unit: impl Into<String>, variable: Variable) -> Self {
        DekadalSeries {
            unit: unit.into(),
            variable,
            samples: BTreeMap::new(),
        }
    }

    pub fn get(&self, at: DekadIndex) -> Option<f64> {
        self.samples.get(&at).copied()
    }

    fn require(&self, at: DekadIndex) -> Result<f64> {
        self.get(at).ok_or_else(|| Error::CoverageGap {
            unit: self.unit.clone(),
            variable: self.variable.to_string(),
            year: at.year,
            dekad: at.dekad,
        })
    }

    /// Values at the given dekads, in order; any missing dekad is a `CoverageGap`.
    pub fn values_at(&self, dekads: &[DekadIndex]) -> Result<Vec<f64>> {
        dekads.iter().map(|&d| self.require(d)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YieldTable {
    pub crop: String,
    /// `(unit id, harvest year) -> yield in t/ha`.
    pub records: BTreeMap<(String, i32), f64>,
}

impl YieldTable {
    pub fn years(&self) -> Vec<i32> {
        let set: BTreeSet<i32> = self.records.keys().map(|(_, y)| *y).collect();
        set.into_iter().collect()
    }

    pub fn mean(&self) -> f64 {
        self.records.values().sum::<f64>() / self.records.len() as f64
    }

    pub fn get(&self, unit: &str, year: i32) -> Option<f64> {
        self.records.get(&(unit.to_string(), year)).copied()
    }
}

/// Values of `series` over the season window for `harvest_year`, from the start
/// dekad (in `harvest_year - 1` when the window wraps) through the end dekad.
pub fn slice_season(
    series: &DekadalSeries,
    harvest_year: i32,
    window: &SeasonWindow,
) -> Result<Vec<f64>> {
    series.values_at(&window.dekads(harvest_year))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    units: Vec<AdminUnit>,
    series: BTreeMap<(String, Variable), DekadalSeries>,
    yields: YieldTable,
    season: SeasonWindow,
}

impl Dataset {
    /// Assembles and validates a dataset. Every yield record needs all six
    /// variables over every dekad of the season months of its harvest year.
    pub fn new(
        units: Vec<AdminUnit>,
        series: Vec<DekadalSeries>,
        yields: YieldTable,
        season: SeasonWindow,
    ) -> Result<Self> {
        let mut seen = HashSet::new();
        for u in &units {
            if !seen.insert(u.id.clone()) {
                return Err(Error::MalformedRow {
                    file: "units.csv",
                    line: 0,
                    reason: format!("duplicate unit id '{}'", u.id),
                });
            }
        }
        let mut map = BTreeMap::new();
        for s in series {
            if !seen.contains(&s.unit) {
                return Err(Error::UnknownUnit(s.unit));
            }
            map.insert((s.unit.clone(), s.variable), s);
        }
        let mut per_unit: BTreeMap<&str, usize> = BTreeMap::new();
        for (unit, _) in yields.records.keys() {
            if !seen.contains(unit) {
                return Err(Error::UnknownUnit(unit.clone()));
            }
            *per_unit.entry(unit).or_default() += 1;
        }
        if yields.records.is_empty() {
            return Err(Error::EmptyCrop(yields.crop.clone()));
        }
        for (unit, n) in per_unit {
            if n < MIN_UNIT_YEARS {
                return Err(Error::TooFewUnitYears {
                    unit: unit.to_string(),
                    years: n,
                    min: MIN_UNIT_YEARS,
                });
            }
        }
        let ds = Dataset {
            units,
            series: map,
            yields,
            season,
        };
        ds.check_coverage()?;
        Ok(ds)
    }

    /// Re-validates coverage under a different season window.
    pub fn with_season(mut self, season: SeasonWindow) -> Result<Self> {
        self.season = season;
        self.check_coverage()?;
        Ok(self)
    }

    fn check_coverage(&self) -> Result<()> {
        for (unit, year) in self.yields.records.keys() {
            let dekads = self.season.month_dekads(*year, self.season.n_months());
            for var in Variable::ALL {
                let Some(series) = self.series.get(&(unit.clone(), var)) else {
                    return Err(Error::CoverageGap {
                        unit: unit.clone(),
                        variable: var.to_string(),
                        year: *year,
                        dekad: dekads[0].dekad,
                    });
                };
                series.values_at(&dekads)?;
            }
        }
        Ok(())
    }

    pub fn units(&self) -> &[AdminUnit] {
        &self.units
    }

    pub fn unit(&self, id: &str) -> Option<&AdminUnit> {
        self.units.iter().find(|u| u.id == id)
    }

    pub fn series(&self, unit: &str, variable: Variable) -> Option<&DekadalSeries> {
        self.series.get(&(unit.to_string(), variable))
    }

    pub fn all_series(&self) -> impl Iterator<Item = &DekadalSeries> {
        self.series.values()
    }

    pub fn yields(&self) -> &YieldTable {
        &self.yields
    }

    pub fn season(&self) -> &SeasonWindow {
        &self.season
    }

    pub fn crop(&self) -> &str {
        &self.yields.crop
    }

    /// Sorted ids of units that have at least one yield record.
    pub fn yield_units(&self) -> Vec<String> {
        let set: BTreeSet<&String> = self.yields.records.keys().map(|(u, _)| u).collect();
        set.into_iter().cloned().collect()
    }

    /// Replaces yields (same crop, same units); used by permutation tests.
    pub fn with_yields(mut self, yields: YieldTable) -> Result<Self> {
        self.yields = yields;
        let units = std::mem::take(&mut self.units);
        let series = std::mem::take(&mut self.series).into_values().collect();
        Dataset::new(units, series, self.yields, self.season)
    }

    pub fn parse(
        timeseries_csv: &str,
        yields_csv: &str,
        units_csv: &str,
        crop: Option<&str>,
        season: SeasonWindow,
    ) -> Result<Self> {
        parse_inputs(timeseries_csv, yields_csv, units_csv, crop)?.into_dataset(season)
    }

    /// `(timeseries.csv, yields.csv, units.csv)` with 6-significant-digit floats.
    pub fn to_csv(&self) -> (String, String, String) {
        let mut ts = String::from("unit_id,variable,year,dekad,value\n");
        for s in self.series.values() {
            for (d, v) in &s.samples {
                ts.push_str(&format!(
                    "{},{},{},{},{}\n",
                    s.unit,
                    s.variable,
                    d.year,
                    d.dekad,
                    format_sig(*v, 6)
                ));
            }
        }
        let mut ys = String::from("unit_id,crop,year,yield_t_ha\n");
        for ((unit, year), v) in &self.yields.records {
            ys.push_str(&format!(
                "{unit},{},{year},{}\n",
                self.yields.crop,
                format_sig(*v, 6)
            ));
        }
        let mut us = String::from("unit_id,name,production_weight_t\n");
        for u in &self.units {
            us.push_str(&format!(
                "{},{},{}\n",
                u.id,
                u.name,
                format_sig(u.production_weight, 6)
            ));
        }
        (ts, ys, us)
    }
}

/// Parsed but not yet season-validated inputs. Phenology runs on these to
/// derive the window that [`Inputs::into_dataset`] then validates against.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub units: Vec<AdminUnit>,
    pub series: Vec<DekadalSeries>,
    pub yields: YieldTable,
}

impl Inputs {
    pub fn series(&self, unit: &str, variable: Variable) -> Option<&DekadalSeries> {
        self.series
            .iter()
            .find(|s| s.unit == unit && s.variable == variable)
    }

    pub fn into_dataset(self, season: SeasonWindow) -> Result<Dataset> {
        Dataset::new(self.units, self.series, self.yields, season)
    }
}

pub fn parse_inputs(
    timeseries_csv: &str,
    yields_csv: &str,
    units_csv: &str,
    crop: Option<&str>,
) -> Result<Inputs> {
    let units = parse_units(units_csv)?;
    let known: HashSet<&str> = units.iter().map(|u| u.id.as_str()).collect();
    let series = parse_timeseries(timeseries_csv, &known)?;
    let yields = parse_yields(yields_csv, crop)?;
    for (unit, _) in yields.records.keys() {
        if !known.contains(unit.as_str()) {
            return Err(Error::UnknownUnit(unit.clone()));
        }
    }
    Ok(Inputs {
        units,
        series,
        yields,
    })
}

/// Decimal rendering with `sig` significant digits and no trailing zeros.
pub fn format_sig(v: f64, sig: usize) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v.is_finite() {
            "0".into()
        } else {
            v.to_string()
        };
    }
    let exp = v.abs().log10().floor() as i32;
    if (-5..16).contains(&exp) {
        let decimals = (sig as i32 - 1 - exp).max(0) as usize;
        let s = format!("{v:.decimals$}");
        let s = if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        };
        if s == "-0" {
            "0".into()
        } else {
            s
        }
    } else {
        let s = format!("{:.*e}", sig - 1, v);
        let (mantissa, exponent) = s.split_once('e').expect("scientific");
        let mantissa = if mantissa.contains('.') {
            mantissa.trim_end_matches('0').trim_end_matches('.')
        } else {
            mantissa
        };
        format!("{mantissa}e{exponent}")
    }
}

/// Round-trips through [`format_sig`].
pub fn round_sig(v: f64, sig: usize) -> f64 {
    format_sig(v, sig).parse().expect("formatted float parses")
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

fn check_header(rdr: &mut csv::Reader<&[u8]>, file: &'static str, expected: &[&str]) -> Result<()> {
    let header = rdr.headers().map_err(|e| Error::MalformedRow {
        file,
        line: 1,
        reason: e.to_string(),
    })?;
    if header.iter().ne(expected.iter().copied()) {
        return Err(Error::MalformedRow {
            file,
            line: 1,
            reason: format!("expected header '{}'", expected.join(",")),
        });
    }
    Ok(())
}

fn rows<'a>(
    rdr: &'a mut csv::Reader<&'a [u8]>,
    file: &'static str,
    width: usize,
) -> impl Iterator<Item = Result<(u64, csv::StringRecord)>> + 'a {
    rdr.records().map(move |rec| {
        let rec = rec.map_err(|e| Error::MalformedRow {
            file,
            line: e.position().map_or(0, |p| p.line()),
            reason: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != width {
            return Err(Error::MalformedRow {
                file,
                line,
                reason: format!("expected {width} fields, got {}", rec.len()),
            });
        }
        Ok((line, rec))
    })
}

fn field<T: FromStr>(
    rec: &csv::StringRecord,
    i: usize,
    file: &'static str,
    line: u64,
) -> Result<T> {
    let raw = &rec[i];
    raw.parse().map_err(|_| Error::MalformedRow {
        file,
        line,
        reason: format!("cannot parse field {} ('{raw}')", i + 1),
    })
}

fn parse_units(text: &str) -> Result<Vec<AdminUnit>> {
    const FILE: &str = "units.csv";
    let mut rdr = reader(text);
    check_header(&mut rdr, FILE, &["unit_id", "name", "production_weight_t"])?;
    let mut out: Vec<AdminUnit> = Vec::new();
    for row in rows(&mut rdr, FILE, 3) {
        let (line, rec) = row?;
        let weight: f64 = field(&rec, 2, FILE, line)?;
        if !(weight.is_finite() && weight >= 0.0) {
            return Err(Error::MalformedRow {
                file: FILE,
                line,
                reason: format!("production weight {weight} must be >= 0"),
            });
        }
        if out.iter().any(|u| u.id == rec[0]) {
            return Err(Error::MalformedRow {
                file: FILE,
                line,
                reason: format!("duplicate unit id '{}'", &rec[0]),
            });
        }
        out.push(AdminUnit {
            id: rec[0].to_string(),
            name: rec[1].to_string(),
            production_weight: weight,
        });
    }
    Ok(out)
}

fn parse_timeseries(text: &str, known: &HashSet<&str>) -> Result<Vec<DekadalSeries>> {
    const FILE: &str = "timeseries.csv";
    let mut rdr = reader(text);
    check_header(
        &mut rdr,
        FILE,
        &["unit_id", "variable", "year", "dekad", "value"],
    )?;
    let mut map: BTreeMap<(String, Variable), DekadalSeries> = BTreeMap::new();
    for row in rows(&mut rdr, FILE, 5) {
        let (line, rec) = row?;
        let unit = &rec[0];
        let variable: Variable = rec[1].parse().map_err(|reason| Error::MalformedRow {
            file: FILE,
            line,
            reason,
        })?;
        let year: i32 = field(&rec, 2, FILE, line)?;
        let dekad: u8 = field(&rec, 3, FILE, line)?;
        let value: f64 = field(&rec, 4, FILE, line)?;
        let at = DekadIndex::checked(year, dekad).ok_or_else(|| Error::MalformedRow {
            file: FILE,
            line,
            reason: format!("dekad {dekad} outside 1..=36"),
        })?;
        if !variable.accepts(value) {
            return Err(Error::MalformedRow {
                file: FILE,
                line,
                reason: format!("{variable} value {value} out of range"),
            });
        }
        if !known.contains(unit) {
            return Err(Error::UnknownUnit(unit.to_string()));
        }
        let series = map
            .entry((unit.to_string(), variable))
            .or_insert_with(|| DekadalSeries::new(unit, variable));
        if series.samples.insert(at, value).is_some() {
            return Err(Error::DuplicateSample {
                unit: unit.to_string(),
                variable: variable.to_string(),
                year,
                dekad,
            });
        }
    }
    Ok(map.into_values().collect())
}

fn parse_yields(text: &str, crop: Option<&str>) -> Result<YieldTable> {
    const FILE: &str = "yields.csv";
    let mut rdr = reader(text);
    check_header(&mut rdr, FILE, &["unit_id", "crop", "year", "yield_t_ha"])?;
    let mut by_crop: BTreeMap<String, BTreeMap<(String, i32), f64>> = BTreeMap::new();
    for row in rows(&mut rdr, FILE, 4) {
        let (line, rec) = row?;
        let year: i32 = field(&rec, 2, FILE, line)?;
        let value: f64 = field(&rec, 3, FILE, line)?;
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::MalformedRow {
                file: FILE,
                line,
                reason: format!("yield {value} must be > 0"),
            });
        }
        let table = by_crop.entry(rec[1].to_string()).or_default();
        if table.insert((rec[0].to_string(), year), value).is_some() {
            return Err(Error::MalformedRow {
                file: FILE,
                line,
                reason: format!("duplicate yield record for {} {year}", &rec[0]),
            });
        }
    }
    let crop = match crop {
        Some(c) => c.to_string(),
        None if by_crop.len() == 1 => by_crop.keys().next().cloned().unwrap_or_default(),
        None if by_crop.is_empty() => return Err(Error::EmptyCrop(String::new())),
        None => {
            let names: Vec<_> = by_crop.keys().cloned().collect();
            return Err(Error::AmbiguousCrop(names.join(", ")));
        }
    };
    let records = by_crop
        .remove(&crop)
        .ok_or_else(|| Error::EmptyCrop(crop.clone()))?;
    Ok(YieldTable { crop, records })
}
