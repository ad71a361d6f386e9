//! Monthly feature engineering, manual feature sets, one-hot admin-unit
//! columns, standard scores and mRMR selection.

mod mrmr;
mod scaler;

pub use mrmr::{mrmr_select, pearson};
pub use scaler::{zscore_fit, ScalerParams};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::calendar::month_abbr;
use crate::dataset::{format_sig, Dataset, Variable};
use crate::error::{Error, Result};

/// Monthly aggregate, each bound to its source variable and operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FeatureVar {
    Nd,
    NdMax,
    Rad,
    Rain,
    T,
    TMin,
    TMax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Aggregation {
    Mean,
    Max,
    Min,
    Sum,
}

impl FeatureVar {
    pub const ALL: [FeatureVar; 7] = [
        FeatureVar::Nd,
        FeatureVar::NdMax,
        FeatureVar::Rad,
        FeatureVar::Rain,
        FeatureVar::T,
        FeatureVar::TMin,
        FeatureVar::TMax,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureVar::Nd => "ND",
            FeatureVar::NdMax => "ND_max",
            FeatureVar::Rad => "Rad",
            FeatureVar::Rain => "Rain",
            FeatureVar::T => "T",
            FeatureVar::TMin => "T_min",
            FeatureVar::TMax => "T_max",
        }
    }

    pub fn source(self) -> Variable {
        match self {
            FeatureVar::Nd | FeatureVar::NdMax => Variable::Ndvi,
            FeatureVar::Rad => Variable::Rad,
            FeatureVar::Rain => Variable::Rain,
            FeatureVar::T => Variable::T,
            FeatureVar::TMin => Variable::Tmin,
            FeatureVar::TMax => Variable::Tmax,
        }
    }

    fn aggregation(self) -> Aggregation {
        match self {
            FeatureVar::Nd | FeatureVar::T => Aggregation::Mean,
            FeatureVar::NdMax | FeatureVar::TMax => Aggregation::Max,
            FeatureVar::TMin => Aggregation::Min,
            FeatureVar::Rad | FeatureVar::Rain => Aggregation::Sum,
        }
    }

    pub fn aggregate(self, values: &[f64]) -> f64 {
        match self.aggregation() {
            Aggregation::Mean => values.iter().sum::<f64>() / values.len() as f64,
            Aggregation::Sum => values.iter().sum(),
            Aggregation::Max => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            Aggregation::Min => values.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }
}

/// One aggregated value: a variable in season-axis month 1.. (1 = first
/// season month, November for the default window).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MonthlyFeature {
    pub variable: FeatureVar,
    pub month: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FeatureSet {
    RsMet,
    Rs,
    Met,
    RsMetReduced,
    RsReduced,
    MetReduced,
}

impl FeatureSet {
    pub const ALL: [FeatureSet; 6] = [
        FeatureSet::RsMet,
        FeatureSet::Rs,
        FeatureSet::Met,
        FeatureSet::RsMetReduced,
        FeatureSet::RsReduced,
        FeatureSet::MetReduced,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureSet::RsMet => "RS&Met",
            FeatureSet::Rs => "RS",
            FeatureSet::Met => "Met",
            FeatureSet::RsMetReduced => "RS&Met-",
            FeatureSet::RsReduced => "RS-",
            FeatureSet::MetReduced => "Met-",
        }
    }

    pub fn variables(self) -> &'static [FeatureVar] {
        use FeatureVar::*;
        match self {
            FeatureSet::RsMet => &[Nd, NdMax, Rad, Rain, T, TMin, TMax],
            FeatureSet::Rs => &[Nd, NdMax],
            FeatureSet::Met => &[Rad, Rain, T, TMin, TMax],
            FeatureSet::RsMetReduced => &[Nd, Rain, T],
            FeatureSet::RsReduced => &[Nd],
            FeatureSet::MetReduced => &[Rad, Rain, T],
        }
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureSet {
    type Err = Error;

    /// Accepts the display names and `rsmet`, `rs`, `met`, `rsmet-`, `rs-`, `met-`.
    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .to_ascii_lowercase()
            .chars()
            .filter(|c| !matches!(c, '&' | '_' | ' '))
            .collect();
        let key = key.replace("minus", "-");
        match key.as_str() {
            "rsmet" => Ok(FeatureSet::RsMet),
            "rs" => Ok(FeatureSet::Rs),
            "met" => Ok(FeatureSet::Met),
            "rsmet-" => Ok(FeatureSet::RsMetReduced),
            "rs-" => Ok(FeatureSet::RsReduced),
            "met-" => Ok(FeatureSet::MetReduced),
            _ => Err(Error::Config(format!("unknown feature set '{s}'"))),
        }
    }
}

/// Monthly aggregates of all seven features for the first `months` season months.
pub fn aggregate_monthly(
    ds: &Dataset,
    unit: &str,
    harvest_year: i32,
    months: usize,
) -> Result<BTreeMap<MonthlyFeature, f64>> {
    let mut out = BTreeMap::new();
    for variable in FeatureVar::ALL {
        let series = ds
            .series(unit, variable.source())
            .ok_or_else(|| Error::UnknownUnit(unit.to_string()))?;
        for month in 1..=months {
            let values = series.values_at(&ds.season().month(harvest_year, month))?;
            out.insert(
                MonthlyFeature { variable, month },
                variable.aggregate(&values),
            );
        }
    }
    Ok(out)
}

/// Maximum NDVI over the dekads of the first `months` season months.
pub fn peak_ndvi(ds: &Dataset, unit: &str, harvest_year: i32, months: usize) -> Result<f64> {
    let series = ds
        .series(unit, Variable::Ndvi)
        .ok_or_else(|| Error::UnknownUnit(unit.to_string()))?;
    let values = series.values_at(&ds.season().month_dekads(harvest_year, months))?;
    Ok(values.into_iter().fold(f64::NEG_INFINITY, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColumnKind {
    Continuous,
    OneHot,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RowKey {
    pub unit: String,
    pub year: i32,
}

/// Rows sorted by unit id then year; continuous block first, then one-hot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub rows: Vec<RowKey>,
    pub columns: Vec<String>,
    pub kinds: Vec<ColumnKind>,
    pub x: Array2<f64>,
    pub y: Array1<f64>,
    pub feature_set: FeatureSet,
    pub months: usize,
}

impl FeatureMatrix {
    pub fn n_continuous(&self) -> usize {
        self.kinds
            .iter()
            .filter(|k| **k == ColumnKind::Continuous)
            .count()
    }

    pub fn years(&self) -> Vec<i32> {
        let mut y: Vec<i32> = self.rows.iter().map(|r| r.year).collect();
        y.sort_unstable();
        y.dedup();
        y
    }

    /// Indices of rows whose year satisfies `keep`.
    pub fn row_indices(&self, keep: impl Fn(i32) -> bool) -> Vec<usize> {
        self.rows
            .iter()
            .enumerate()
            .filter(|(_, r)| keep(r.year))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn take_rows(&self, idx: &[usize]) -> (Array2<f64>, Array1<f64>) {
        (self.x.select(Axis(0), idx), self.y.select(Axis(0), idx))
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("unit_id,year,{},yield\n", self.columns.join(","));
        for (i, r) in self.rows.iter().enumerate() {
            out.push_str(&format!("{},{}", r.unit, r.year));
            for v in self.x.row(i) {
                out.push(',');
                out.push_str(&format_sig(*v, 6));
            }
            out.push_str(&format!(",{}\n", format_sig(self.y[i], 6)));
        }
        out
    }
}

/// Column name of a monthly feature, e.g. `ND_max_Mar`.
pub fn column_name(ds: &Dataset, f: MonthlyFeature) -> String {
    format!(
        "{}_{}",
        f.variable.name(),
        month_abbr(ds.season().calendar_month(f.month))
    )
}

/// Feature matrix for a forecast that sees the first `months` season months.
pub fn build_feature_matrix(
    ds: &Dataset,
    set: FeatureSet,
    months: usize,
    ohe: bool,
) -> Result<FeatureMatrix> {
    let units = ds.yield_units();
    let mut columns = Vec::new();
    let mut kinds = Vec::new();
    let mut keys = Vec::new();
    for &variable in set.variables() {
        for month in 1..=months {
            let f = MonthlyFeature { variable, month };
            columns.push(column_name(ds, f));
            kinds.push(ColumnKind::Continuous);
            keys.push(f);
        }
    }
    if ohe {
        for u in &units {
            columns.push(format!("unit_{u}"));
            kinds.push(ColumnKind::OneHot);
        }
    }

    let records = &ds.yields().records;
    let mut x = Array2::<f64>::zeros((records.len(), columns.len()));
    let mut y = Array1::<f64>::zeros(records.len());
    let mut rows = Vec::with_capacity(records.len());
    for (i, ((unit, year), value)) in records.iter().enumerate() {
        let agg = aggregate_monthly(ds, unit, *year, months)?;
        for (j, key) in keys.iter().enumerate() {
            x[(i, j)] = agg[key];
        }
        if ohe {
            let pos = units.iter().position(|u| u == unit).expect("unit present");
            x[(i, keys.len() + pos)] = 1.0;
        }
        y[i] = *value;
        rows.push(RowKey {
            unit: unit.clone(),
            year: *year,
        });
    }
    Ok(FeatureMatrix {
        rows,
        columns,
        kinds,
        x,
        y,
        feature_set: set,
        months,
    })
}

/// Number of features kept for a percentage: `max(1, round_half_up(pct * n / 100))`.
pub fn fraction_to_count(percent: u32, n: usize) -> usize {
    let k = (percent as usize * n + 50) / 100;
    k.clamp(1, n.max(1))
}
