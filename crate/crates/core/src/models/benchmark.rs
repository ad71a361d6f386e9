//! Per-unit benchmarks: the training-years mean and a yield ~ peak NDVI line.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullModel {
    means: BTreeMap<String, f64>,
}

impl NullModel {
    /// `rows` are `(unit, yield)` training observations.
    pub fn fit<'a>(rows: impl IntoIterator<Item = (&'a str, f64)>) -> Self {
        let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
        for (unit, y) in rows {
            let e = acc.entry(unit.to_string()).or_default();
            e.0 += y;
            e.1 += 1;
        }
        NullModel {
            means: acc
                .into_iter()
                .map(|(u, (s, n))| (u, s / n as f64))
                .collect(),
        }
    }

    pub fn predict(&self, unit: &str) -> Result<f64> {
        self.means
            .get(unit)
            .copied()
            .ok_or_else(|| Error::UnknownUnit(unit.to_string()))
    }
}

/// Ordinary least-squares line for one unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakLine {
    pub slope: f64,
    pub intercept: f64,
    /// All training peaks were equal; the line is flat at the mean yield.
    pub degenerate: bool,
}

impl PeakLine {
    pub fn fit(points: &[(f64, f64)]) -> Self {
        let n = points.len() as f64;
        let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
        let my = points.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        if points.len() < 2 || sxx <= 0.0 {
            return PeakLine {
                slope: 0.0,
                intercept: my,
                degenerate: true,
            };
        }
        let slope = sxy / sxx;
        PeakLine {
            slope,
            intercept: my - slope * mx,
            degenerate: false,
        }
    }

    pub fn predict(&self, peak: f64) -> f64 {
        self.slope * peak + self.intercept
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakNdviModel {
    lines: BTreeMap<String, PeakLine>,
}

impl PeakNdviModel {
    /// `rows` are `(unit, peak NDVI, yield)` training observations.
    pub fn fit<'a>(rows: impl IntoIterator<Item = (&'a str, f64, f64)>) -> Self {
        let mut by_unit: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
        for (unit, peak, y) in rows {
            by_unit.entry(unit.to_string()).or_default().push((peak, y));
        }
        PeakNdviModel {
            lines: by_unit
                .into_iter()
                .map(|(u, pts)| (u, PeakLine::fit(&pts)))
                .collect(),
        }
    }

    pub fn line(&self, unit: &str) -> Option<&PeakLine> {
        self.lines.get(unit)
    }

    pub fn predict(&self, unit: &str, peak: f64) -> Result<f64> {
        self.lines
            .get(unit)
            .map(|l| l.predict(peak))
            .ok_or_else(|| Error::UnknownUnit(unit.to_string()))
    }

    pub fn degenerate_units(&self) -> Vec<&str> {
        self.lines
            .iter()
            .filter(|(_, l)| l.degenerate)
            .map(|(u, _)| u.as_str())
            .collect()
    }
}
