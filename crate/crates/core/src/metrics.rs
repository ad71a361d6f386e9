//! Accuracy statistics: per-year folds, provincial averages, the
//! production-weighted national series and low-yield (first-quartile) years.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cv::{PredictionRecord, RunResult};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub year: i32,
    pub n: usize,
    pub rmse: f64,
    /// Percent of the crop mean yield.
    pub rrmse: f64,
    pub me: f64,
    /// `None` when the observed yields of the fold have no variance.
    pub r2: Option<f64>,
}

fn rmse_me(obs: &[f64], pred: &[f64]) -> (f64, f64) {
    let n = obs.len() as f64;
    let mut sse = 0.0;
    let mut se = 0.0;
    for (o, p) in obs.iter().zip(pred) {
        sse += (p - o) * (p - o);
        se += p - o;
    }
    ((sse / n).sqrt(), se / n)
}

/// Coefficient of determination against the subset's own mean.
pub fn r_squared(obs: &[f64], pred: &[f64]) -> Option<f64> {
    let n = obs.len() as f64;
    let mean = obs.iter().sum::<f64>() / n;
    let ss_tot: f64 = obs.iter().map(|o| (o - mean).powi(2)).sum();
    if ss_tot <= 0.0 {
        return None;
    }
    let ss_res: f64 = obs.iter().zip(pred).map(|(o, p)| (o - p).powi(2)).sum();
    Some(1.0 - ss_res / ss_tot)
}

pub fn fold_metrics(year: i32, obs: &[f64], pred: &[f64], crop_mean: f64) -> FoldMetrics {
    let (rmse, me) = rmse_me(obs, pred);
    FoldMetrics {
        year,
        n: obs.len(),
        rmse,
        rrmse: 100.0 * rmse / crop_mean,
        me,
        r2: r_squared(obs, pred),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvincialMetrics {
    pub rmse: f64,
    pub rrmse: f64,
    pub me: f64,
    /// Mean over years of the within-year R²; years without variance excluded.
    pub r2_foldavg: Option<f64>,
    /// Mean over units of the across-years R².
    pub r2_temporal: Option<f64>,
    pub folds: Vec<FoldMetrics>,
}

fn mean_opt(v: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let vals: Vec<f64> = v.flatten().collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

pub fn provincial_metrics(
    records: &[PredictionRecord],
    crop_mean: f64,
) -> Result<ProvincialMetrics> {
    let mut by_year: BTreeMap<i32, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    let mut by_unit: BTreeMap<&str, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in records {
        let e = by_year.entry(r.year).or_default();
        e.0.push(r.y_obs);
        e.1.push(r.y_pred);
        let e = by_unit.entry(r.unit.as_str()).or_default();
        e.0.push(r.y_obs);
        e.1.push(r.y_pred);
    }
    if by_year.len() < 2 {
        return Err(Error::TooFewYears {
            need: 2,
            got: by_year.len(),
        });
    }
    let folds: Vec<FoldMetrics> = by_year
        .iter()
        .map(|(&y, (o, p))| fold_metrics(y, o, p, crop_mean))
        .collect();
    let k = folds.len() as f64;
    Ok(ProvincialMetrics {
        rmse: folds.iter().map(|f| f.rmse).sum::<f64>() / k,
        rrmse: folds.iter().map(|f| f.rrmse).sum::<f64>() / k,
        me: folds.iter().map(|f| f.me).sum::<f64>() / k,
        r2_foldavg: mean_opt(folds.iter().map(|f| f.r2)),
        r2_temporal: mean_opt(by_unit.values().map(|(o, p)| r_squared(o, p))),
        folds,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NationalPoint {
    pub year: i32,
    pub obs: f64,
    pub pred: f64,
}

/// Production-weighted yearly means, renormalised over the units reporting each year.
pub fn national_series(
    records: &[PredictionRecord],
    weights: &BTreeMap<String, f64>,
) -> Result<Vec<NationalPoint>> {
    let mut acc: BTreeMap<i32, (f64, f64, f64)> = BTreeMap::new();
    for r in records {
        let w = *weights
            .get(&r.unit)
            .ok_or_else(|| Error::MissingWeight(r.unit.clone()))?;
        let e = acc.entry(r.year).or_default();
        e.0 += w;
        e.1 += w * r.y_obs;
        e.2 += w * r.y_pred;
    }
    acc.into_iter()
        .map(|(year, (w, o, p))| {
            if w <= 0.0 {
                return Err(Error::MissingWeight(format!("zero total weight in {year}")));
            }
            Ok(NationalPoint {
                year,
                obs: o / w,
                pred: p / w,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesMetrics {
    pub rmse: f64,
    pub rrmse: f64,
    pub me: f64,
    pub r2: Option<f64>,
}

pub fn series_metrics(obs: &[f64], pred: &[f64], crop_mean: f64) -> SeriesMetrics {
    let (rmse, me) = rmse_me(obs, pred);
    SeriesMetrics {
        rmse,
        rrmse: 100.0 * rmse / crop_mean,
        me,
        r2: r_squared(obs, pred),
    }
}

/// Linear-interpolation percentile on sorted data: `h = (n - 1) p + 1`.
pub fn percentile_r7(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowYieldMetrics {
    pub threshold: f64,
    pub years: Vec<i32>,
    pub rmse: f64,
    pub rrmse: f64,
    /// First-quartile rRMSE minus all-years rRMSE.
    pub delta_rrmse: f64,
}

pub fn low_yield_metrics(national: &[NationalPoint], crop_mean: f64) -> Result<LowYieldMetrics> {
    if national.len() < 4 {
        return Err(Error::TooFewYears {
            need: 4,
            got: national.len(),
        });
    }
    let mut sorted: Vec<f64> = national.iter().map(|p| p.obs).collect();
    sorted.sort_by(f64::total_cmp);
    let threshold = percentile_r7(&sorted, 0.25);
    let fq: Vec<&NationalPoint> = national.iter().filter(|p| p.obs <= threshold).collect();
    let obs: Vec<f64> = fq.iter().map(|p| p.obs).collect();
    let pred: Vec<f64> = fq.iter().map(|p| p.pred).collect();
    let (rmse, _) = rmse_me(&obs, &pred);
    let all_obs: Vec<f64> = national.iter().map(|p| p.obs).collect();
    let all_pred: Vec<f64> = national.iter().map(|p| p.pred).collect();
    let (all_rmse, _) = rmse_me(&all_obs, &all_pred);
    let rrmse = 100.0 * rmse / crop_mean;
    Ok(LowYieldMetrics {
        threshold,
        years: fq.iter().map(|p| p.year).collect(),
        rmse,
        rrmse,
        delta_rrmse: rrmse - 100.0 * all_rmse / crop_mean,
    })
}

/// One line of `metrics.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub crop: String,
    pub forecast_month: usize,
    pub config_id: String,
    #[serde(rename = "R2p_foldavg")]
    pub r2p_foldavg: Option<f64>,
    #[serde(rename = "RMSEp")]
    pub rmsep: f64,
    #[serde(rename = "rRMSEp")]
    pub rrmsep: f64,
    #[serde(rename = "MEp")]
    pub mep: f64,
    #[serde(rename = "R2p_temporal")]
    pub r2p_temporal: Option<f64>,
    #[serde(rename = "R2p_nat")]
    pub r2p_nat: Option<f64>,
    #[serde(rename = "RMSEp_nat")]
    pub rmsep_nat: f64,
    #[serde(rename = "rRMSEp_nat")]
    pub rrmsep_nat: f64,
    #[serde(rename = "MEp_nat")]
    pub mep_nat: f64,
    #[serde(rename = "RMSEp_FQ")]
    pub rmsep_fq: Option<f64>,
    #[serde(rename = "rRMSEp_FQ")]
    pub rrmsep_fq: Option<f64>,
    #[serde(rename = "dRMSEp_FQ")]
    pub drmsep_fq: Option<f64>,
}

/// Full metric set for one hindcast, plus the per-year provincial breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub row: MetricsRow,
    pub provincial: ProvincialMetrics,
    pub national: Vec<NationalPoint>,
    pub low_yield: Option<LowYieldMetrics>,
}

impl MetricsReport {
    /// Per-year rRMSE_p, the paired statistic for model comparison.
    pub fn fold_rrmse(&self) -> Vec<(i32, f64)> {
        self.provincial
            .folds
            .iter()
            .map(|f| (f.year, f.rrmse))
            .collect()
    }
}

pub fn compute_metrics(
    result: &RunResult,
    crop_mean: f64,
    weights: &BTreeMap<String, f64>,
) -> Result<MetricsReport> {
    metrics_from_records(
        &result.crop,
        result.forecast_month,
        &result.config_id,
        &result.records,
        crop_mean,
        weights,
    )
}

/// Same as [`compute_metrics`] for records read back from `predictions.csv`.
pub fn metrics_from_records(
    crop: &str,
    forecast_month: usize,
    config_id: &str,
    records: &[PredictionRecord],
    crop_mean: f64,
    weights: &BTreeMap<String, f64>,
) -> Result<MetricsReport> {
    let provincial = provincial_metrics(records, crop_mean)?;
    let national = national_series(records, weights)?;
    let obs: Vec<f64> = national.iter().map(|p| p.obs).collect();
    let pred: Vec<f64> = national.iter().map(|p| p.pred).collect();
    let nat = series_metrics(&obs, &pred, crop_mean);
    let low_yield = match low_yield_metrics(&national, crop_mean) {
        Ok(l) => Some(l),
        Err(Error::TooFewYears { .. }) => None,
        Err(e) => return Err(e),
    };
    Ok(MetricsReport {
        row: MetricsRow {
            crop: crop.to_string(),
            forecast_month,
            config_id: config_id.to_string(),
            r2p_foldavg: provincial.r2_foldavg,
            rmsep: provincial.rmse,
            rrmsep: provincial.rrmse,
            mep: provincial.me,
            r2p_temporal: provincial.r2_temporal,
            r2p_nat: nat.r2,
            rmsep_nat: nat.rmse,
            rrmsep_nat: nat.rrmse,
            mep_nat: nat.me,
            rmsep_fq: low_yield.as_ref().map(|l| l.rmse),
            rrmsep_fq: low_yield.as_ref().map(|l| l.rrmse),
            drmsep_fq: low_yield.as_ref().map(|l| l.delta_rrmse),
        },
        provincial,
        national,
        low_yield,
    })
}

pub fn metrics_csv(rows: &[MetricsRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record([
            "crop",
            "forecast_month",
            "config_id",
            "R2p_foldavg",
            "RMSEp",
            "rRMSEp",
            "MEp",
            "R2p_temporal",
            "R2p_nat",
            "RMSEp_nat",
            "rRMSEp_nat",
            "MEp_nat",
            "RMSEp_FQ",
            "rRMSEp_FQ",
            "dRMSEp_FQ",
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn parse_metrics_csv(text: &str) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.deserialize()
        .enumerate()
        .map(|(i, row)| {
            row.map_err(|e| Error::MalformedRow {
                file: "metrics.csv",
                line: i as u64 + 2,
                reason: e.to_string(),
            })
        })
        .collect()
}
