//! Post-run reports: benchmark percentile ranks, option effect tables and a
//! markdown summary.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bayes::{PosteriorDecision, Verdict};
use crate::cv::{select_best_configuration, ModelConfiguration};
use crate::error::{Error, Result};
use crate::metrics::{percentile_r7, MetricsRow};

/// Rank of a benchmark within the ML configurations of its (crop, month):
/// `100 * (# configs strictly better) / (# configs)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PercentileRank {
    pub crop: String,
    pub forecast_month: usize,
    pub benchmark: String,
    #[serde(rename = "rRMSEp")]
    pub rrmsep: f64,
    pub n_configs: usize,
    pub percentile_rank: f64,
}

pub fn percentile_rank(benchmark: f64, configs: &[f64]) -> f64 {
    let better = configs.iter().filter(|&&c| c < benchmark).count();
    100.0 * better as f64 / configs.len() as f64
}

fn is_benchmark(id: &str) -> bool {
    ModelConfiguration::parse_id(id).is_some_and(|c| c.is_benchmark())
}

fn by_slice(rows: &[MetricsRow]) -> BTreeMap<(String, usize), Vec<&MetricsRow>> {
    let mut out: BTreeMap<(String, usize), Vec<&MetricsRow>> = BTreeMap::new();
    for r in rows {
        out.entry((r.crop.clone(), r.forecast_month))
            .or_default()
            .push(r);
    }
    out
}

pub fn percentile_ranks(rows: &[MetricsRow]) -> Vec<PercentileRank> {
    let mut out = Vec::new();
    for ((crop, month), slice) in by_slice(rows) {
        let configs: Vec<f64> = slice
            .iter()
            .filter(|r| !is_benchmark(&r.config_id))
            .map(|r| r.rrmsep)
            .collect();
        if configs.is_empty() {
            continue;
        }
        for b in slice.iter().filter(|r| is_benchmark(&r.config_id)) {
            out.push(PercentileRank {
                crop: crop.clone(),
                forecast_month: month,
                benchmark: b.config_id.clone(),
                rrmsep: b.rrmsep,
                n_configs: configs.len(),
                percentile_rank: percentile_rank(b.rrmsep, &configs),
            });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EffectOption {
    Ohe,
    Mrmr,
}

impl fmt::Display for EffectOption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EffectOption::Ohe => "ohe",
            EffectOption::Mrmr => "mrmr",
        })
    }
}

impl FromStr for EffectOption {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ohe" => Ok(EffectOption::Ohe),
            "mrmr" => Ok(EffectOption::Mrmr),
            _ => Err(Error::Config(format!("unknown option '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectGrouping {
    Algorithm,
    FeatureSet,
}

/// Paired rRMSE_p gain of turning an option on, one value per config pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectPair {
    pub crop: String,
    pub forecast_month: usize,
    pub algorithm: String,
    pub feature_set: String,
    /// `rRMSE_p(off) - rRMSE_p(on)`: positive when the option helps.
    pub delta: f64,
}

/// Box-plot summary with whiskers at the most extreme points within 1.5 IQR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSummary {
    pub n: usize,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
}

impl BoxSummary {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q1 = percentile_r7(&v, 0.25);
        let median = percentile_r7(&v, 0.5);
        let q3 = percentile_r7(&v, 0.75);
        let iqr = q3 - q1;
        let (lo, hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
        let whisker_low = v.iter().copied().find(|&x| x >= lo).unwrap_or(q1);
        let whisker_high = v.iter().rev().copied().find(|&x| x <= hi).unwrap_or(q3);
        Some(BoxSummary {
            n: v.len(),
            q1,
            median,
            q3,
            whisker_low,
            whisker_high,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectRow {
    pub crop: String,
    pub forecast_month: usize,
    pub option: EffectOption,
    pub group_by: EffectGrouping,
    pub group: String,
    #[serde(flatten)]
    pub summary: BoxSummary,
}

/// Pairs configurations that differ only in `option`.
pub fn effect_pairs(rows: &[MetricsRow], option: EffectOption) -> Result<Vec<EffectPair>> {
    let mut by_config: BTreeMap<(String, usize, String), f64> = BTreeMap::new();
    let mut parsed = Vec::new();
    for r in rows {
        if let Some(c) = ModelConfiguration::parse_id(&r.config_id).filter(|c| !c.is_benchmark()) {
            by_config.insert(
                (r.crop.clone(), r.forecast_month, r.config_id.clone()),
                r.rrmsep,
            );
            parsed.push((r, c));
        }
    }
    let mut pairs = Vec::new();
    for (r, c) in parsed {
        let (on, off) = match option {
            EffectOption::Ohe => (c.ohe, c.with_ohe(false)),
            EffectOption::Mrmr => (c.mrmr, c.with_mrmr(false)),
        };
        if !on {
            continue;
        }
        let key = (r.crop.clone(), r.forecast_month, off.id());
        if let Some(&off_score) = by_config.get(&key) {
            pairs.push(EffectPair {
                crop: r.crop.clone(),
                forecast_month: r.forecast_month,
                algorithm: c.algorithm.to_string(),
                feature_set: c.feature_set.map(|s| s.to_string()).unwrap_or_default(),
                delta: off_score - r.rrmsep,
            });
        }
    }
    if pairs.is_empty() {
        return Err(Error::UnpairedConfigs(option.to_string()));
    }
    Ok(pairs)
}

/// Effect distributions per (crop, month) and per algorithm and feature set.
pub fn effects_table(rows: &[MetricsRow], option: EffectOption) -> Result<Vec<EffectRow>> {
    let pairs = effect_pairs(rows, option)?;
    let mut groups: BTreeMap<(String, usize, EffectGrouping, String), Vec<f64>> = BTreeMap::new();
    for p in &pairs {
        let slice = (p.crop.clone(), p.forecast_month);
        groups
            .entry((
                slice.0.clone(),
                slice.1,
                EffectGrouping::Algorithm,
                p.algorithm.clone(),
            ))
            .or_default()
            .push(p.delta);
        groups
            .entry((
                slice.0,
                slice.1,
                EffectGrouping::FeatureSet,
                p.feature_set.clone(),
            ))
            .or_default()
            .push(p.delta);
    }
    Ok(groups
        .into_iter()
        .filter_map(|((crop, forecast_month, group_by, group), v)| {
            Some(EffectRow {
                crop,
                forecast_month,
                option,
                group_by,
                group,
                summary: BoxSummary::from_values(&v)?,
            })
        })
        .collect())
}

pub fn percentile_csv(ranks: &[PercentileRank]) -> Result<String> {
    to_csv(ranks)
}

pub fn effects_csv(rows: &[EffectRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "crop",
        "forecast_month",
        "option",
        "group_by",
        "group",
        "n",
        "q1",
        "median",
        "q3",
        "whisker_low",
        "whisker_high",
    ])?;
    for r in rows {
        let s = &r.summary;
        w.write_record([
            r.crop.clone(),
            r.forecast_month.to_string(),
            r.option.to_string(),
            match r.group_by {
                EffectGrouping::Algorithm => "algorithm".into(),
                EffectGrouping::FeatureSet => "feature_set".into(),
            },
            r.group.clone(),
            s.n.to_string(),
            s.q1.to_string(),
            s.median.to_string(),
            s.q3.to_string(),
            s.whisker_low.to_string(),
            s.whisker_high.to_string(),
        ])?;
    }
    finish(w)
}

fn to_csv<T: Serialize>(items: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for item in items {
        w.serialize(item)?;
    }
    finish(w)
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Config ids contain `|`, which must be escaped inside table cells.
fn cell(id: &str) -> String {
    format!("`{}`", id.replace('|', "\\|"))
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |x| format!("{x:.3}"))
}

/// Markdown summary: best configuration per forecast month with its metrics,
/// benchmark percentile ranks and comparison verdicts.
pub fn summary_markdown(rows: &[MetricsRow], decisions: &[PosteriorDecision]) -> String {
    let mut s = String::from("# Hindcast summary\n");
    let ranks = percentile_ranks(rows);
    for ((crop, month), slice) in by_slice(rows) {
        let owned: Vec<MetricsRow> = slice.iter().map(|r| (*r).clone()).collect();
        let _ = writeln!(s, "\n## {crop}, forecast month {month}\n");
        let Some(best) = select_best_configuration(&owned, false) else {
            let _ = writeln!(s, "No machine-learning configuration was evaluated.");
            continue;
        };
        let _ = writeln!(s, "Best configuration: `{}`\n", best.config_id);
        let _ = writeln!(
            s,
            "| model | rRMSE_p | RMSE_p | R2_p | rRMSE_p nat | R2_p nat |"
        );
        let _ = writeln!(s, "|---|---|---|---|---|---|");
        let mut shown = vec![best];
        shown.extend(slice.iter().copied().filter(|r| is_benchmark(&r.config_id)));
        for r in shown {
            let _ = writeln!(
                s,
                "| {} | {:.3} | {:.4} | {} | {:.3} | {} |",
                cell(&r.config_id),
                r.rrmsep,
                r.rmsep,
                opt(r.r2p_foldavg),
                r.rrmsep_nat,
                opt(r.r2p_nat)
            );
        }
        for p in ranks
            .iter()
            .filter(|p| p.crop == crop && p.forecast_month == month)
        {
            let _ = writeln!(
                s,
                "\n{} ranks at percentile {:.1} of {} configurations.",
                p.benchmark, p.percentile_rank, p.n_configs
            );
        }
        let month_decisions: Vec<&PosteriorDecision> = decisions
            .iter()
            .filter(|d| d.crop == crop && d.forecast_month == month)
            .collect();
        if !month_decisions.is_empty() {
            let _ = writeln!(
                s,
                "\n| rival | p_smaller | p_equivalent | p_larger | verdict |"
            );
            let _ = writeln!(s, "|---|---|---|---|---|");
            for d in month_decisions {
                let note = if d.verdict == Verdict::Larger {
                    " (best wins)"
                } else {
                    ""
                };
                let _ = writeln!(
                    s,
                    "| {} | {:.3} | {:.3} | {:.3} | {}{} |",
                    cell(&d.model_a),
                    d.probabilities.p_smaller,
                    d.probabilities.p_equivalent,
                    d.probabilities.p_larger,
                    d.verdict,
                    note
                );
            }
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(month: usize, id: &str, rrmse: f64) -> MetricsRow {
        MetricsRow {
            crop: "wheat".into(),
            forecast_month: month,
            config_id: id.into(),
            r2p_foldavg: Some(0.5),
            rmsep: rrmse / 100.0,
            rrmsep: rrmse,
            mep: 0.0,
            r2p_temporal: None,
            r2p_nat: None,
            rmsep_nat: 0.0,
            rrmsep_nat: 0.0,
            mep_nat: 0.0,
            rmsep_fq: None,
            rrmsep_fq: None,
            drmsep_fq: None,
        }
    }

    #[test]
    fn rank_rule() {
        assert_eq!(percentile_rank(40.0, &[10.0, 20.0, 30.0]), 100.0);
        assert_eq!(percentile_rank(5.0, &[10.0, 20.0, 30.0]), 0.0);
        let r = percentile_rank(25.0, &[10.0, 20.0, 30.0]);
        assert!((r - 200.0 / 3.0).abs() < 1e-12);
        // Ties are not counted as better.
        assert_eq!(percentile_rank(20.0, &[10.0, 20.0, 30.0]), 100.0 / 3.0);
    }

    #[test]
    fn ranks_per_month() {
        let rows = vec![
            row(8, "lasso|RS|all|ohe", 10.0),
            row(8, "rf|RS|all|ohe", 20.0),
            row(8, "null", 25.0),
            row(8, "peak_ndvi", 5.0),
        ];
        let ranks = percentile_ranks(&rows);
        assert_eq!(ranks.len(), 2);
        assert_eq!(ranks[0].benchmark, "null");
        assert_eq!(ranks[0].percentile_rank, 100.0);
        assert_eq!(ranks[1].percentile_rank, 0.0);
    }

    #[test]
    fn ohe_effect_of_two_points() {
        let mut rows = Vec::new();
        for (i, alg) in ["lasso", "rf", "svr_rbf"].iter().enumerate() {
            let base = 20.0 + i as f64;
            rows.push(row(6, &format!("{alg}|RS|all|ohe"), base));
            rows.push(row(6, &format!("{alg}|RS|all|no-ohe"), base + 2.0));
        }
        let pairs = effect_pairs(&rows, EffectOption::Ohe).unwrap();
        assert_eq!(pairs.len(), 3);
        let table = effects_table(&rows, EffectOption::Ohe).unwrap();
        let set = table
            .iter()
            .find(|r| r.group_by == EffectGrouping::FeatureSet)
            .unwrap();
        assert_eq!(set.summary.median, 2.0);
        assert_eq!(set.summary.n, 3);
        assert!(table
            .iter()
            .filter(|r| r.group_by == EffectGrouping::Algorithm)
            .all(|r| r.summary.median == 2.0));
    }

    #[test]
    fn missing_pairs() {
        let rows = vec![row(6, "lasso|RS|all|ohe", 20.0), row(6, "null", 30.0)];
        assert!(matches!(
            effect_pairs(&rows, EffectOption::Mrmr),
            Err(Error::UnpairedConfigs(_))
        ));
    }

    #[test]
    fn box_whiskers() {
        let v = [1.0, 2.0, 3.0, 4.0, 100.0];
        let b = BoxSummary::from_values(&v).unwrap();
        assert_eq!((b.q1, b.median, b.q3), (2.0, 3.0, 4.0));
        assert_eq!(b.whisker_low, 1.0);
        // 100 lies beyond q3 + 1.5 IQR = 7.
        assert_eq!(b.whisker_high, 4.0);
    }

    #[test]
    fn summary_names_best() {
        let rows = vec![
            row(8, "lasso|RS|all|ohe", 10.0),
            row(8, "rf|RS|all|ohe", 20.0),
            row(8, "peak_ndvi", 15.0),
        ];
        let md = summary_markdown(&rows, &[]);
        assert!(md.contains("Best configuration: `lasso|RS|all|ohe`"));
        assert!(md.contains("peak_ndvi ranks at percentile 50.0 of 2"));
        // Every table row keeps exactly seven unescaped separators.
        for line in md.lines().filter(|l| l.starts_with("| `")) {
            assert_eq!(line.replace("\\|", "").matches('|').count(), 7, "{line}");
        }
        assert!(md.contains("| `lasso\\|RS\\|all\\|ohe` | 10.000 |"));
    }
}
