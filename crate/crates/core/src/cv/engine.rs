use std::collections::{BTreeMap, HashMap};
use std::str::FromStr;
use std::time::Instant;

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::config::{ModelConfiguration, MRMR_FRACTIONS};
use super::folds::{plan_nested_loyo, FoldPlan};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::exec::{derive_seed_labeled, par_map, Parallelism};
use crate::features::{
    build_feature_matrix, fraction_to_count, mrmr_select, peak_ndvi, zscore_fit, FeatureMatrix,
    FeatureSet, RowKey, ScalerParams,
};
use crate::models::benchmark::{NullModel, PeakNdviModel};
use crate::models::{self, AlgorithmId, GbrGrid, Hyper};

/// Where the standard-score parameters are estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ScalerMode {
    /// Training rows of each fit only.
    #[default]
    PerFold,
    /// All rows once, before any split. Leaks test-year statistics; kept for comparison.
    Global,
}

impl FromStr for ScalerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-fold" | "per_fold" => Ok(ScalerMode::PerFold),
            "global" => Ok(ScalerMode::Global),
            _ => Err(Error::Config(format!("unknown scaler mode '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct EngineOptions {
    pub seed: u64,
    pub parallelism: Parallelism,
    pub scaler: ScalerMode,
    pub gbr_grid: GbrGrid,
    /// Replaces the full grid of an algorithm, e.g. to shrink test runs.
    pub grid_override: HashMap<AlgorithmId, Vec<Hyper>>,
}

impl EngineOptions {
    pub fn grid(&self, a: AlgorithmId) -> Result<Vec<Hyper>> {
        match self.grid_override.get(&a) {
            Some(g) => Ok(g.clone()),
            None => models::enumerate_grid(a, self.gbr_grid),
        }
    }
}

/// Everything one forecast month needs: feature matrices (with the one-hot
/// block appended) for each requested set, and the peak NDVI per row.
#[derive(Debug, Clone)]
pub struct HindcastData {
    pub crop: String,
    pub forecast_month: usize,
    pub rows: Vec<RowKey>,
    pub y: Array1<f64>,
    pub matrices: BTreeMap<FeatureSet, FeatureMatrix>,
    pub peaks: Vec<f64>,
}

impl HindcastData {
    pub fn build(ds: &Dataset, forecast_month: usize, sets: &[FeatureSet]) -> Result<Self> {
        if !(1..=8).contains(&forecast_month) || forecast_month > ds.season().n_months() {
            return Err(Error::Config(format!(
                "forecast month {forecast_month} outside 1..={}",
                ds.season().n_months().min(8)
            )));
        }
        let mut matrices = BTreeMap::new();
        for &s in sets {
            matrices.insert(s, build_feature_matrix(ds, s, forecast_month, true)?);
        }
        let (rows, y): (Vec<RowKey>, Vec<f64>) = ds
            .yields()
            .records
            .iter()
            .map(|((u, yr), v)| {
                (
                    RowKey {
                        unit: u.clone(),
                        year: *yr,
                    },
                    *v,
                )
            })
            .unzip();
        let peaks = rows
            .iter()
            .map(|r| peak_ndvi(ds, &r.unit, r.year, forecast_month))
            .collect::<Result<Vec<_>>>()?;
        Ok(HindcastData {
            crop: ds.crop().to_string(),
            forecast_month,
            rows,
            y: Array1::from(y),
            matrices,
            peaks,
        })
    }

    pub fn years(&self) -> Vec<i32> {
        let mut y: Vec<i32> = self.rows.iter().map(|r| r.year).collect();
        y.sort_unstable();
        y.dedup();
        y
    }

    fn rows_in(&self, years: &[i32]) -> Vec<usize> {
        (0..self.rows.len())
            .filter(|&i| years.contains(&self.rows[i].year))
            .collect()
    }

    fn years_of(&self, idx: &[usize]) -> Vec<i32> {
        let mut y: Vec<i32> = idx.iter().map(|&i| self.rows[i].year).collect();
        y.sort_unstable();
        y.dedup();
        y
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    Inner { val_year: i32 },
    Refit,
    Benchmark,
}

/// Years actually touched by one batch of fits, derived from the row indices
/// used, so that leakage checks do not trust the fold plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitAudit {
    pub test_year: i32,
    pub stage: Stage,
    pub fit_years: Vec<i32>,
    pub eval_years: Vec<i32>,
    /// Fits performed with these rows.
    pub fits: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FitCounts {
    /// Fits implied by the full grid x fractions x folds.
    pub logical: usize,
    /// Fits run after merging grid points that yield identical models.
    pub evaluated: usize,
}

impl std::ops::AddAssign for FitCounts {
    fn add_assign(&mut self, o: Self) {
        self.logical += o.logical;
        self.evaluated += o.evaluated;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub unit: String,
    pub year: i32,
    pub y_obs: f64,
    pub y_pred: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldChoice {
    pub test_year: i32,
    pub hyper: Option<Hyper>,
    pub mrmr_percent: Option<u32>,
    /// Continuous columns fed to the model.
    pub selected: Vec<String>,
    pub n_continuous: usize,
    pub inner_rmse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub crop: String,
    pub forecast_month: usize,
    pub config: ModelConfiguration,
    pub config_id: String,
    /// Sorted by unit then year, one per yield record.
    pub records: Vec<PredictionRecord>,
    pub folds: Vec<FoldChoice>,
    pub fit_counts: FitCounts,
    pub audit: Vec<FitAudit>,
    pub skipped: Vec<String>,
    pub notes: Vec<String>,
    pub wall_time_s: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
struct Candidate {
    grid_index: usize,
    hyper: Hyper,
    percent: u32,
    k: usize,
}

/// Grid x fraction candidates in evaluation order (fraction outermost), with
/// grid points that fit identical models merged onto their first index.
fn candidates(grid: &[Hyper], mrmr: bool, n_cont: usize) -> Vec<Candidate> {
    let mut seen = HashMap::new();
    let distinct: Vec<usize> = (0..grid.len())
        .filter(|&i| *seen.entry(grid[i].effective_key()).or_insert(i) == i)
        .collect();
    let mut fracs: Vec<(u32, usize)> = Vec::new();
    let percents: &[u32] = if mrmr { &MRMR_FRACTIONS } else { &[100] };
    for &p in percents {
        let k = fraction_to_count(p, n_cont);
        if !fracs.iter().any(|&(_, kk)| kk == k) {
            fracs.push((p, k));
        }
    }
    let mut out = Vec::with_capacity(fracs.len() * distinct.len());
    for &(percent, k) in &fracs {
        for &g in &distinct {
            out.push(Candidate {
                grid_index: g,
                hyper: grid[g].clone(),
                percent,
                k,
            });
        }
    }
    out
}

struct Prepared {
    x_fit: Array2<f64>,
    y_fit: Array1<f64>,
    x_eval: Array2<f64>,
    y_eval: Array1<f64>,
    order: Vec<usize>,
    fit_years: Vec<i32>,
    eval_years: Vec<i32>,
}

struct Ctx<'a> {
    data: &'a HindcastData,
    m: &'a FeatureMatrix,
    config: &'a ModelConfiguration,
    id: String,
    opts: &'a EngineOptions,
    global_scaler: Option<ScalerParams>,
    n_cont: usize,
}

impl Ctx<'_> {
    fn prepare(&self, fit_idx: &[usize], eval_idx: &[usize]) -> Result<Prepared> {
        let x_fit_raw = self.m.x.select(Axis(0), fit_idx);
        let scaler = match &self.global_scaler {
            Some(s) => s.clone(),
            None => zscore_fit(x_fit_raw.view(), self.n_cont)?,
        };
        let x_fit = scaler.apply(x_fit_raw.view());
        let x_eval = scaler.apply(self.m.x.select(Axis(0), eval_idx).view());
        let y_fit = self.data.y.select(Axis(0), fit_idx);
        let order = if self.config.mrmr {
            let cont = x_fit.slice(ndarray::s![.., ..self.n_cont]);
            mrmr_select(cont, y_fit.view(), self.n_cont)
        } else {
            (0..self.n_cont).collect()
        };
        Ok(Prepared {
            x_fit,
            y_fit,
            x_eval,
            y_eval: self.data.y.select(Axis(0), eval_idx),
            order,
            fit_years: self.data.years_of(fit_idx),
            eval_years: self.data.years_of(eval_idx),
        })
    }

    fn columns(&self, order: &[usize], k: usize) -> Vec<usize> {
        let mut cols: Vec<usize> = order[..k].to_vec();
        cols.sort_unstable();
        if self.config.ohe {
            cols.extend(self.n_cont..self.m.x.ncols());
        }
        cols
    }

    fn seed(&self, test_year: i32, grid_index: usize, stage: Stage) -> u64 {
        let inner = match stage {
            Stage::Inner { val_year } => val_year as u64,
            _ => u64::MAX,
        };
        derive_seed_labeled(
            self.opts.seed,
            &self.id,
            &[test_year as u64, grid_index as u64, inner],
        )
    }

    fn fit_predict(&self, p: &Prepared, c: &Candidate, seed: u64) -> Result<Array1<f64>> {
        let cols = self.columns(&p.order, c.k);
        let model = models::fit(
            &c.hyper,
            p.x_fit.select(Axis(1), &cols).view(),
            p.y_fit.view(),
            seed,
        )?;
        let pred = model.predict(p.x_eval.select(Axis(1), &cols).view())?;
        if pred.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularFit("non-finite prediction".into()));
        }
        Ok(pred)
    }
}

/// Outcome of hyperparameter selection on one training period.
struct Selection {
    candidate: Candidate,
    rmse: f64,
    counts: FitCounts,
    audit: Vec<FitAudit>,
    skipped: Vec<String>,
}

fn select_inner(
    ctx: &Ctx<'_>,
    grid: &[Hyper],
    train_years: &[i32],
    test_year: i32,
) -> Result<Selection> {
    let cands = candidates(grid, ctx.config.mrmr, ctx.n_cont);
    let fractions = if ctx.config.mrmr {
        MRMR_FRACTIONS.len()
    } else {
        1
    };
    let mut audit = Vec::new();
    let mut prepared = Vec::new();
    for &val_year in train_years {
        let fit_years: Vec<i32> = train_years
            .iter()
            .copied()
            .filter(|&y| y != val_year)
            .collect();
        let p = ctx.prepare(
            &ctx.data.rows_in(&fit_years),
            &ctx.data.rows_in(&[val_year]),
        )?;
        audit.push(FitAudit {
            test_year,
            stage: Stage::Inner { val_year },
            fit_years: p.fit_years.clone(),
            eval_years: p.eval_years.clone(),
            fits: cands.len(),
        });
        prepared.push((val_year, p));
    }
    let n_inner = prepared.len();
    let scores: Vec<std::result::Result<f64, String>> =
        par_map(ctx.opts.parallelism, &cands, |c| {
            let mut sse = 0.0;
            let mut n = 0usize;
            for (val_year, p) in &prepared {
                let seed = ctx.seed(
                    test_year,
                    c.grid_index,
                    Stage::Inner {
                        val_year: *val_year,
                    },
                );
                let pred = ctx
                    .fit_predict(p, c, seed)
                    .map_err(|e| format!("{} k={} year {val_year}: {e}", c.hyper, c.k))?;
                sse += pred
                    .iter()
                    .zip(&p.y_eval)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>();
                n += pred.len();
            }
            Ok((sse / n as f64).sqrt())
        });
    let mut best: Option<(usize, f64)> = None;
    let mut skipped = Vec::new();
    for (i, s) in scores.into_iter().enumerate() {
        match s {
            Ok(r) if r.is_finite() => {
                if best.is_none_or(|(_, b)| r < b) {
                    best = Some((i, r));
                }
            }
            Ok(r) => skipped.push(format!("{}: inner RMSE {r}", cands[i].hyper)),
            Err(e) => skipped.push(e),
        }
    }
    for s in &skipped {
        log::debug!("{} test {test_year}: skipped {s}", ctx.id);
    }
    let (i, rmse) = best
        .ok_or_else(|| Error::AllGridPointsFailed(format!("{} (test year {test_year})", ctx.id)))?;
    Ok(Selection {
        candidate: cands[i].clone(),
        rmse,
        counts: FitCounts {
            logical: grid.len() * fractions * n_inner,
            evaluated: cands.len() * n_inner,
        },
        audit,
        skipped,
    })
}

struct OuterOutcome {
    preds: Vec<(usize, f64)>,
    choice: FoldChoice,
    counts: FitCounts,
    audit: Vec<FitAudit>,
    skipped: Vec<String>,
}

fn run_outer(
    ctx: &Ctx<'_>,
    grid: &[Hyper],
    test_year: i32,
    train_years: &[i32],
) -> Result<OuterOutcome> {
    let sel = select_inner(ctx, grid, train_years, test_year)?;
    let train_idx = ctx.data.rows_in(train_years);
    let test_idx = ctx.data.rows_in(&[test_year]);
    let p = ctx.prepare(&train_idx, &test_idx)?;
    let c = &sel.candidate;
    let pred = ctx.fit_predict(&p, c, ctx.seed(test_year, c.grid_index, Stage::Refit))?;
    let mut audit = sel.audit;
    audit.push(FitAudit {
        test_year,
        stage: Stage::Refit,
        fit_years: p.fit_years.clone(),
        eval_years: p.eval_years.clone(),
        fits: 1,
    });
    let mut selected: Vec<usize> = p.order[..c.k].to_vec();
    selected.sort_unstable();
    let mut counts = sel.counts;
    counts += FitCounts {
        logical: 1,
        evaluated: 1,
    };
    Ok(OuterOutcome {
        preds: test_idx.into_iter().zip(pred).collect(),
        choice: FoldChoice {
            test_year,
            hyper: Some(c.hyper.clone()),
            mrmr_percent: ctx.config.mrmr.then_some(c.percent),
            selected: selected.iter().map(|&j| ctx.m.columns[j].clone()).collect(),
            n_continuous: ctx.n_cont,
            inner_rmse: Some(sel.rmse),
        },
        counts,
        audit,
        skipped: sel.skipped,
    })
}

fn make_ctx<'a>(
    data: &'a HindcastData,
    config: &'a ModelConfiguration,
    opts: &'a EngineOptions,
) -> Result<Ctx<'a>> {
    let set = config
        .feature_set
        .ok_or_else(|| Error::Config(format!("{config} has no feature set")))?;
    let m = data
        .matrices
        .get(&set)
        .ok_or_else(|| Error::Config(format!("feature set {set} not prepared")))?;
    let n_cont = m.n_continuous();
    let global_scaler = match opts.scaler {
        ScalerMode::Global => Some(zscore_fit(m.x.view(), n_cont)?),
        ScalerMode::PerFold => None,
    };
    Ok(Ctx {
        data,
        m,
        config,
        id: config.id(),
        opts,
        global_scaler,
        n_cont,
    })
}

fn run_ml(
    data: &HindcastData,
    config: &ModelConfiguration,
    opts: &EngineOptions,
) -> Result<RunResult> {
    let ctx = make_ctx(data, config, opts)?;
    let plan: FoldPlan = plan_nested_loyo(&data.years())?;
    let grid = opts.grid(config.algorithm)?;
    let outcomes = par_map(opts.parallelism, &plan.outer, |o| {
        run_outer(&ctx, &grid, o.test_year, &o.train_years)
    });
    let mut preds = vec![f64::NAN; data.rows.len()];
    let mut result = empty_result(data, config, opts.seed);
    for o in outcomes {
        let o = o?;
        for (i, v) in o.preds {
            preds[i] = v;
        }
        result.folds.push(o.choice);
        result.fit_counts += o.counts;
        result.audit.extend(o.audit);
        result.skipped.extend(o.skipped);
    }
    result.records = records(data, &preds);
    Ok(result)
}

fn empty_result(data: &HindcastData, config: &ModelConfiguration, seed: u64) -> RunResult {
    RunResult {
        crop: data.crop.clone(),
        forecast_month: data.forecast_month,
        config: config.clone(),
        config_id: config.id(),
        records: Vec::new(),
        folds: Vec::new(),
        fit_counts: FitCounts::default(),
        audit: Vec::new(),
        skipped: Vec::new(),
        notes: Vec::new(),
        wall_time_s: 0.0,
        seed,
    }
}

fn records(data: &HindcastData, preds: &[f64]) -> Vec<PredictionRecord> {
    data.rows
        .iter()
        .zip(preds)
        .zip(&data.y)
        .map(|((r, &p), &y)| PredictionRecord {
            unit: r.unit.clone(),
            year: r.year,
            y_obs: y,
            y_pred: p,
        })
        .collect()
}

/// Simple leave-one-year-out loop for the benchmarks.
fn run_benchmark(data: &HindcastData, config: &ModelConfiguration, seed: u64) -> Result<RunResult> {
    let years = data.years();
    if years.len() < 3 {
        return Err(Error::TooFewYears {
            need: 3,
            got: years.len(),
        });
    }
    let mut preds = vec![f64::NAN; data.rows.len()];
    let mut result = empty_result(data, config, seed);
    let mut degenerate = Vec::new();
    for &test_year in &years {
        let train: Vec<usize> = (0..data.rows.len())
            .filter(|&i| data.rows[i].year != test_year)
            .collect();
        let test = data.rows_in(&[test_year]);
        match config.algorithm {
            AlgorithmId::Null => {
                let m = NullModel::fit(
                    train
                        .iter()
                        .map(|&i| (data.rows[i].unit.as_str(), data.y[i])),
                );
                for &i in &test {
                    preds[i] = m.predict(&data.rows[i].unit)?;
                }
            }
            AlgorithmId::PeakNdvi => {
                let m = PeakNdviModel::fit(
                    train
                        .iter()
                        .map(|&i| (data.rows[i].unit.as_str(), data.peaks[i], data.y[i])),
                );
                for &i in &test {
                    preds[i] = m.predict(&data.rows[i].unit, data.peaks[i])?;
                }
                for u in m.degenerate_units() {
                    degenerate.push(format!("{u} (test year {test_year})"));
                }
            }
            a => return Err(Error::Config(format!("{a} is not a benchmark"))),
        }
        result.audit.push(FitAudit {
            test_year,
            stage: Stage::Benchmark,
            fit_years: data.years_of(&train),
            eval_years: vec![test_year],
            fits: 1,
        });
        result.folds.push(FoldChoice {
            test_year,
            hyper: None,
            mrmr_percent: None,
            selected: Vec::new(),
            n_continuous: 0,
            inner_rmse: None,
        });
    }
    if !degenerate.is_empty() {
        result.notes.push(format!(
            "equal peak NDVI in all training years, fell back to the unit mean: {}",
            degenerate.join(", ")
        ));
    }
    result.fit_counts = FitCounts {
        logical: years.len(),
        evaluated: years.len(),
    };
    result.records = records(data, &preds);
    Ok(result)
}

/// Out-of-sample predictions for every configuration, in input order.
pub fn run_hindcast(
    data: &HindcastData,
    configs: &[ModelConfiguration],
    opts: &EngineOptions,
) -> Result<Vec<RunResult>> {
    par_map(opts.parallelism, configs, |c| {
        let start = Instant::now();
        let mut r = if c.is_benchmark() {
            run_benchmark(data, c, opts.seed)
        } else {
            run_ml(data, c, opts)
        }?;
        r.wall_time_s = start.elapsed().as_secs_f64();
        Ok(r)
    })
    .into_iter()
    .collect()
}

/// Model refit on every year, with hyperparameters chosen by leave-one-year-out
/// over all years. Makes no accuracy claim.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FinalModel {
    pub config_id: String,
    pub forecast_month: usize,
    pub columns: Vec<String>,
    pub scaler: ScalerParams,
    pub choice: FoldChoice,
    pub model: models::TrainedModel,
}

pub fn fit_final(
    data: &HindcastData,
    config: &ModelConfiguration,
    opts: &EngineOptions,
) -> Result<FinalModel> {
    if config.is_benchmark() {
        return Err(Error::NotTunable(config.id()));
    }
    let ctx = make_ctx(data, config, opts)?;
    let years = data.years();
    if years.len() < 3 {
        return Err(Error::TooFewYears {
            need: 3,
            got: years.len(),
        });
    }
    let grid = opts.grid(config.algorithm)?;
    // Sentinel test year outside any real year.
    let sentinel = i32::MIN;
    let sel = select_inner(&ctx, &grid, &years, sentinel)?;
    let all: Vec<usize> = (0..data.rows.len()).collect();
    let p = ctx.prepare(&all, &all)?;
    let c = &sel.candidate;
    let cols = ctx.columns(&p.order, c.k);
    let model = models::fit(
        &c.hyper,
        p.x_fit.select(Axis(1), &cols).view(),
        p.y_fit.view(),
        ctx.seed(sentinel, c.grid_index, Stage::Refit),
    )?;
    let scaler = match &ctx.global_scaler {
        Some(s) => s.clone(),
        None => zscore_fit(ctx.m.x.view(), ctx.n_cont)?,
    };
    let mut selected: Vec<usize> = p.order[..c.k].to_vec();
    selected.sort_unstable();
    Ok(FinalModel {
        config_id: ctx.id.clone(),
        forecast_month: data.forecast_month,
        columns: cols.iter().map(|&j| ctx.m.columns[j].clone()).collect(),
        scaler,
        choice: FoldChoice {
            test_year: sentinel,
            hyper: Some(c.hyper.clone()),
            mrmr_percent: config.mrmr.then_some(c.percent),
            selected: selected.iter().map(|&j| ctx.m.columns[j].clone()).collect(),
            n_continuous: ctx.n_cont,
            inner_rmse: Some(sel.rmse),
        },
        model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::ColumnKind;
    use crate::models::MaxFeatures;
    use ndarray::Array2;

    /// Two units, `years` years, one continuous feature `f` and yield `2f + 1`.
    pub(crate) fn toy(years: std::ops::RangeInclusive<i32>, noise: f64) -> HindcastData {
        let mut rows = Vec::new();
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for unit in ["A", "B"] {
            for (k, year) in years.clone().enumerate() {
                let f =
                    ((k * 7 + unit.len() * 3 + if unit == "B" { 5 } else { 0 }) % 11) as f64 / 5.0;
                let g = ((k * 5 + 2) % 7) as f64;
                rows.push(RowKey {
                    unit: unit.into(),
                    year,
                });
                let e = if k % 2 == 0 { noise } else { -noise };
                ys.push(2.0 * f + 1.0 + e + if unit == "B" { 0.5 } else { 0.0 });
                xs.extend([
                    f,
                    g,
                    if unit == "A" { 1.0 } else { 0.0 },
                    if unit == "B" { 1.0 } else { 0.0 },
                ]);
            }
        }
        let n = rows.len();
        let m = FeatureMatrix {
            rows: rows.clone(),
            columns: vec!["f".into(), "g".into(), "unit_A".into(), "unit_B".into()],
            kinds: vec![
                ColumnKind::Continuous,
                ColumnKind::Continuous,
                ColumnKind::OneHot,
                ColumnKind::OneHot,
            ],
            x: Array2::from_shape_vec((n, 4), xs).unwrap(),
            y: Array1::from(ys.clone()),
            feature_set: FeatureSet::Rs,
            months: 1,
        };
        let peaks = m.x.column(0).to_vec();
        HindcastData {
            crop: "toy".into(),
            forecast_month: 1,
            rows,
            y: Array1::from(ys),
            matrices: [(FeatureSet::Rs, m)].into_iter().collect(),
            peaks,
        }
    }

    fn lasso_opts(alphas: &[f64]) -> EngineOptions {
        let mut o = EngineOptions::default();
        o.grid_override.insert(
            AlgorithmId::Lasso,
            alphas.iter().map(|&alpha| Hyper::Lasso { alpha }).collect(),
        );
        o
    }

    #[test]
    fn null_benchmark_is_other_years_mean() {
        let data = toy(2001..=2005, 0.0);
        let r = &run_hindcast(
            &data,
            &[ModelConfiguration::benchmark(AlgorithmId::Null)],
            &EngineOptions::default(),
        )
        .unwrap()[0];
        assert_eq!(r.records.len(), data.rows.len());
        for rec in &r.records {
            let others: Vec<f64> = data
                .rows
                .iter()
                .zip(&data.y)
                .filter(|(k, _)| k.unit == rec.unit && k.year != rec.year)
                .map(|(_, &v)| v)
                .collect();
            let oracle = others.iter().sum::<f64>() / others.len() as f64;
            assert!((rec.y_pred - oracle).abs() < 1e-12);
        }
        assert_eq!(r.fit_counts.logical, 5);
    }

    #[test]
    fn peak_benchmark_recovers_noiseless_line() {
        let data = toy(2001..=2006, 0.0);
        let r = &run_hindcast(
            &data,
            &[ModelConfiguration::benchmark(AlgorithmId::PeakNdvi)],
            &EngineOptions::default(),
        )
        .unwrap()[0];
        for rec in &r.records {
            assert!((rec.y_pred - rec.y_obs).abs() < 1e-9);
        }
    }

    #[test]
    fn lasso_fit_count_formula() {
        let data = toy(2001..=2006, 0.05);
        let opts = EngineOptions::default();
        let c = ModelConfiguration::ml(AlgorithmId::Lasso, FeatureSet::Rs, false, false);
        let r = &run_hindcast(&data, &[c], &opts).unwrap()[0];
        let n = 6;
        assert_eq!(r.fit_counts.logical, 13 * n * (n - 1) + n);
        assert_eq!(r.fit_counts.evaluated, r.fit_counts.logical);
        assert_eq!(r.folds.len(), n);
    }

    #[test]
    fn single_grid_point_needs_n_minus_one_inner_fits() {
        let data = toy(2001..=2005, 0.05);
        let c = ModelConfiguration::ml(AlgorithmId::Lasso, FeatureSet::Rs, false, true);
        let r = &run_hindcast(&data, &[c], &lasso_opts(&[1e-3])).unwrap()[0];
        assert_eq!(r.fit_counts.logical, 5 * 4 + 5);
        assert!(r
            .folds
            .iter()
            .all(|f| f.hyper == Some(Hyper::Lasso { alpha: 1e-3 })));
    }

    #[test]
    fn no_test_year_in_any_fit_or_validation() {
        let data = toy(2001..=2006, 0.1);
        let mut opts = lasso_opts(&[1e-3, 1e-1]);
        opts.grid_override.insert(
            AlgorithmId::Rf,
            vec![Hyper::Forest {
                max_depth: 5,
                max_features: MaxFeatures::Sqrt,
                n_trees: 5,
                min_split: 0.2,
            }],
        );
        let configs = vec![
            ModelConfiguration::ml(AlgorithmId::Lasso, FeatureSet::Rs, true, true),
            ModelConfiguration::ml(AlgorithmId::Rf, FeatureSet::Rs, false, false),
            ModelConfiguration::benchmark(AlgorithmId::PeakNdvi),
        ];
        for r in run_hindcast(&data, &configs, &opts).unwrap() {
            assert!(!r.audit.is_empty());
            for a in &r.audit {
                assert!(!a.fit_years.contains(&a.test_year), "{}", r.config_id);
                match a.stage {
                    Stage::Inner { val_year } => {
                        assert!(!a.eval_years.contains(&a.test_year));
                        assert_eq!(a.eval_years, vec![val_year]);
                        assert!(!a.fit_years.contains(&val_year));
                    }
                    Stage::Refit | Stage::Benchmark => assert_eq!(a.eval_years, vec![a.test_year]),
                }
            }
        }
    }

    #[test]
    fn deterministic_across_worker_counts() {
        let data = toy(2001..=2006, 0.1);
        let mut opts = lasso_opts(&[1e-4, 1e-2, 1e-1]);
        opts.grid_override.insert(
            AlgorithmId::Rf,
            vec![Hyper::Forest {
                max_depth: 10,
                max_features: MaxFeatures::Sqrt,
                n_trees: 10,
                min_split: 0.2,
            }],
        );
        let configs = vec![
            ModelConfiguration::ml(AlgorithmId::Lasso, FeatureSet::Rs, true, false),
            ModelConfiguration::ml(AlgorithmId::Rf, FeatureSet::Rs, false, true),
        ];
        let mut outs = Vec::new();
        for p in [
            Parallelism::Sequential,
            Parallelism::Threads(2),
            Parallelism::Threads(7),
        ] {
            opts.parallelism = p;
            outs.push(
                run_hindcast(&data, &configs, &opts)
                    .unwrap()
                    .into_iter()
                    .map(|r| (r.records, r.folds))
                    .collect::<Vec<_>>(),
            );
        }
        assert_eq!(outs[0], outs[1]);
        assert_eq!(outs[0], outs[2]);
    }

    #[test]
    fn svr_linear_gamma_is_merged() {
        let grid = models::enumerate_grid(AlgorithmId::SvrLin, GbrGrid::Full).unwrap();
        let c = candidates(&grid, false, 10);
        assert_eq!(c.len(), 56);
        let c = candidates(&grid, true, 6);
        // 5% and 10% of 6 columns both round to one column.
        assert_eq!(c.len(), 56 * 5);
    }

    #[test]
    fn mrmr_fraction_is_reported() {
        let data = toy(2001..=2005, 0.05);
        let c = ModelConfiguration::ml(AlgorithmId::Lasso, FeatureSet::Rs, true, false);
        let r = &run_hindcast(&data, &[c], &lasso_opts(&[1e-3])).unwrap()[0];
        for f in &r.folds {
            let p = f.mrmr_percent.unwrap();
            assert_eq!(f.selected.len(), fraction_to_count(p, 2));
            assert_eq!(f.n_continuous, 2);
        }
        // 50% and above keep f (relevance 1) first; 5..25% keep one column.
        assert_eq!(r.fit_counts.logical, 6 * 5 * 4 + 5);
        assert_eq!(r.fit_counts.evaluated, 2 * 5 * 4 + 5);
    }

    #[test]
    fn final_model_uses_all_years() {
        let data = toy(2001..=2005, 0.0);
        let c = ModelConfiguration::ml(AlgorithmId::Lasso, FeatureSet::Rs, false, true);
        let f = fit_final(&data, &c, &lasso_opts(&[1e-4, 1e-1])).unwrap();
        assert_eq!(f.choice.hyper, Some(Hyper::Lasso { alpha: 1e-4 }));
        assert_eq!(f.columns, vec!["f", "g", "unit_A", "unit_B"]);
    }
}
