//! Run configuration and the end-to-end commands behind the CLI.
//!
//! Configuration is a TOML file with four sections. Every CLI flag has a key
//! here and a flag always wins over the file:
//!
//! ```toml
//! [inputs]
//! dir = "data"                 # holds timeseries.csv, yields.csv, units.csv
//! # timeseries = "..."         # per-file overrides
//!
//! [run]
//! crop = "barley"
//! months = [6, 8]              # forecast months, 1 = Dec ... 8 = Jul
//! algorithms = ["lasso", "svr_lin"]
//! sets = ["RS", "RS&Met"]
//! mrmr = [false, true]
//! ohe = [false, true]
//! benchmarks = true
//! season = [32, 17]            # skip phenology and use this window
//! seed = 42
//! workers = 4
//! scaler = "per-fold"          # or "global"
//! gbr_grid = "full"            # or "paper-n"
//!
//! [compare]
//! rope_delta = 5.0
//! confidence = 0.9
//! # rho = 0.0625               # default 1/n
//!
//! [output]
//! out = "results"
//! ```

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bayes::{comparison_csv, comparison_matrix, CompareOptions, PosteriorDecision};
use crate::cv::{
    benchmark_configurations, enumerate_configurations, fit_final, plan_nested_loyo, run_hindcast,
    select_best_configuration, EngineOptions, FinalModel, FoldChoice, HindcastData,
    ModelConfiguration, PredictionRecord, RunResult, ScalerMode,
};
use crate::dataset::{parse_inputs, Dataset, Inputs, Variable};
use crate::error::{Error, Result};
use crate::exec::Parallelism;
use crate::features::{build_feature_matrix, FeatureSet};
use crate::metrics::{
    compute_metrics, metrics_csv, metrics_from_records, parse_metrics_csv, MetricsReport,
    MetricsRow,
};
use crate::models::{AlgorithmId, GbrGrid, Hyper};
use crate::phenology::{estimate_season, PhenologyOptions, PhenologyReport, SeasonWindow};
use crate::report::{
    effects_csv, effects_table, percentile_csv, percentile_ranks, summary_markdown, EffectOption,
};

pub const TIMESERIES_CSV: &str = "timeseries.csv";
pub const YIELDS_CSV: &str = "yields.csv";
pub const UNITS_CSV: &str = "units.csv";
pub const MAX_FORECAST_MONTH: usize = 8;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputSection {
    pub dir: Option<PathBuf>,
    pub timeseries: Option<PathBuf>,
    pub yields: Option<PathBuf>,
    pub units: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub crop: Option<String>,
    pub months: Option<Vec<usize>>,
    pub algorithms: Option<Vec<String>>,
    pub sets: Option<Vec<String>>,
    pub mrmr: Option<Vec<bool>>,
    pub ohe: Option<Vec<bool>>,
    pub benchmarks: Option<bool>,
    pub season: Option<[u8; 2]>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub scaler: Option<String>,
    pub gbr_grid: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareSection {
    pub rope_delta: Option<f64>,
    pub confidence: Option<f64>,
    pub rho: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub out: Option<PathBuf>,
}

/// One configuration layer: a file, or the flags given on the command line.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub inputs: InputSection,
    pub run: RunSection,
    pub compare: CompareSection,
    pub output: OutputSection,
}

macro_rules! overlay {
    ($base:expr, $top:expr; $($section:ident . $field:ident),* $(,)?) => {
        $( if $top.$section.$field.is_some() { $base.$section.$field = $top.$section.$field; } )*
    };
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::InputMissing(path.to_path_buf()));
        }
        Self::parse(&fs::read_to_string(path)?)
    }

    /// `top` wins wherever it sets a value.
    pub fn overlay(mut self, top: ConfigFile) -> Self {
        overlay!(self, top;
            inputs.dir, inputs.timeseries, inputs.yields, inputs.units,
            run.crop, run.months, run.algorithms, run.sets, run.mrmr, run.ohe,
            run.benchmarks, run.season, run.seed, run.workers, run.scaler, run.gbr_grid,
            compare.rope_delta, compare.confidence, compare.rho,
            output.out,
        );
        self
    }
}

/// Fully resolved run settings.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub timeseries: PathBuf,
    pub yields: PathBuf,
    pub units: PathBuf,
    pub crop: Option<String>,
    /// Empty means every season month up to 8.
    pub months: Vec<usize>,
    pub algorithms: Vec<AlgorithmId>,
    pub benchmarks: bool,
    pub sets: Vec<FeatureSet>,
    pub mrmr: Vec<bool>,
    pub ohe: Vec<bool>,
    pub season: Option<SeasonWindow>,
    pub seed: u64,
    pub workers: Option<usize>,
    pub scaler: ScalerMode,
    pub gbr_grid: GbrGrid,
    pub compare: CompareOptions,
    pub out: PathBuf,
    /// Library-only: replaces algorithm grids, e.g. in tests.
    pub grid_override: HashMap<AlgorithmId, Vec<Hyper>>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::resolve(ConfigFile::default()).expect("defaults are valid")
    }
}

fn parse_list<T>(items: &[String], parse: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    items.iter().map(|s| parse(s.trim())).collect()
}

fn flags(v: Option<Vec<bool>>) -> Result<Vec<bool>> {
    let mut v = v.unwrap_or_else(|| vec![false, true]);
    v.sort_unstable();
    v.dedup();
    if v.is_empty() {
        return Err(Error::Config("option toggles must not be empty".into()));
    }
    Ok(v)
}

impl RunConfig {
    pub fn resolve(file: ConfigFile) -> Result<Self> {
        let dir = file.inputs.dir.unwrap_or_else(|| PathBuf::from("."));
        let run = file.run;
        let months = run.months.unwrap_or_default();
        if let Some(m) = months
            .iter()
            .find(|m| !(1..=MAX_FORECAST_MONTH).contains(m))
        {
            return Err(Error::Config(format!("forecast month {m} outside 1..=8")));
        }
        let parsed = match &run.algorithms {
            Some(list) => parse_list(list, |s| {
                s.parse::<AlgorithmId>()
                    .map_err(|_| Error::Config(format!("unknown algorithm '{s}'")))
            })?,
            None => AlgorithmId::ML.to_vec(),
        };
        let mut algorithms: Vec<AlgorithmId> =
            parsed.into_iter().filter(|a| !a.is_benchmark()).collect();
        algorithms.dedup();
        let mut sets = match &run.sets {
            Some(list) => parse_list(list, |s| s.parse::<FeatureSet>())?,
            None => FeatureSet::ALL.to_vec(),
        };
        sets.dedup();
        let season = run
            .season
            .map(|[sos, eos]| SeasonWindow::new(sos, eos).map_err(|e| Error::Config(e.to_string())))
            .transpose()?;
        let defaults = CompareOptions::default();
        let compare = CompareOptions {
            delta: file.compare.rope_delta.unwrap_or(defaults.delta),
            confidence: file.compare.confidence.unwrap_or(defaults.confidence),
            rho: file.compare.rho,
        };
        if compare.delta.is_nan()
            || compare.delta < 0.0
            || !(compare.confidence > 0.0 && compare.confidence <= 1.0)
        {
            return Err(Error::Config(
                "rope_delta must be >= 0 and confidence in (0, 1]".into(),
            ));
        }
        if run.workers == Some(0) {
            return Err(Error::Config("workers must be positive".into()));
        }
        Ok(RunConfig {
            timeseries: file
                .inputs
                .timeseries
                .unwrap_or_else(|| dir.join(TIMESERIES_CSV)),
            yields: file.inputs.yields.unwrap_or_else(|| dir.join(YIELDS_CSV)),
            units: file.inputs.units.unwrap_or_else(|| dir.join(UNITS_CSV)),
            crop: run.crop,
            months,
            algorithms,
            benchmarks: run.benchmarks.unwrap_or(true),
            sets,
            mrmr: flags(run.mrmr)?,
            ohe: flags(run.ohe)?,
            season,
            seed: run.seed.unwrap_or(42),
            workers: run.workers,
            scaler: run
                .scaler
                .as_deref()
                .map(str::parse)
                .transpose()?
                .unwrap_or_default(),
            gbr_grid: run
                .gbr_grid
                .as_deref()
                .map(str::parse)
                .transpose()?
                .unwrap_or_default(),
            compare,
            out: file.output.out.unwrap_or_else(|| PathBuf::from("out")),
            grid_override: HashMap::new(),
        })
    }

    pub fn engine_options(&self) -> EngineOptions {
        EngineOptions {
            seed: self.seed,
            parallelism: Parallelism::from_workers(self.workers),
            scaler: self.scaler,
            gbr_grid: self.gbr_grid,
            grid_override: self.grid_override.clone(),
        }
    }

    pub fn configurations(&self) -> Vec<ModelConfiguration> {
        let mut configs =
            enumerate_configurations(&self.algorithms, &self.sets, &self.mrmr, &self.ohe);
        if self.benchmarks {
            configs.extend(benchmark_configurations());
        }
        configs
    }

    /// Requested months, or every season month up to 8.
    pub fn forecast_months(&self, season: &SeasonWindow) -> Vec<usize> {
        let n = season.n_months().min(MAX_FORECAST_MONTH);
        if self.months.is_empty() {
            (1..=n).collect()
        } else {
            let mut m = self.months.clone();
            m.sort_unstable();
            m.dedup();
            m
        }
    }
}

fn read_required(path: &Path) -> Result<String> {
    if !path.is_file() {
        return Err(Error::InputMissing(path.to_path_buf()));
    }
    Ok(fs::read_to_string(path)?)
}

pub fn load_inputs(cfg: &RunConfig) -> Result<Inputs> {
    let ts = read_required(&cfg.timeseries)?;
    let ys = read_required(&cfg.yields)?;
    let us = read_required(&cfg.units)?;
    parse_inputs(&ts, &ys, &us, cfg.crop.as_deref())
}

/// Dataset under the configured season window, or the phenology estimate.
pub fn resolve_dataset(cfg: &RunConfig) -> Result<(Dataset, Option<PhenologyReport>)> {
    let inputs = load_inputs(cfg)?;
    match cfg.season {
        Some(season) => Ok((inputs.into_dataset(season)?, None)),
        None => {
            let report = estimate_phenology(&inputs)?;
            let window = report.window;
            Ok((inputs.into_dataset(window)?, Some(report)))
        }
    }
}

pub fn estimate_phenology(inputs: &Inputs) -> Result<PhenologyReport> {
    estimate_season(
        |u| inputs.series(u, Variable::Ndvi),
        &inputs.yields,
        &PhenologyOptions::default(),
    )
}

fn write_out(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, contents)?;
    Ok(path)
}

pub fn cmd_phenology(cfg: &RunConfig) -> Result<PhenologyReport> {
    let report = estimate_phenology(&load_inputs(cfg)?)?;
    write_out(&cfg.out, "phenology.csv", &report.to_csv())?;
    let mut json = serde_json::to_string_pretty(&report.window)?;
    json.push('\n');
    write_out(&cfg.out, "season.json", &json)?;
    Ok(report)
}

fn set_slug(set: FeatureSet) -> String {
    set.name()
        .to_ascii_lowercase()
        .replace('&', "")
        .replace('-', "_reduced")
}

/// One `features.csv` when a single (set, month) pair is requested, otherwise
/// `features_<set>_m<month>.csv` per pair.
pub fn cmd_features(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let (ds, _) = resolve_dataset(cfg)?;
    let months = cfg.forecast_months(ds.season());
    let single = months.len() == 1 && cfg.sets.len() == 1;
    let mut written = Vec::new();
    for &set in &cfg.sets {
        for &m in &months {
            let ohe = cfg.ohe.contains(&true);
            let matrix = build_feature_matrix(&ds, set, m, ohe)?;
            let name = if single {
                "features.csv".to_string()
            } else {
                format!("features_{}_m{m}.csv", set_slug(set))
            };
            written.push(write_out(&cfg.out, &name, &matrix.to_csv())?);
        }
    }
    Ok(written)
}

/// Everything a run produces, before it is written to disk.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub crop: String,
    pub season: SeasonWindow,
    pub phenology: Option<PhenologyReport>,
    pub months: Vec<usize>,
    pub results: Vec<RunResult>,
    pub reports: Vec<MetricsReport>,
    /// Best ML configuration per forecast month.
    pub best: BTreeMap<usize, String>,
    pub decisions: Vec<PosteriorDecision>,
}

impl RunOutcome {
    pub fn rows(&self) -> Vec<MetricsRow> {
        self.reports.iter().map(|r| r.row.clone()).collect()
    }

    pub fn report(&self, month: usize, config_id: &str) -> Option<&MetricsReport> {
        self.reports
            .iter()
            .find(|r| r.row.forecast_month == month && r.row.config_id == config_id)
    }
}

/// Benchmarks plus the best configuration of every other algorithm.
fn rivals<'a>(month_reports: &[&'a MetricsReport], best: &MetricsReport) -> Vec<&'a MetricsReport> {
    let best_alg = ModelConfiguration::parse_id(&best.row.config_id).map(|c| c.algorithm);
    let mut per_alg: BTreeMap<AlgorithmId, &MetricsReport> = BTreeMap::new();
    for &r in month_reports {
        let Some(c) = ModelConfiguration::parse_id(&r.row.config_id) else {
            continue;
        };
        if Some(c.algorithm) == best_alg {
            continue;
        }
        let slot = per_alg.entry(c.algorithm).or_insert(r);
        let better = r
            .row
            .rrmsep
            .total_cmp(&slot.row.rrmsep)
            .then_with(|| r.row.config_id.cmp(&slot.row.config_id))
            .is_lt();
        if better {
            *slot = r;
        }
    }
    let mut out: Vec<&MetricsReport> = per_alg
        .iter()
        .filter(|(a, _)| a.is_benchmark())
        .map(|(_, r)| *r)
        .collect();
    out.extend(
        per_alg
            .iter()
            .filter(|(a, _)| !a.is_benchmark())
            .map(|(_, r)| *r),
    );
    out
}

fn select_and_compare(
    reports: &[MetricsReport],
    months: &[usize],
    opts: &CompareOptions,
) -> Result<(BTreeMap<usize, String>, Vec<PosteriorDecision>)> {
    let mut best = BTreeMap::new();
    let mut decisions = Vec::new();
    for &m in months {
        let month_reports: Vec<&MetricsReport> = reports
            .iter()
            .filter(|r| r.row.forecast_month == m)
            .collect();
        let rows: Vec<MetricsRow> = month_reports.iter().map(|r| r.row.clone()).collect();
        let Some(choice) = select_best_configuration(&rows, false) else {
            continue;
        };
        let winner = month_reports
            .iter()
            .find(|r| r.row.config_id == choice.config_id)
            .expect("selected row has a report");
        best.insert(m, choice.config_id.clone());
        decisions.extend(comparison_matrix(
            winner,
            &rivals(&month_reports, winner),
            opts,
        )?);
    }
    Ok((best, decisions))
}

/// Hindcasts, metrics, selection and comparisons for an in-memory dataset.
pub fn run_pipeline(ds: &Dataset, cfg: &RunConfig) -> Result<RunOutcome> {
    let configs = cfg.configurations();
    if configs.is_empty() {
        return Err(Error::Config("no configurations to run".into()));
    }
    let opts = cfg.engine_options();
    let months = cfg.forecast_months(ds.season());
    let crop_mean = ds.yields().mean();
    let weights: BTreeMap<String, f64> = ds
        .units()
        .iter()
        .map(|u| (u.id.clone(), u.production_weight))
        .collect();
    let mut results = Vec::new();
    let mut reports = Vec::new();
    for &m in &months {
        let data = HindcastData::build(ds, m, &cfg.sets)?;
        for r in run_hindcast(&data, &configs, &opts)? {
            reports.push(compute_metrics(&r, crop_mean, &weights)?);
            results.push(r);
        }
    }
    let (best, decisions) = select_and_compare(&reports, &months, &cfg.compare)?;
    Ok(RunOutcome {
        crop: ds.crop().to_string(),
        season: *ds.season(),
        phenology: None,
        months,
        results,
        reports,
        best,
        decisions,
    })
}

/// One line of `predictions.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub crop: String,
    pub forecast_month: usize,
    pub config_id: String,
    pub unit_id: String,
    pub year: i32,
    pub y_obs: f64,
    pub y_pred: f64,
}

pub fn predictions_csv(results: &[RunResult]) -> Result<String> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    w.write_record([
        "crop",
        "forecast_month",
        "config_id",
        "unit_id",
        "year",
        "y_obs",
        "y_pred",
    ])?;
    for r in results {
        for p in &r.records {
            w.serialize(PredictionRow {
                crop: r.crop.clone(),
                forecast_month: r.forecast_month,
                config_id: r.config_id.clone(),
                unit_id: p.unit.clone(),
                year: p.year,
                y_obs: p.y_obs,
                y_pred: p.y_pred,
            })?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn parse_predictions_csv(text: &str) -> Result<Vec<PredictionRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.deserialize()
        .enumerate()
        .map(|(i, row)| {
            row.map_err(|e| Error::MalformedRow {
                file: "predictions.csv",
                line: i as u64 + 2,
                reason: e.to_string(),
            })
        })
        .collect()
}

#[derive(Debug, Serialize)]
struct FoldPlanSummary {
    years: Vec<i32>,
    outer_folds: usize,
    inner_folds_per_outer: usize,
}

#[derive(Debug, Serialize)]
struct ManifestRun<'a> {
    forecast_month: usize,
    config_id: &'a str,
    seed: u64,
    logical_fits: usize,
    evaluated_fits: usize,
    skipped_grid_points: &'a [String],
    notes: &'a [String],
    folds: &'a [FoldChoice],
}

#[derive(Debug, Serialize)]
struct RunTiming<'a> {
    forecast_month: usize,
    config_id: &'a str,
    wall_time_s: f64,
}

/// The only part of the manifest that changes between identical runs.
#[derive(Debug, Serialize)]
struct Timing<'a> {
    timestamp: String,
    total_wall_time_s: f64,
    runs: Vec<RunTiming<'a>>,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    version: &'static str,
    crop: &'a str,
    seed: u64,
    season: SeasonWindow,
    season_source: &'static str,
    forecast_months: &'a [usize],
    algorithms: Vec<&'static str>,
    feature_sets: Vec<&'static str>,
    mrmr: &'a [bool],
    ohe: &'a [bool],
    benchmarks: bool,
    scaler: ScalerMode,
    gbr_grid: GbrGrid,
    grid_sizes: BTreeMap<&'static str, usize>,
    fold_plan: FoldPlanSummary,
    comparison: CompareManifest,
    best: &'a BTreeMap<usize, String>,
    runs: Vec<ManifestRun<'a>>,
    timing: Timing<'a>,
}

#[derive(Debug, Serialize)]
struct CompareManifest {
    statistic: &'static str,
    rope_delta: f64,
    confidence: f64,
    rho: String,
    zero_variance_rule: &'static str,
}

fn manifest_json(cfg: &RunConfig, ds: &Dataset, out: &RunOutcome, total: f64) -> Result<String> {
    let opts = cfg.engine_options();
    let mut grid_sizes = BTreeMap::new();
    for &a in &cfg.algorithms {
        grid_sizes.insert(a.name(), opts.grid(a)?.len());
    }
    let years = ds.yields().years();
    let plan = plan_nested_loyo(&years)?;
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION"),
        crop: &out.crop,
        seed: cfg.seed,
        season: out.season,
        season_source: if cfg.season.is_some() {
            "config"
        } else {
            "phenology"
        },
        forecast_months: &out.months,
        algorithms: cfg.algorithms.iter().map(|a| a.name()).collect(),
        feature_sets: cfg.sets.iter().map(|s| s.name()).collect(),
        mrmr: &cfg.mrmr,
        ohe: &cfg.ohe,
        benchmarks: cfg.benchmarks,
        scaler: cfg.scaler,
        gbr_grid: cfg.gbr_grid,
        grid_sizes,
        fold_plan: FoldPlanSummary {
            years: plan.years.clone(),
            outer_folds: plan.outer.len(),
            inner_folds_per_outer: plan.outer.first().map_or(0, |o| o.inner.len()),
        },
        comparison: CompareManifest {
            statistic: "per-year provincial rRMSE_p, rival minus best",
            rope_delta: cfg.compare.delta,
            confidence: cfg.compare.confidence,
            rho: cfg
                .compare
                .rho
                .map_or_else(|| "1/n".to_string(), |r| r.to_string()),
            zero_variance_rule: "point mass at the mean difference",
        },
        best: &out.best,
        runs: out
            .results
            .iter()
            .map(|r| ManifestRun {
                forecast_month: r.forecast_month,
                config_id: &r.config_id,
                seed: r.seed,
                logical_fits: r.fit_counts.logical,
                evaluated_fits: r.fit_counts.evaluated,
                skipped_grid_points: &r.skipped,
                notes: &r.notes,
                folds: &r.folds,
            })
            .collect(),
        timing: Timing {
            timestamp: chrono::Utc::now().to_rfc3339(),
            total_wall_time_s: total,
            runs: out
                .results
                .iter()
                .map(|r| RunTiming {
                    forecast_month: r.forecast_month,
                    config_id: &r.config_id,
                    wall_time_s: r.wall_time_s,
                })
                .collect(),
        },
    };
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    Ok(json)
}

/// Full run: phenology (unless a window is configured), hindcasts, metrics,
/// selection and comparisons, with every artifact written to `cfg.out`.
pub fn cmd_run(cfg: &RunConfig) -> Result<RunOutcome> {
    let start = std::time::Instant::now();
    let (ds, phenology) = resolve_dataset(cfg)?;
    let mut outcome = run_pipeline(&ds, cfg)?;
    outcome.phenology = phenology;
    let dir = &cfg.out;
    if let Some(p) = &outcome.phenology {
        write_out(dir, "phenology.csv", &p.to_csv())?;
    }
    write_out(dir, "predictions.csv", &predictions_csv(&outcome.results)?)?;
    let rows = outcome.rows();
    write_out(dir, "metrics.csv", &metrics_csv(&rows)?)?;
    write_out(dir, "comparison.csv", &comparison_csv(&outcome.decisions)?)?;
    write_out(
        dir,
        "summary.md",
        &summary_markdown(&rows, &outcome.decisions),
    )?;
    let manifest = manifest_json(cfg, &ds, &outcome, start.elapsed().as_secs_f64())?;
    write_out(dir, "run_manifest.json", &manifest)?;
    Ok(outcome)
}

fn read_output(cfg: &RunConfig, name: &str) -> Result<String> {
    read_required(&cfg.out.join(name))
}

/// Recomputes comparisons from a previous run's `predictions.csv` under the
/// current ROPE settings and rewrites `comparison.csv`.
pub fn cmd_compare(cfg: &RunConfig) -> Result<Vec<PosteriorDecision>> {
    let inputs = load_inputs(cfg)?;
    let crop_mean = inputs.yields.mean();
    let weights: BTreeMap<String, f64> = inputs
        .units
        .iter()
        .map(|u| (u.id.clone(), u.production_weight))
        .collect();
    let rows = parse_predictions_csv(&read_output(cfg, "predictions.csv")?)?;
    let mut grouped: BTreeMap<(usize, String), (String, Vec<PredictionRecord>)> = BTreeMap::new();
    for r in rows {
        let entry = grouped
            .entry((r.forecast_month, r.config_id))
            .or_insert_with(|| (r.crop, Vec::new()));
        entry.1.push(PredictionRecord {
            unit: r.unit_id,
            year: r.year,
            y_obs: r.y_obs,
            y_pred: r.y_pred,
        });
    }
    let mut months: Vec<usize> = grouped.keys().map(|k| k.0).collect();
    months.dedup();
    if !cfg.months.is_empty() {
        months.retain(|m| cfg.months.contains(m));
    }
    let reports = grouped
        .iter()
        .filter(|((m, _), _)| months.contains(m))
        .map(|((m, id), (crop, recs))| {
            metrics_from_records(crop, *m, id, recs, crop_mean, &weights)
        })
        .collect::<Result<Vec<_>>>()?;
    let (_, decisions) = select_and_compare(&reports, &months, &cfg.compare)?;
    write_out(&cfg.out, "comparison.csv", &comparison_csv(&decisions)?)?;
    Ok(decisions)
}

#[derive(Debug, Clone)]
pub struct ReportOutcome {
    pub files: Vec<PathBuf>,
    /// Options without paired configurations, skipped with this note.
    pub skipped: Vec<String>,
}

/// Percentile ranks, option effects and a summary from `metrics.csv`.
pub fn cmd_report(cfg: &RunConfig) -> Result<ReportOutcome> {
    let mut rows = parse_metrics_csv(&read_output(cfg, "metrics.csv")?)?;
    if !cfg.months.is_empty() {
        rows.retain(|r| cfg.months.contains(&r.forecast_month));
    }
    let mut files = vec![write_out(
        &cfg.out,
        "percentile_ranks.csv",
        &percentile_csv(&percentile_ranks(&rows))?,
    )?];
    let mut skipped = Vec::new();
    for option in [EffectOption::Ohe, EffectOption::Mrmr] {
        match effects_table(&rows, option) {
            Ok(table) => files.push(write_out(
                &cfg.out,
                &format!("effects_{option}.csv"),
                &effects_csv(&table)?,
            )?),
            Err(e @ Error::UnpairedConfigs(_)) => skipped.push(e.to_string()),
            Err(e) => return Err(e),
        }
    }
    files.push(write_out(
        &cfg.out,
        "report.md",
        &summary_markdown(&rows, &[]),
    )?);
    Ok(ReportOutcome { files, skipped })
}

/// Refits `config_id` (or each month's best configuration from `metrics.csv`)
/// on all years and writes `final_model_m<month>.json`.
pub fn cmd_fit_final(cfg: &RunConfig, config_id: Option<&str>) -> Result<Vec<FinalModel>> {
    let (ds, _) = resolve_dataset(cfg)?;
    let months = cfg.forecast_months(ds.season());
    let metrics = match config_id {
        Some(_) => Vec::new(),
        None => parse_metrics_csv(&read_output(cfg, "metrics.csv")?)?,
    };
    let opts = cfg.engine_options();
    let mut out = Vec::new();
    for m in months {
        let id = match config_id {
            Some(id) => id.to_string(),
            None => {
                let rows: Vec<MetricsRow> = metrics
                    .iter()
                    .filter(|r| r.forecast_month == m)
                    .cloned()
                    .collect();
                match select_best_configuration(&rows, false) {
                    Some(r) => r.config_id.clone(),
                    None => continue,
                }
            }
        };
        let config = ModelConfiguration::parse_id(&id)
            .ok_or_else(|| Error::Config(format!("unknown configuration id '{id}'")))?;
        let sets: Vec<FeatureSet> = config.feature_set.into_iter().collect();
        let data = HindcastData::build(&ds, m, &sets)?;
        let model = fit_final(&data, &config, &opts)?;
        let mut json = serde_json::to_string_pretty(&model)?;
        json.push('\n');
        write_out(&cfg.out, &format!("final_model_m{m}.json"), &json)?;
        out.push(model);
    }
    Ok(out)
}
