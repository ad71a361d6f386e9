//! Land surface phenology: double-logistic fits to seasonal NDVI, start/end of
//! season at a fraction of the fitted amplitude, and the average season window.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::calendar::{month_of_dekad, DekadIndex, DEKADS_PER_YEAR};
use crate::dataset::{DekadalSeries, YieldTable};
use crate::error::{Error, Result};

/// Season window on the dekad-of-year axis. Wraps the calendar boundary when
/// `sos > eos`; the harvest year is then the year containing `eos`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeasonWindow {
    pub sos: u8,
    pub eos: u8,
    pub sos_sd: f64,
    pub eos_sd: f64,
}

impl Default for SeasonWindow {
    /// Second dekad of November to second dekad of June.
    fn default() -> Self {
        SeasonWindow::fixed(32, 17)
    }
}

impl SeasonWindow {
    /// Unchecked window with zero spread.
    pub fn fixed(sos: u8, eos: u8) -> Self {
        SeasonWindow {
            sos,
            eos,
            sos_sd: 0.0,
            eos_sd: 0.0,
        }
    }

    pub fn new(sos: u8, eos: u8) -> Result<Self> {
        let w = SeasonWindow::fixed(sos, eos);
        if !(1..=DEKADS_PER_YEAR).contains(&sos) || !(1..=DEKADS_PER_YEAR).contains(&eos) {
            return Err(Error::Config(format!(
                "season dekads {sos}-{eos} outside 1..=36"
            )));
        }
        if w.length() < 3 {
            return Err(Error::Config(format!(
                "season window {sos}-{eos} shorter than 3 dekads"
            )));
        }
        Ok(w)
    }

    pub fn crosses_year(&self) -> bool {
        self.sos > self.eos
    }

    /// Number of dekads from `sos` through `eos` inclusive.
    pub fn length(&self) -> u8 {
        if self.sos <= self.eos {
            self.eos - self.sos + 1
        } else {
            DEKADS_PER_YEAR - self.sos + 1 + self.eos
        }
    }

    pub fn start(&self, harvest_year: i32) -> DekadIndex {
        let year = if self.crosses_year() {
            harvest_year - 1
        } else {
            harvest_year
        };
        DekadIndex::new(year, self.sos)
    }

    pub fn dekads(&self, harvest_year: i32) -> Vec<DekadIndex> {
        let start = self.start(harvest_year);
        (0..i64::from(self.length()))
            .map(|k| start.offset(k))
            .collect()
    }

    fn first_month_dekad(&self, harvest_year: i32) -> DekadIndex {
        let start = self.start(harvest_year);
        let month = month_of_dekad(self.sos);
        DekadIndex::new(start.year, (3 * (month - 1) + 1) as u8)
    }

    /// Calendar months touched by the window, i.e. the season-axis months.
    pub fn n_months(&self) -> usize {
        let first = self.first_month_dekad(2000).ordinal();
        let end = DekadIndex::new(2000, self.eos);
        let last = DekadIndex::new(2000, (3 * month_of_dekad(end.dekad)) as u8).ordinal();
        ((last - first + 1) / 3) as usize
    }

    /// Calendar month (1..=12) of season-axis month `index` (1-based).
    pub fn calendar_month(&self, index: usize) -> u32 {
        let first = month_of_dekad(self.sos);
        ((first - 1 + index as u32 - 1) % 12) + 1
    }

    /// The three dekads of season-axis month `index` (1-based).
    pub fn month(&self, harvest_year: i32, index: usize) -> [DekadIndex; 3] {
        let base = self
            .first_month_dekad(harvest_year)
            .offset(3 * (index as i64 - 1));
        [base, base.offset(1), base.offset(2)]
    }

    /// All dekads of the first `months` season months, in order.
    pub fn month_dekads(&self, harvest_year: i32, months: usize) -> Vec<DekadIndex> {
        (1..=months)
            .flat_map(|m| self.month(harvest_year, m))
            .collect()
    }
}

/// Symmetric-sum double logistic:
/// `base + amplitude * (rise(t) + fall(t) - 1)` with logistic rise centred at
/// `rise_mid` and logistic fall centred at `fall_mid`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoubleLogistic {
    pub base: f64,
    pub amplitude: f64,
    pub rise_mid: f64,
    pub rise_rate: f64,
    pub fall_mid: f64,
    pub fall_rate: f64,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl DoubleLogistic {
    pub fn validate(&self) -> Result<()> {
        let ok = self.amplitude > 0.0
            && self.rise_rate > 0.0
            && self.fall_rate > 0.0
            && self.rise_mid < self.fall_mid
            && [self.base, self.rise_mid, self.fall_mid]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!("{self:?}")))
        }
    }

    fn rise(&self, t: f64) -> f64 {
        sigmoid(self.rise_rate * (t - self.rise_mid))
    }

    fn fall(&self, t: f64) -> f64 {
        sigmoid(-self.fall_rate * (t - self.fall_mid))
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.base + self.amplitude * (self.rise(t) + self.fall(t) - 1.0)
    }

    /// Parameters in the order `base, amplitude, rise_mid, rise_rate, fall_mid, fall_rate`.
    pub fn to_array(self) -> [f64; 6] {
        [
            self.base,
            self.amplitude,
            self.rise_mid,
            self.rise_rate,
            self.fall_mid,
            self.fall_rate,
        ]
    }

    fn from_slice(p: &[f64]) -> Self {
        DoubleLogistic {
            base: p[0],
            amplitude: p[1],
            rise_mid: p[2],
            rise_rate: p[3],
            fall_mid: p[4],
            fall_rate: p[5],
        }
    }

    /// Partial derivatives in parameter order.
    fn gradient(&self, t: f64) -> [f64; 6] {
        let a = self.rise(t);
        let b = self.fall(t);
        let da = self.amplitude * a * (1.0 - a);
        let db = self.amplitude * b * (1.0 - b);
        [
            1.0,
            a + b - 1.0,
            -self.rise_rate * da,
            (t - self.rise_mid) * da,
            self.fall_rate * db,
            -(t - self.fall_mid) * db,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Minimum raw amplitude (max - min) to attempt a fit.
    pub amplitude_floor: f64,
    pub amplitude_bounds: (f64, f64),
    pub rate_bounds: (f64, f64),
    pub max_iterations: usize,
    pub step_tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            amplitude_floor: 0.05,
            amplitude_bounds: (0.01, 1.2),
            rate_bounds: (0.05, 10.0),
            max_iterations: 500,
            step_tolerance: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveFit {
    pub params: DoubleLogistic,
    pub rmse: f64,
    pub iterations: usize,
}

pub const MIN_FIT_SAMPLES: usize = 12;

/// Linear-interpolation percentile of unsorted data, `p` in [0, 1].
fn percentile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

fn initial_guess(ndvi: &[f64], t: &[f64]) -> [f64; 6] {
    let (mut lo, mut hi, mut peak) = (f64::INFINITY, f64::NEG_INFINITY, 0);
    for (i, &v) in ndvi.iter().enumerate() {
        lo = lo.min(v);
        if v > hi {
            hi = v;
            peak = i;
        }
    }
    let level = lo + 0.5 * (hi - lo);
    let crossing = |i: usize, j: usize| {
        let f = (level - ndvi[i]) / (ndvi[j] - ndvi[i]);
        t[i] + f * (t[j] - t[i])
    };
    let rise = (0..peak)
        .rev()
        .find(|&i| ndvi[i] < level)
        .map_or(t[0], |i| crossing(i, i + 1));
    let fall = (peak + 1..ndvi.len())
        .find(|&i| ndvi[i] < level)
        .map_or(t[t.len() - 1], |i| crossing(i - 1, i));
    [percentile(ndvi, 0.1), hi - lo, rise, 1.0, fall, 1.0]
}

fn sum_sq(params: &DoubleLogistic, ndvi: &[f64], t: &[f64]) -> f64 {
    ndvi.iter()
        .zip(t)
        .map(|(&y, &x)| (params.eval(x) - y).powi(2))
        .sum()
}

/// Bounded Levenberg-Marquardt least squares with Marquardt diagonal scaling.
pub fn fit_double_logistic(ndvi: &[f64], t_axis: &[f64], opts: &FitOptions) -> Result<CurveFit> {
    assert_eq!(ndvi.len(), t_axis.len(), "values and axis differ in length");
    if ndvi.len() < MIN_FIT_SAMPLES {
        return Err(Error::TooFewSamples {
            need: MIN_FIT_SAMPLES,
            got: ndvi.len(),
        });
    }
    if ndvi.iter().chain(t_axis).any(|v| !v.is_finite()) {
        return Err(Error::InvalidParams("non-finite input".into()));
    }
    let (lo, hi) = ndvi
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    if hi - lo < opts.amplitude_floor {
        return Err(Error::NoSeasonality {
            amplitude: hi - lo,
            floor: opts.amplitude_floor,
        });
    }

    let clamp = |p: &mut [f64]| {
        p[1] = p[1].clamp(opts.amplitude_bounds.0, opts.amplitude_bounds.1);
        p[3] = p[3].clamp(opts.rate_bounds.0, opts.rate_bounds.1);
        p[5] = p[5].clamp(opts.rate_bounds.0, opts.rate_bounds.1);
    };
    let mut p = initial_guess(ndvi, t_axis);
    clamp(&mut p);
    let mut current = DoubleLogistic::from_slice(&p);
    let mut cost = sum_sq(&current, ndvi, t_axis);
    let mut lambda = 1e-3;
    let n = ndvi.len();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        iterations += 1;
        let mut jac = DMatrix::<f64>::zeros(n, 6);
        let mut resid = DVector::<f64>::zeros(n);
        for i in 0..n {
            let g = current.gradient(t_axis[i]);
            for (k, gk) in g.iter().enumerate() {
                jac[(i, k)] = *gk;
            }
            resid[i] = current.eval(t_axis[i]) - ndvi[i];
        }
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * &resid;

        // Inner loop: raise damping until a step lowers the cost.
        let mut accepted = None;
        while lambda < 1e16 {
            let mut a = jtj.clone();
            for k in 0..6 {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
            }
            let Some(step) = a.lu().solve(&(-&jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let mut trial = p;
            for k in 0..6 {
                trial[k] += step[k];
            }
            clamp(&mut trial);
            let candidate = DoubleLogistic::from_slice(&trial);
            let trial_cost = sum_sq(&candidate, ndvi, t_axis);
            if trial_cost.is_finite() && trial_cost <= cost {
                accepted = Some((trial, candidate, trial_cost));
                lambda = (lambda / 10.0).max(1e-12);
                break;
            }
            lambda *= 10.0;
        }
        let Some((trial, candidate, trial_cost)) = accepted else {
            converged = true;
            break;
        };
        let step_norm = trial
            .iter()
            .zip(&p)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let scale = p.iter().map(|v| v * v).sum::<f64>().sqrt();
        p = trial;
        current = candidate;
        cost = trial_cost;
        if step_norm < opts.step_tolerance * (scale + opts.step_tolerance) || cost < 1e-28 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence { iterations });
    }
    if current.rise_mid >= current.fall_mid {
        return Err(Error::DegenerateSeason);
    }
    Ok(CurveFit {
        params: current,
        rmse: (cost / n as f64).sqrt(),
        iterations,
    })
}

/// Start and end of season where the fitted curve crosses `threshold` of the
/// amplitude on the ascending and descending branches.
pub fn extract_sos_eos(p: &DoubleLogistic, threshold: f64) -> Result<(f64, f64)> {
    assert!(
        threshold > 0.0 && threshold < 0.5,
        "threshold must lie in (0, 0.5)"
    );
    p.validate()?;
    if p.fall_mid - p.rise_mid < 1.0 / p.rise_rate + 1.0 / p.fall_rate {
        return Err(Error::DegenerateSeason);
    }
    let logit = (threshold / (1.0 - threshold)).ln();
    Ok((
        p.rise_mid + logit / p.rise_rate,
        p.fall_mid - logit / p.fall_rate,
    ))
}

fn wrap_dekad(x: f64) -> f64 {
    (x - 1.0).rem_euclid(f64::from(DEKADS_PER_YEAR)) + 1.0
}

/// Circular mean and spread of dekad-of-year values (fractional allowed).
pub fn circular_mean(dekads: &[f64]) -> (f64, f64) {
    let period = f64::from(DEKADS_PER_YEAR);
    let (s, c) = dekads.iter().fold((0.0, 0.0), |(s, c), &d| {
        let a = 2.0 * PI * (d - 1.0) / period;
        (s + a.sin(), c + a.cos())
    });
    let angle = s.atan2(c).rem_euclid(2.0 * PI);
    let mean = wrap_dekad(angle * period / (2.0 * PI) + 1.0);
    let var = dekads
        .iter()
        .map(|&d| {
            let diff = (d - mean + period / 2.0).rem_euclid(period) - period / 2.0;
            diff * diff
        })
        .sum::<f64>()
        / dekads.len() as f64;
    (mean, var.sqrt())
}

fn round_dekad(x: f64) -> u8 {
    let r = x.round() as i64;
    ((r - 1).rem_euclid(36) + 1) as u8
}

/// Averages per-unit-year `(sos, eos)` dekad-of-year pairs into one window.
pub fn average_season(windows: &[(f64, f64)]) -> Result<SeasonWindow> {
    if windows.is_empty() {
        return Err(Error::TooFewSamples { need: 1, got: 0 });
    }
    let sos: Vec<f64> = windows.iter().map(|w| w.0).collect();
    let eos: Vec<f64> = windows.iter().map(|w| w.1).collect();
    let (sos_mean, sos_sd) = circular_mean(&sos);
    let (eos_mean, eos_sd) = circular_mean(&eos);
    let mut w = SeasonWindow::new(round_dekad(sos_mean), round_dekad(eos_mean))?;
    w.sos_sd = sos_sd;
    w.eos_sd = eos_sd;
    Ok(w)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhenologyOptions {
    pub threshold: f64,
    /// First dekad-of-year of the 36-dekad fitting axis (in harvest year - 1
    /// when the axis wraps).
    pub axis_start: u8,
    pub fit: FitOptions,
}

impl Default for PhenologyOptions {
    fn default() -> Self {
        PhenologyOptions {
            threshold: 0.2,
            axis_start: 25,
            fit: FitOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhenologyRecord {
    pub unit: String,
    pub harvest_year: i32,
    /// Fractional dekad of year.
    pub sos: f64,
    pub eos: f64,
    pub fit_rmse: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PhenologySkip {
    pub unit: String,
    pub harvest_year: i32,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct PhenologyReport {
    pub window: SeasonWindow,
    pub records: Vec<PhenologyRecord>,
    pub skipped: Vec<PhenologySkip>,
}

impl PhenologyReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("unit_id,harvest_year,sos_dekad,eos_dekad,fit_rmse\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{:.3},{:.3},{:.6}\n",
                r.unit, r.harvest_year, r.sos, r.eos, r.fit_rmse
            ));
        }
        out
    }
}

/// Fits one unit-year on a 36-dekad axis and returns `(sos, eos, rmse)` in
/// fractional dekad-of-year.
pub fn unit_year_phenology(
    ndvi: &DekadalSeries,
    harvest_year: i32,
    opts: &PhenologyOptions,
) -> Result<(f64, f64, f64)> {
    let year = if opts.axis_start > 1 {
        harvest_year - 1
    } else {
        harvest_year
    };
    let start = DekadIndex::new(year, opts.axis_start);
    let dekads: Vec<DekadIndex> = (0..36).map(|k| start.offset(k)).collect();
    let values = ndvi.values_at(&dekads)?;
    let t: Vec<f64> = (0..36).map(f64::from).collect();
    let fit = fit_double_logistic(&values, &t, &opts.fit)?;
    let (sos, eos) = extract_sos_eos(&fit.params, opts.threshold)?;
    let to_doy = |x: f64| wrap_dekad(f64::from(opts.axis_start) + x);
    Ok((to_doy(sos), to_doy(eos), fit.rmse))
}

/// Fits every unit-year with a yield record and averages the windows.
/// Unit-years that cannot be fitted are skipped and reported.
pub fn estimate_season<'a>(
    ndvi: impl Fn(&str) -> Option<&'a DekadalSeries>,
    yields: &YieldTable,
    opts: &PhenologyOptions,
) -> Result<PhenologyReport> {
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for (unit, year) in yields.records.keys() {
        let outcome = match ndvi(unit) {
            Some(series) => unit_year_phenology(series, *year, opts),
            None => Err(Error::UnknownUnit(unit.clone())),
        };
        match outcome {
            Ok((sos, eos, fit_rmse)) => records.push(PhenologyRecord {
                unit: unit.clone(),
                harvest_year: *year,
                sos,
                eos,
                fit_rmse,
            }),
            Err(e) => {
                log::warn!("phenology skipped {unit} {year}: {e}");
                skipped.push(PhenologySkip {
                    unit: unit.clone(),
                    harvest_year: *year,
                    reason: e.to_string(),
                })
            }
        }
    }
    let pairs: Vec<(f64, f64)> = records.iter().map(|r| (r.sos, r.eos)).collect();
    let window = average_season(&pairs)?;
    Ok(PhenologyReport {
        window,
        records,
        skipped,
    })
}
