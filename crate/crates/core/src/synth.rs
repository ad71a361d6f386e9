//! Seeded synthetic datasets with a known yield law.
//!
//! NDVI follows a per-unit-year double logistic whose 20%-amplitude crossings
//! sit on the scenario's season window. Weather is drawn independently of the
//! unit, so a unit offset in the yield law is invisible to every feature and
//! only the one-hot columns can pick it up.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use crate::calendar::{DekadIndex, DEKADS_PER_YEAR};
use crate::dataset::{round_sig, AdminUnit, Dataset, DekadalSeries, Variable, YieldTable};
use crate::error::{Error, Result};
use crate::phenology::{DoubleLogistic, SeasonWindow};

const SIG_DIGITS: usize = 6;
const AXIS_START: u8 = 25;
const MAX_RESAMPLES: usize = 10_000;
const MEAN_YIELD: f64 = 1.5;
const PEAK_SLOPE: f64 = 4.0;
/// t/ha per mm of spring rain.
const RAIN_COEF: f64 = 0.01;
const RAIN_SCALE_MM: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Law {
    /// `yield = a * peak_ndvi + b + offset_u + e`
    PeakLinear,
    /// `yield = a * peak_ndvi + c * spring_rain + b + offset_u + e`
    MeteoModulated,
    /// `yield = mean + offset_u + e`
    PureNoise,
}

impl fmt::Display for Law {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Law::PeakLinear => "PEAK_LINEAR",
            Law::MeteoModulated => "METEO_MODULATED",
            Law::PureNoise => "PURE_NOISE",
        })
    }
}

impl FromStr for Law {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace('-', "_").as_str() {
            "PEAK_LINEAR" => Ok(Law::PeakLinear),
            "METEO_MODULATED" => Ok(Law::MeteoModulated),
            "PURE_NOISE" => Ok(Law::PureNoise),
            _ => Err(Error::Config(format!("unknown generative law '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioSpec {
    pub crop: String,
    pub n_units: usize,
    pub first_year: i32,
    pub n_years: usize,
    pub sos: u8,
    pub eos: u8,
    pub law: Law,
    /// Yield noise sd in t/ha.
    pub noise_sd: f64,
    /// Unit offsets are spread evenly over `[-unit_offset, unit_offset]`.
    pub unit_offset: f64,
    /// Half-width of the uniform noise added to each NDVI sample.
    pub ndvi_noise: f64,
    pub seed: u64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            crop: "wheat".into(),
            n_units: 5,
            first_year: 2002,
            n_years: 17,
            sos: 32,
            eos: 17,
            law: Law::PeakLinear,
            noise_sd: 0.05,
            unit_offset: 0.2,
            ndvi_noise: 0.005,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub unit: String,
    pub year: i32,
    pub peak_ndvi: f64,
    pub spring_rain: f64,
    /// Noise-free part of the yield.
    pub signal: f64,
    pub yield_t_ha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub spec: ScenarioSpec,
    pub peak_slope: f64,
    pub rain_coef: f64,
    pub intercept: f64,
    pub unit_offsets: BTreeMap<String, f64>,
    pub records: Vec<TruthRecord>,
}

#[derive(Debug, Clone)]
pub struct Synthetic {
    pub dataset: Dataset,
    pub truth: Truth,
}

impl Synthetic {
    /// Writes `timeseries.csv`, `yields.csv`, `units.csv` and `truth.json`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let (ts, ys, us) = self.dataset.to_csv();
        fs::write(dir.join("timeseries.csv"), ts)?;
        fs::write(dir.join("yields.csv"), ys)?;
        fs::write(dir.join("units.csv"), us)?;
        let mut json = serde_json::to_string_pretty(&self.truth)?;
        json.push('\n');
        fs::write(dir.join("truth.json"), json)?;
        Ok(())
    }
}

/// Position of a dekad-of-year on the fitting axis (0 = dekad 25 of the
/// previous year).
fn axis_pos(dekad: u8) -> f64 {
    f64::from((i32::from(dekad) - i32::from(AXIS_START)).rem_euclid(36))
}

fn validate(spec: &ScenarioSpec) -> Result<SeasonWindow> {
    let bad = |m: &str| Err(Error::InfeasibleSpec(m.to_string()));
    if spec.n_units == 0 {
        return bad("n_units must be positive");
    }
    if spec.n_years < 3 {
        return bad("at least 3 years are required");
    }
    if !(spec.noise_sd >= 0.0 && spec.noise_sd.is_finite()) {
        return bad("noise_sd must be finite and non-negative");
    }
    if !(spec.unit_offset >= 0.0 && spec.unit_offset < MEAN_YIELD) {
        return bad("unit_offset must lie in [0, 1.5)");
    }
    if !(0.0..=0.05).contains(&spec.ndvi_noise) {
        return bad("ndvi_noise must lie in [0, 0.05]");
    }
    let season =
        SeasonWindow::new(spec.sos, spec.eos).map_err(|e| Error::InfeasibleSpec(e.to_string()))?;
    if axis_pos(spec.eos) - axis_pos(spec.sos) < 12.0 {
        return bad("season must span at least 12 dekads inside the Sep-Aug axis");
    }
    if season.n_months() < 4 {
        return bad("season must cover at least 4 months");
    }
    Ok(season)
}

/// Double logistic whose 20% crossings sit at axis positions `sos`/`eos`.
fn season_curve(rng: &mut ChaCha8Rng, sos: f64, eos: f64) -> DoubleLogistic {
    let jitter = Normal::new(0.0, 0.3).expect("valid sd");
    let rise_rate = rng.random_range(0.7..1.0);
    let fall_rate = rng.random_range(0.7..1.0);
    let shift = 4f64.ln();
    let base: f64 = 0.15 + Normal::new(0.0, 0.01).expect("valid sd").sample(rng);
    let amplitude: f64 = 0.45 + Normal::new(0.0, 0.05).expect("valid sd").sample(rng);
    DoubleLogistic {
        base: base.clamp(0.1, 0.2),
        amplitude: amplitude.clamp(0.3, 0.6),
        rise_mid: sos + shift / rise_rate + jitter.sample(rng),
        rise_rate,
        fall_mid: eos - shift / fall_rate + jitter.sample(rng),
        fall_rate,
    }
}

/// Mean dekadal value of a smooth annual cycle peaking at `peak_dekad`.
fn annual_cycle(dekad: u8, mean: f64, half_range: f64, peak_dekad: f64) -> f64 {
    let phase = 2.0 * std::f64::consts::PI * (f64::from(dekad) - peak_dekad) / 36.0;
    mean + half_range * phase.cos()
}

fn unit_id(i: usize) -> String {
    format!("U{:02}", i + 1)
}

pub fn generate(spec: &ScenarioSpec) -> Result<Synthetic> {
    let season = validate(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let sos = axis_pos(spec.sos);
    let eos = axis_pos(spec.eos);
    let last_year = spec.first_year + spec.n_years as i32 - 1;
    let ndvi_noise = spec.ndvi_noise;
    let t_noise = Normal::new(0.0, 1.5).expect("valid sd");
    let rad_noise = Normal::new(0.0, 4.0).expect("valid sd");

    let mut units = Vec::new();
    let mut series = Vec::new();
    for u in 0..spec.n_units {
        let id = unit_id(u);
        let weight = round_sig(rng.random_range(5_000.0..50_000.0), SIG_DIGITS);
        units.push(AdminUnit {
            id: id.clone(),
            name: format!("Unit {:02}", u + 1),
            production_weight: weight,
        });
        let mut by_var: BTreeMap<Variable, DekadalSeries> = Variable::ALL
            .into_iter()
            .map(|v| (v, DekadalSeries::new(id.clone(), v)))
            .collect();
        // Season `s` owns dekads 25..36 of year s-1 and 1..24 of year s.
        for s in spec.first_year..=last_year + 1 {
            let curve = season_curve(&mut rng, sos, eos);
            let start = DekadIndex::new(s - 1, AXIS_START);
            for k in 0..i64::from(DEKADS_PER_YEAR) {
                let at = start.offset(k);
                if at.year < spec.first_year - 1 || at.year > last_year {
                    continue;
                }
                let noise = if ndvi_noise > 0.0 {
                    rng.random_range(-ndvi_noise..=ndvi_noise)
                } else {
                    0.0
                };
                let ndvi = (curve.eval(k as f64) + noise).clamp(-0.2, 1.0);
                // Rain peaks in winter, temperature and radiation in summer.
                let rain_scale = annual_cycle(at.dekad, RAIN_SCALE_MM, 0.6 * RAIN_SCALE_MM, 1.0);
                let rain = Gamma::new(1.0, rain_scale)
                    .expect("positive scale")
                    .sample(&mut rng);
                let t = annual_cycle(at.dekad, 17.0, 8.0, 20.0) + t_noise.sample(&mut rng);
                let tmin = t - rng.random_range(4.0..8.0);
                let tmax = t + rng.random_range(4.0..8.0);
                let rad = (annual_cycle(at.dekad, 65.0, 25.0, 18.0) + rad_noise.sample(&mut rng))
                    .max(0.0);
                for (v, x) in [
                    (Variable::Ndvi, ndvi),
                    (Variable::Rain, rain),
                    (Variable::T, t),
                    (Variable::Tmin, tmin),
                    (Variable::Tmax, tmax),
                    (Variable::Rad, rad),
                ] {
                    let x = round_sig(x, SIG_DIGITS);
                    by_var
                        .get_mut(&v)
                        .expect("all variables")
                        .samples
                        .insert(at, x);
                }
            }
        }
        series.extend(by_var.into_values());
    }

    let mut offsets: Vec<f64> = (0..spec.n_units)
        .map(|u| {
            if spec.n_units == 1 {
                0.0
            } else {
                spec.unit_offset * (2.0 * u as f64 / (spec.n_units - 1) as f64 - 1.0)
            }
        })
        .collect();
    // Shuffle so offsets do not follow unit order.
    for i in (1..offsets.len()).rev() {
        let j = rng.random_range(0..=i);
        offsets.swap(i, j);
    }
    let unit_offsets: BTreeMap<String, f64> = offsets
        .iter()
        .enumerate()
        .map(|(u, &o)| (unit_id(u), o))
        .collect();

    let n_months = season.n_months();
    let spring_months = [n_months - 3, n_months - 2];
    let expected_rain: f64 = spring_months
        .iter()
        .flat_map(|&m| season.month(spec.first_year, m))
        .map(|d| annual_cycle(d.dekad, RAIN_SCALE_MM, 0.6 * RAIN_SCALE_MM, 1.0))
        .sum();
    let (peak_slope, rain_coef) = match spec.law {
        Law::PeakLinear => (PEAK_SLOPE, 0.0),
        Law::MeteoModulated => (PEAK_SLOPE, RAIN_COEF),
        Law::PureNoise => (0.0, 0.0),
    };
    let intercept = MEAN_YIELD - peak_slope * 0.6 - rain_coef * expected_rain;
    let eps = Normal::new(0.0, spec.noise_sd.max(f64::MIN_POSITIVE)).expect("valid sd");

    let lookup: BTreeMap<(String, Variable), &DekadalSeries> = series
        .iter()
        .map(|s| ((s.unit.clone(), s.variable), s))
        .collect();
    let mut records = Vec::new();
    let mut yields = BTreeMap::new();
    for u in 0..spec.n_units {
        let id = unit_id(u);
        let ndvi = lookup[&(id.clone(), Variable::Ndvi)];
        let rain = lookup[&(id.clone(), Variable::Rain)];
        for year in spec.first_year..=last_year {
            let peak = ndvi
                .values_at(&season.month_dekads(year, n_months))?
                .into_iter()
                .fold(f64::NEG_INFINITY, f64::max);
            let spring: f64 = spring_months
                .iter()
                .map(|&m| {
                    rain.values_at(&season.month(year, m))
                        .map(|v| v.iter().sum::<f64>())
                })
                .sum::<Result<f64>>()?;
            let signal = intercept + peak_slope * peak + rain_coef * spring + unit_offsets[&id];
            let mut value = None;
            for _ in 0..MAX_RESAMPLES {
                let e = if spec.noise_sd > 0.0 {
                    eps.sample(&mut rng)
                } else {
                    0.0
                };
                let y = round_sig(signal + e, SIG_DIGITS);
                if y > 0.0 {
                    value = Some(y);
                    break;
                }
            }
            let Some(y) = value else {
                return Err(Error::InfeasibleSpec(format!(
                    "no positive yield for {id} {year} (signal {signal:.3})"
                )));
            };
            yields.insert((id.clone(), year), y);
            records.push(TruthRecord {
                unit: id.clone(),
                year,
                peak_ndvi: peak,
                spring_rain: spring,
                signal,
                yield_t_ha: y,
            });
        }
    }

    let table = YieldTable {
        crop: spec.crop.clone(),
        records: yields,
    };
    let dataset = Dataset::new(units, series, table, season)?;
    Ok(Synthetic {
        dataset,
        truth: Truth {
            spec: spec.clone(),
            peak_slope,
            rain_coef,
            intercept,
            unit_offsets,
            records,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::parse_inputs;
    use crate::features::peak_ndvi;
    use crate::phenology::{estimate_season, PhenologyOptions};

    fn small(law: Law, seed: u64) -> ScenarioSpec {
        ScenarioSpec {
            n_units: 3,
            n_years: 6,
            law,
            seed,
            ..ScenarioSpec::default()
        }
    }

    #[test]
    fn deterministic_csv() {
        let a = generate(&small(Law::MeteoModulated, 9))
            .unwrap()
            .dataset
            .to_csv();
        let b = generate(&small(Law::MeteoModulated, 9))
            .unwrap()
            .dataset
            .to_csv();
        let c = generate(&small(Law::MeteoModulated, 10))
            .unwrap()
            .dataset
            .to_csv();
        assert_eq!(a, b);
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn output_reparses_and_respects_ranges() {
        let syn = generate(&small(Law::PeakLinear, 3)).unwrap();
        let (ts, ys, us) = syn.dataset.to_csv();
        let inputs = parse_inputs(&ts, &ys, &us, None).unwrap();
        let ds = inputs.into_dataset(*syn.dataset.season()).unwrap();
        assert_eq!(ds.yields().records.len(), 18);
        for s in ds.all_series() {
            assert!(s.samples.values().all(|&v| s.variable.accepts(v)));
        }
    }

    #[test]
    fn noiseless_peak_law_is_exact() {
        let spec = ScenarioSpec {
            noise_sd: 0.0,
            ..small(Law::PeakLinear, 1)
        };
        let syn = generate(&spec).unwrap();
        let ds = &syn.dataset;
        let months = ds.season().n_months();
        for r in &syn.truth.records {
            let peak = peak_ndvi(ds, &r.unit, r.year, months).unwrap();
            let expect =
                syn.truth.intercept + syn.truth.peak_slope * peak + syn.truth.unit_offsets[&r.unit];
            assert!((r.yield_t_ha - expect).abs() < 1e-5 * expect);
        }
    }

    #[test]
    fn pure_noise_ignores_features() {
        let syn = generate(&small(Law::PureNoise, 2)).unwrap();
        for r in &syn.truth.records {
            assert!((r.signal - MEAN_YIELD - syn.truth.unit_offsets[&r.unit]).abs() < 1e-12);
        }
    }

    #[test]
    fn phenology_recovers_window() {
        let syn = generate(&small(Law::PeakLinear, 4)).unwrap();
        let ds = &syn.dataset;
        let report = estimate_season(
            |u| ds.series(u, Variable::Ndvi),
            ds.yields(),
            &PhenologyOptions::default(),
        )
        .unwrap();
        assert!(report.skipped.is_empty());
        assert_eq!((report.window.sos, report.window.eos), (32, 17));
    }

    #[test]
    fn offsets_are_symmetric() {
        let syn = generate(&ScenarioSpec {
            unit_offset: 0.5,
            ..small(Law::MeteoModulated, 5)
        })
        .unwrap();
        let mut o: Vec<f64> = syn.truth.unit_offsets.values().copied().collect();
        o.sort_by(f64::total_cmp);
        assert_eq!(o, vec![-0.5, 0.0, 0.5]);
    }

    #[test]
    fn infeasible_specs() {
        for spec in [
            ScenarioSpec {
                n_units: 0,
                ..ScenarioSpec::default()
            },
            ScenarioSpec {
                n_years: 2,
                ..ScenarioSpec::default()
            },
            ScenarioSpec {
                noise_sd: -1.0,
                ..ScenarioSpec::default()
            },
            ScenarioSpec {
                unit_offset: 3.0,
                ..ScenarioSpec::default()
            },
            ScenarioSpec {
                sos: 10,
                eos: 12,
                ..ScenarioSpec::default()
            },
        ] {
            assert!(
                matches!(generate(&spec), Err(Error::InfeasibleSpec(_))),
                "{spec:?}"
            );
        }
    }

    #[test]
    fn law_names() {
        for law in [Law::PeakLinear, Law::MeteoModulated, Law::PureNoise] {
            assert_eq!(law.to_string().parse::<Law>().unwrap(), law);
        }
        assert_eq!(
            serde_json::to_string(&Law::MeteoModulated).unwrap(),
            "\"METEO_MODULATED\""
        );
    }
}
