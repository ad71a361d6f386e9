//! Bayesian correlated t-test with a region of practical equivalence.

use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::metrics::MetricsReport;

/// Student-t posterior over the mean paired difference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Posterior {
    pub location: f64,
    pub scale: f64,
    pub dof: f64,
    /// Zero-variance differences: all mass sits at `location`.
    pub point_mass: bool,
}

/// `rho` is the correlation between folds; `None` uses the test fraction `1/n`.
pub fn correlated_t_posterior(diffs: &[f64], rho: Option<f64>) -> Result<Posterior> {
    let n = diffs.len();
    if n < 2 {
        return Err(Error::TooFewSamples { need: 2, got: n });
    }
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(Error::InvalidParams("non-finite difference".into()));
    }
    let nf = n as f64;
    let rho = rho.unwrap_or(1.0 / nf);
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::InvalidParams(format!("rho {rho} outside [0, 1)")));
    }
    let mean = diffs.iter().sum::<f64>() / nf;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    let scale = (var * (1.0 / nf + rho / (1.0 - rho))).sqrt();
    Ok(Posterior {
        location: mean,
        scale,
        dof: nf - 1.0,
        point_mass: scale.is_nan() || scale <= 0.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RopeProbabilities {
    /// Mass below `-delta`: model A has the smaller error.
    pub p_smaller: f64,
    pub p_equivalent: f64,
    /// Mass above `delta`: model A has the larger error.
    pub p_larger: f64,
}

/// Standard Student-t CDF.
pub fn student_t_cdf(x: f64, dof: f64) -> f64 {
    StudentsT::new(0.0, 1.0, dof).expect("dof > 0").cdf(x)
}

pub fn rope_probabilities(post: &Posterior, delta: f64) -> RopeProbabilities {
    let (p_smaller, p_larger) = if post.point_mass {
        let m = post.location;
        (
            if m < -delta { 1.0 } else { 0.0 },
            if m > delta { 1.0 } else { 0.0 },
        )
    } else {
        // Written so that negating the location swaps the two tails exactly.
        (
            student_t_cdf((-delta - post.location) / post.scale, post.dof),
            student_t_cdf((post.location - delta) / post.scale, post.dof),
        )
    };
    RopeProbabilities {
        p_smaller,
        p_equivalent: (1.0 - (p_smaller + p_larger)).max(0.0),
        p_larger,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Smaller,
    Equivalent,
    Larger,
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Smaller => "Smaller",
            Verdict::Equivalent => "Equivalent",
            Verdict::Larger => "Larger",
            Verdict::Inconclusive => "Inconclusive",
        })
    }
}

pub fn verdict(p: &RopeProbabilities, confidence: f64) -> Verdict {
    if p.p_smaller >= confidence {
        Verdict::Smaller
    } else if p.p_equivalent >= confidence {
        Verdict::Equivalent
    } else if p.p_larger >= confidence {
        Verdict::Larger
    } else {
        Verdict::Inconclusive
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompareOptions {
    /// ROPE half-width in rRMSE percentage points.
    pub delta: f64,
    pub confidence: f64,
    pub rho: Option<f64>,
}

impl Default for CompareOptions {
    fn default() -> Self {
        CompareOptions {
            delta: 5.0,
            confidence: 0.9,
            rho: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDecision {
    pub crop: String,
    pub forecast_month: usize,
    pub model_a: String,
    pub model_b: String,
    pub posterior: Posterior,
    pub probabilities: RopeProbabilities,
    pub verdict: Verdict,
    pub delta: f64,
    pub confidence: f64,
}

/// Pairs two per-year series; both must cover exactly the same years.
pub fn paired_differences(a: &[(i32, f64)], b: &[(i32, f64)]) -> Result<Vec<f64>> {
    let ya: Vec<i32> = a.iter().map(|p| p.0).collect();
    let yb: Vec<i32> = b.iter().map(|p| p.0).collect();
    if ya != yb {
        return Err(Error::MisalignedFolds(format!("{ya:?} vs {yb:?}")));
    }
    Ok(a.iter().zip(b).map(|(x, y)| x.1 - y.1).collect())
}

/// Compares `a` against `b` on per-year rRMSE_p (differences are `a - b`).
pub fn compare(
    a: &MetricsReport,
    b: &MetricsReport,
    opts: &CompareOptions,
) -> Result<PosteriorDecision> {
    let diffs = paired_differences(&a.fold_rrmse(), &b.fold_rrmse())?;
    let posterior = correlated_t_posterior(&diffs, opts.rho)?;
    let probabilities = rope_probabilities(&posterior, opts.delta);
    Ok(PosteriorDecision {
        crop: a.row.crop.clone(),
        forecast_month: a.row.forecast_month,
        model_a: a.row.config_id.clone(),
        model_b: b.row.config_id.clone(),
        posterior,
        verdict: verdict(&probabilities, opts.confidence),
        probabilities,
        delta: opts.delta,
        confidence: opts.confidence,
    })
}

/// Each rival (as model A) against the best configuration (as model B), so
/// `Larger` means the best configuration has the lower error.
pub fn comparison_matrix(
    best: &MetricsReport,
    rivals: &[&MetricsReport],
    opts: &CompareOptions,
) -> Result<Vec<PosteriorDecision>> {
    rivals.iter().map(|r| compare(r, best, opts)).collect()
}

pub fn comparison_csv(decisions: &[PosteriorDecision]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "crop",
        "forecast_month",
        "model_a",
        "model_b",
        "p_smaller",
        "p_equivalent",
        "p_larger",
        "verdict",
    ])?;
    for d in decisions {
        w.write_record([
            d.crop.clone(),
            d.forecast_month.to_string(),
            d.model_a.clone(),
            d.model_b.clone(),
            d.probabilities.p_smaller.to_string(),
            d.probabilities.p_equivalent.to_string(),
            d.probabilities.p_larger.to_string(),
            d.verdict.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
