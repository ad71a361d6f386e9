use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MIN_SD: f64 = 1e-12;

/// Standard-score parameters for the leading `mean.len()` columns; trailing
/// (one-hot) columns pass through untouched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

/// Fits population mean/sd on the first `n_continuous` columns of `x`.
pub fn zscore_fit(x: ArrayView2<'_, f64>, n_continuous: usize) -> Result<ScalerParams> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::TooFewSamples { need: 2, got: n });
    }
    let mut mean = Vec::with_capacity(n_continuous);
    let mut sd = Vec::with_capacity(n_continuous);
    for j in 0..n_continuous {
        let col = x.column(j);
        let m = col.sum() / n as f64;
        let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64;
        let s = var.sqrt();
        if s.is_nan() || s < MIN_SD {
            return Err(Error::DegenerateColumn(format!("#{j}")));
        }
        mean.push(m);
        sd.push(s);
    }
    Ok(ScalerParams { mean, sd })
}

impl ScalerParams {
    pub fn apply(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        for (j, (m, s)) in self.mean.iter().zip(&self.sd).enumerate() {
            out.column_mut(j).mapv_inplace(|v| (v - m) / s);
        }
        out
    }

    pub fn inverse(&self, z: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = z.to_owned();
        for (j, (m, s)) in self.mean.iter().zip(&self.sd).enumerate() {
            out.column_mut(j).mapv_inplace(|v| v * s + m);
        }
        out
    }
}
