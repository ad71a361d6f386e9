use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

/// L1-penalised least squares, objective `(1/2n)||y - Xw - b||^2 + alpha ||w||_1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoModel {
    pub intercept: f64,
    pub coef: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Cyclic coordinate descent on centred data with a duality-gap stop.
pub fn fit_lasso(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    alpha: f64,
    max_iter: usize,
    tol: f64,
) -> LassoModel {
    let (n, p) = x.dim();
    let nf = n as f64;
    let x_mean: Vec<f64> = (0..p).map(|j| x.column(j).sum() / nf).collect();
    let y_mean = y.sum() / nf;
    let cols: Vec<Vec<f64>> = (0..p)
        .map(|j| x.column(j).iter().map(|v| v - x_mean[j]).collect())
        .collect();
    let yc: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
    let norm2: Vec<f64> = cols.iter().map(|c| dot(c, c)).collect();

    let l1 = alpha * nf;
    let yty = dot(&yc, &yc);
    let gap_tol = tol * yty;
    let mut w = vec![0.0; p];
    let mut converged = false;
    let mut iterations = 0;

    if n > p {
        // Gram form: each coordinate step costs O(p) instead of O(n).
        let gram: Vec<Vec<f64>> = (0..p)
            .map(|j| (0..p).map(|k| dot(&cols[j], &cols[k])).collect())
            .collect();
        let xty: Vec<f64> = cols.iter().map(|c| dot(c, &yc)).collect();
        // q = G w
        let mut q = vec![0.0; p];
        for iter in 0..max_iter {
            iterations = iter + 1;
            let (mut w_max, mut dw_max) = (0.0f64, 0.0f64);
            for j in 0..p {
                if norm2[j] == 0.0 {
                    continue;
                }
                let old = w[j];
                let rho = xty[j] - q[j] + norm2[j] * old;
                let new = soft_threshold(rho, l1) / norm2[j];
                if new != old {
                    axpy(new - old, &gram[j], &mut q);
                }
                w[j] = new;
                dw_max = dw_max.max((new - old).abs());
                w_max = w_max.max(new.abs());
            }
            if w_max == 0.0 || dw_max / w_max < tol || iter + 1 == max_iter {
                let dual_norm = (0..p).map(|j| (xty[j] - q[j]).abs()).fold(0.0, f64::max);
                let r_y = yty - dot(&w, &xty);
                let r_norm2 = (r_y - dot(&w, &xty) + dot(&w, &q)).max(0.0);
                if duality_gap(l1, &w, dual_norm, r_norm2, r_y) <= gap_tol {
                    converged = true;
                    break;
                }
            }
        }
    } else {
        let mut r = yc.clone();
        for iter in 0..max_iter {
            iterations = iter + 1;
            let (mut w_max, mut dw_max) = (0.0f64, 0.0f64);
            for j in 0..p {
                if norm2[j] == 0.0 {
                    continue;
                }
                let old = w[j];
                if old != 0.0 {
                    axpy(old, &cols[j], &mut r);
                }
                let rho = dot(&cols[j], &r);
                let new = soft_threshold(rho, l1) / norm2[j];
                if new != 0.0 {
                    axpy(-new, &cols[j], &mut r);
                }
                w[j] = new;
                dw_max = dw_max.max((new - old).abs());
                w_max = w_max.max(new.abs());
            }
            if w_max == 0.0 || dw_max / w_max < tol || iter + 1 == max_iter {
                let dual_norm = cols.iter().map(|c| dot(c, &r).abs()).fold(0.0, f64::max);
                if duality_gap(l1, &w, dual_norm, dot(&r, &r), dot(&r, &yc)) <= gap_tol {
                    converged = true;
                    break;
                }
            }
        }
    }
    let intercept = y_mean - w.iter().zip(&x_mean).map(|(a, b)| a * b).sum::<f64>();
    LassoModel {
        intercept,
        coef: w,
        iterations,
        converged,
    }
}

impl LassoModel {
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Array1<f64> {
        x.rows()
            .into_iter()
            .map(|row| self.intercept + row.iter().zip(&self.coef).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    }
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    v.signum() * (v.abs() - t).max(0.0)
}

/// Gap between the primal objective and the rescaled dual point built from
/// the residual (all terms multiplied by `n`).
fn duality_gap(l1: f64, w: &[f64], dual_norm: f64, r_norm2: f64, r_y: f64) -> f64 {
    let (scale, mut gap) = if dual_norm > l1 {
        let s = l1 / dual_norm;
        (s, 0.5 * (r_norm2 + r_norm2 * s * s))
    } else {
        (1.0, r_norm2)
    };
    gap += l1 * w.iter().map(|v| v.abs()).sum::<f64>() - scale * r_y;
    gap
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}
