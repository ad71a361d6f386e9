use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::Kernel;

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SvrParams {
    pub kernel: Kernel,
    pub gamma: f64,
    pub epsilon: f64,
    pub c: f64,
    /// Stop once the maximal KKT violation drops below this.
    pub tol: f64,
    pub max_iter: usize,
}

/// Epsilon-insensitive support vector regression solved in its dual by SMO
/// with second-order working-set selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrModel {
    kernel: Kernel,
    gamma: f64,
    support: Vec<Vec<f64>>,
    /// `alpha_i - alpha*_i` for each support row.
    dual_coef: Vec<f64>,
    rho: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn kernel_eval(kernel: Kernel, gamma: f64, a: &[f64], b: &[f64]) -> f64 {
    match kernel {
        Kernel::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
        Kernel::Rbf => {
            let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
            (-gamma * d2).exp()
        }
    }
}

impl SvrModel {
    pub fn fit(x: ArrayView2<'_, f64>, z: ArrayView1<'_, f64>, p: &SvrParams) -> Self {
        let l = x.nrows();
        let rows: Vec<Vec<f64>> = x.rows().into_iter().map(|r| r.to_vec()).collect();
        let k = Array2::from_shape_fn((l, l), |(i, j)| {
            kernel_eval(p.kernel, p.gamma, &rows[i], &rows[j])
        });

        // Variables 0..l carry sign +1, l..2l sign -1.
        let m = 2 * l;
        let sign = |t: usize| if t < l { 1.0 } else { -1.0 };
        let q = |a: usize, b: usize| sign(a) * sign(b) * k[[a % l, b % l]];
        let qd: Vec<f64> = (0..m).map(|t| k[[t % l, t % l]]).collect();
        let c = p.c;
        let mut alpha = vec![0.0; m];
        let mut grad: Vec<f64> = (0..m)
            .map(|t| {
                if t < l {
                    p.epsilon - z[t]
                } else {
                    p.epsilon + z[t - l]
                }
            })
            .collect();
        let at_upper = |a: f64| a >= c;
        let at_lower = |a: f64| a <= 0.0;

        let mut converged = false;
        let mut iterations = 0;
        while iterations < p.max_iter {
            // Maximal violating pair, second-order choice of j. Variables
            // t and t + l share kernel row t.
            let mut gmax = f64::NEG_INFINITY;
            let mut i_sel = None;
            for t in 0..l {
                if !at_upper(alpha[t]) && -grad[t] >= gmax {
                    gmax = -grad[t];
                    i_sel = Some(t);
                }
                if !at_lower(alpha[t + l]) && grad[t + l] >= gmax {
                    gmax = grad[t + l];
                    i_sel = Some(t + l);
                }
            }
            let Some(i) = i_sel else {
                converged = true;
                break;
            };
            let ki = k.row(i % l);
            let mut gmax2 = f64::NEG_INFINITY;
            let mut j_sel = None;
            let mut obj_min = f64::INFINITY;
            let mut consider = |t: usize, grad_diff: f64, kit: f64, obj_min: &mut f64| {
                if grad_diff > 0.0 {
                    let mut quad = qd[i] + qd[t] - 2.0 * kit;
                    if quad <= 0.0 {
                        quad = TAU;
                    }
                    let obj = -grad_diff * grad_diff / quad;
                    if obj <= *obj_min {
                        *obj_min = obj;
                        j_sel = Some(t);
                    }
                }
            };
            for t in 0..l {
                if !at_lower(alpha[t]) {
                    gmax2 = gmax2.max(grad[t]);
                    consider(t, gmax + grad[t], ki[t], &mut obj_min);
                }
                let u = t + l;
                if !at_upper(alpha[u]) {
                    gmax2 = gmax2.max(-grad[u]);
                    consider(u, gmax - grad[u], ki[t], &mut obj_min);
                }
            }
            if gmax + gmax2 < p.tol {
                converged = true;
                break;
            }
            let Some(j) = j_sel else {
                converged = true;
                break;
            };
            iterations += 1;

            let (old_i, old_j) = (alpha[i], alpha[j]);
            let qij = q(i, j);
            if sign(i) != sign(j) {
                let mut quad = qd[i] + qd[j] + 2.0 * qij;
                if quad <= 0.0 {
                    quad = TAU;
                }
                let delta = (-grad[i] - grad[j]) / quad;
                let diff = alpha[i] - alpha[j];
                alpha[i] += delta;
                alpha[j] += delta;
                if diff > 0.0 {
                    if alpha[j] < 0.0 {
                        alpha[j] = 0.0;
                        alpha[i] = diff;
                    }
                } else if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = -diff;
                }
                if diff > 0.0 {
                    if alpha[i] > c {
                        alpha[i] = c;
                        alpha[j] = c - diff;
                    }
                } else if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = c + diff;
                }
            } else {
                let mut quad = qd[i] + qd[j] - 2.0 * qij;
                if quad <= 0.0 {
                    quad = TAU;
                }
                let delta = (grad[i] - grad[j]) / quad;
                let sum = alpha[i] + alpha[j];
                alpha[i] -= delta;
                alpha[j] += delta;
                if sum > c {
                    if alpha[i] > c {
                        alpha[i] = c;
                        alpha[j] = sum - c;
                    }
                } else if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = sum;
                }
                if sum > c {
                    if alpha[j] > c {
                        alpha[j] = c;
                        alpha[i] = sum - c;
                    }
                } else if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = sum;
                }
            }
            let (ci, cj) = (sign(i) * (alpha[i] - old_i), sign(j) * (alpha[j] - old_j));
            let kj = k.row(j % l);
            for t in 0..l {
                let v = ki[t] * ci + kj[t] * cj;
                grad[t] += v;
                grad[t + l] -= v;
            }
        }

        // Offset from free variables, or the midpoint of the feasible interval.
        let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut n_free, mut sum_free) = (0usize, 0.0);
        for t in 0..m {
            let yg = sign(t) * grad[t];
            if at_upper(alpha[t]) {
                if sign(t) < 0.0 {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else if at_lower(alpha[t]) {
                if sign(t) > 0.0 {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else {
                n_free += 1;
                sum_free += yg;
            }
        }
        let rho = if n_free > 0 {
            sum_free / n_free as f64
        } else {
            0.5 * (ub + lb)
        };

        let mut support = Vec::new();
        let mut dual_coef = Vec::new();
        for i in 0..l {
            let coef = alpha[i] - alpha[i + l];
            if coef != 0.0 {
                support.push(rows[i].clone());
                dual_coef.push(coef);
            }
        }
        SvrModel {
            kernel: p.kernel,
            gamma: p.gamma,
            support,
            dual_coef,
            rho,
            iterations,
            converged,
        }
    }

    pub fn n_support(&self) -> usize {
        self.support.len()
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Array1<f64> {
        x.rows()
            .into_iter()
            .map(|row| {
                let row = row.to_vec();
                self.support
                    .iter()
                    .zip(&self.dual_coef)
                    .map(|(s, a)| a * kernel_eval(self.kernel, self.gamma, s, &row))
                    .sum::<f64>()
                    - self.rho
            })
            .collect()
    }
}
