use ndarray::{Array1, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{RegressionTree, TreeParams};
use crate::exec::derive_seed;

/// Bagged regression trees; prediction is the mean over trees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    trees: Vec<RegressionTree>,
}

impl Forest {
    pub fn fit(
        x: ArrayView2<'_, f64>,
        y: ArrayView1<'_, f64>,
        params: &TreeParams,
        n_trees: usize,
        bootstrap: bool,
        seed: u64,
    ) -> Self {
        let n = x.nrows();
        let y: Vec<f64> = y.to_vec();
        let trees = (0..n_trees)
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[t as u64]));
                let rows: Vec<usize> = if bootstrap {
                    (0..n).map(|_| rng.random_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                RegressionTree::fit(x, &y, rows, params, Some(&mut rng))
            })
            .collect();
        Forest { trees }
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Array1<f64> {
        x.rows()
            .into_iter()
            .map(|row| {
                let row = row.to_vec();
                self.trees.iter().map(|t| t.predict_row(&row)).sum::<f64>()
                    / self.trees.len() as f64
            })
            .collect()
    }
}

/// Least-squares gradient boosting: start from the training mean, then add
/// shrunken trees fitted to the current residuals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Boosting {
    init: f64,
    learning_rate: f64,
    stages: Vec<RegressionTree>,
}

impl Boosting {
    pub fn fit(
        x: ArrayView2<'_, f64>,
        y: ArrayView1<'_, f64>,
        params: &TreeParams,
        n_stages: usize,
        learning_rate: f64,
    ) -> Self {
        let n = x.nrows();
        let init = y.sum() / n as f64;
        let rows_x: Vec<Vec<f64>> = x.rows().into_iter().map(|r| r.to_vec()).collect();
        let mut fitted = vec![init; n];
        let mut residual = vec![0.0; n];
        let mut stages = Vec::with_capacity(n_stages);
        for _ in 0..n_stages {
            for i in 0..n {
                residual[i] = y[i] - fitted[i];
            }
            let tree =
                RegressionTree::fit::<ChaCha8Rng>(x, &residual, (0..n).collect(), params, None);
            for (f, row) in fitted.iter_mut().zip(&rows_x) {
                *f += learning_rate * tree.predict_row(row);
            }
            stages.push(tree);
        }
        Boosting {
            init,
            learning_rate,
            stages,
        }
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Array1<f64> {
        x.rows()
            .into_iter()
            .map(|row| {
                let row = row.to_vec();
                self.init
                    + self.learning_rate
                        * self.stages.iter().map(|t| t.predict_row(&row)).sum::<f64>()
            })
            .collect()
    }
}
