//! Regression algorithms behind one fit/predict contract, their search grids,
//! and the two per-unit benchmarks.

pub mod benchmark;
mod defaults;
pub mod forest;
pub mod lasso;
pub mod mlp;
pub mod svr;
pub mod tree;

pub use defaults::{defaults, ModelDefaults};

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AlgorithmId {
    Lasso,
    Rf,
    SvrLin,
    SvrRbf,
    Gbr,
    Mlp,
    Null,
    PeakNdvi,
}

impl AlgorithmId {
    pub const ML: [AlgorithmId; 6] = [
        AlgorithmId::Lasso,
        AlgorithmId::Rf,
        AlgorithmId::SvrLin,
        AlgorithmId::SvrRbf,
        AlgorithmId::Gbr,
        AlgorithmId::Mlp,
    ];
    pub const BENCHMARKS: [AlgorithmId; 2] = [AlgorithmId::Null, AlgorithmId::PeakNdvi];

    pub fn name(self) -> &'static str {
        match self {
            AlgorithmId::Lasso => "lasso",
            AlgorithmId::Rf => "rf",
            AlgorithmId::SvrLin => "svr_lin",
            AlgorithmId::SvrRbf => "svr_rbf",
            AlgorithmId::Gbr => "gbr",
            AlgorithmId::Mlp => "mlp",
            AlgorithmId::Null => "null",
            AlgorithmId::PeakNdvi => "peak_ndvi",
        }
    }

    pub fn is_benchmark(self) -> bool {
        matches!(self, AlgorithmId::Null | AlgorithmId::PeakNdvi)
    }
}

impl fmt::Display for AlgorithmId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AlgorithmId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace('-', "_");
        let key = match key.as_str() {
            "svr_linear" => "svr_lin",
            "peak" | "peakndvi" => "peak_ndvi",
            other => other,
        };
        AlgorithmId::ML
            .into_iter()
            .chain(AlgorithmId::BENCHMARKS)
            .find(|a| a.name() == key)
            .ok_or_else(|| Error::Config(format!("unknown algorithm '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MaxFeatures {
    All,
    Sqrt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Kernel {
    Linear,
    Rbf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LearningRate {
    Constant,
    Adaptive,
}

/// One point of an algorithm's search grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Hyper {
    Lasso {
        alpha: f64,
    },
    Forest {
        max_depth: usize,
        max_features: MaxFeatures,
        n_trees: usize,
        /// Fraction of training rows needed to split a node.
        min_split: f64,
    },
    Svr {
        kernel: Kernel,
        /// Inert for the linear kernel.
        gamma: f64,
        epsilon: f64,
        c: f64,
    },
    Boosting {
        learning_rate: f64,
        max_depth: usize,
        n_stages: usize,
        min_split: f64,
    },
    Mlp {
        alpha: f64,
        activation: Activation,
        learning_rate: LearningRate,
        hidden: Vec<usize>,
    },
}

impl Hyper {
    pub fn algorithm(&self) -> AlgorithmId {
        match self {
            Hyper::Lasso { .. } => AlgorithmId::Lasso,
            Hyper::Forest { .. } => AlgorithmId::Rf,
            Hyper::Svr {
                kernel: Kernel::Linear,
                ..
            } => AlgorithmId::SvrLin,
            Hyper::Svr { .. } => AlgorithmId::SvrRbf,
            Hyper::Boosting { .. } => AlgorithmId::Gbr,
            Hyper::Mlp { .. } => AlgorithmId::Mlp,
        }
    }

    /// Identifies grid points that produce the same fitted model; differs from
    /// the display form only where a parameter is inert.
    pub fn effective_key(&self) -> String {
        match self {
            Hyper::Svr {
                kernel: Kernel::Linear,
                epsilon,
                c,
                ..
            } => format!("svr_lin epsilon={epsilon:e} C={c:e}"),
            other => other.to_string(),
        }
    }
}

impl fmt::Display for Hyper {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Hyper::Lasso { alpha } => write!(f, "alpha={alpha:e}"),
            Hyper::Forest {
                max_depth,
                max_features,
                n_trees,
                min_split,
            } => write!(
                f,
                "max_depth={max_depth} max_features={} n_trees={n_trees} min_split={min_split:.2}",
                match max_features {
                    MaxFeatures::All => "all",
                    MaxFeatures::Sqrt => "sqrt",
                }
            ),
            Hyper::Svr {
                kernel,
                gamma,
                epsilon,
                c,
            } => {
                let k = match kernel {
                    Kernel::Linear => "linear",
                    Kernel::Rbf => "rbf",
                };
                write!(f, "kernel={k} gamma={gamma:e} epsilon={epsilon:e} C={c:e}")
            }
            Hyper::Boosting {
                learning_rate,
                max_depth,
                n_stages,
                min_split,
            } => write!(
                f,
                "learning_rate={learning_rate} max_depth={max_depth} n_stages={n_stages} min_split={min_split:.2}"
            ),
            Hyper::Mlp {
                alpha,
                activation,
                learning_rate,
                hidden,
            } => {
                let layers: Vec<String> = hidden.iter().map(|h| h.to_string()).collect();
                write!(
                    f,
                    "alpha={alpha:e} activation={} learning_rate={} hidden={}",
                    match activation {
                        Activation::Relu => "relu",
                        Activation::Tanh => "tanh",
                    },
                    match learning_rate {
                        LearningRate::Constant => "constant",
                        LearningRate::Adaptive => "adaptive",
                    },
                    layers.join("x")
                )
            }
        }
    }
}

/// Gradient-boosting grid variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum GbrGrid {
    /// All listed value sets: 3 x 3 x 3 x 6 = 162 points.
    #[default]
    Full,
    /// Two min-split values so the grid has the 54 points quoted as its size.
    PaperN,
}

impl FromStr for GbrGrid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(GbrGrid::Full),
            "paper-n" | "paper_n" => Ok(GbrGrid::PaperN),
            _ => Err(Error::Config(format!("unknown gbr grid '{s}'"))),
        }
    }
}

/// `n` points evenly spaced in log10 between `10^lo` and `10^hi`.
pub fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / (n - 1) as f64))
        .collect()
}

/// `n` evenly spaced points from `lo` to `hi` inclusive, rounded to 1e-12.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let v = lo + (hi - lo) * i as f64 / (n - 1) as f64;
            (v * 1e12).round() / 1e12
        })
        .collect()
}

pub fn mlp_architectures() -> Vec<Vec<usize>> {
    let widths = [16, 32, 48, 64];
    let mut out: Vec<Vec<usize>> = widths
        .iter()
        .flat_map(|&a| widths.iter().map(move |&b| vec![a, b]))
        .collect();
    out.extend(
        [
            [16, 32, 16],
            [16, 48, 16],
            [32, 48, 32],
            [32, 64, 32],
            [48, 64, 48],
            [32, 32, 32],
            [48, 48, 48],
            [64, 64, 64],
            [16, 16, 16],
        ]
        .map(|a| a.to_vec()),
    );
    out
}

/// Full cartesian product of an algorithm's search values, in a fixed order.
pub fn enumerate_grid(a: AlgorithmId, gbr: GbrGrid) -> Result<Vec<Hyper>> {
    let mut out = Vec::new();
    match a {
        AlgorithmId::Lasso => {
            out.extend(
                logspace(-5.0, 0.0, 13)
                    .into_iter()
                    .map(|alpha| Hyper::Lasso { alpha }),
            );
        }
        AlgorithmId::Rf => {
            for max_depth in (10..=40).step_by(5) {
                for max_features in [MaxFeatures::All, MaxFeatures::Sqrt] {
                    for n_trees in [100, 250, 500] {
                        for min_split in linspace(0.2, 0.8, 6) {
                            out.push(Hyper::Forest {
                                max_depth,
                                max_features,
                                n_trees,
                                min_split,
                            });
                        }
                    }
                }
            }
        }
        AlgorithmId::SvrLin | AlgorithmId::SvrRbf => {
            let kernel = if a == AlgorithmId::SvrLin {
                Kernel::Linear
            } else {
                Kernel::Rbf
            };
            for gamma in logspace(-2.0, 2.0, 7) {
                for epsilon in logspace(-6.0, 0.5, 7) {
                    for c in logspace(-5.0, 2.0, 8) {
                        out.push(Hyper::Svr {
                            kernel,
                            gamma,
                            epsilon,
                            c,
                        });
                    }
                }
            }
        }
        AlgorithmId::Gbr => {
            let splits = match gbr {
                GbrGrid::Full => linspace(0.1, 0.8, 6),
                GbrGrid::PaperN => vec![0.1, 0.8],
            };
            for learning_rate in [0.01, 0.05, 0.1] {
                for max_depth in [10, 20, 40] {
                    for n_stages in [100, 250, 500] {
                        for &min_split in &splits {
                            out.push(Hyper::Boosting {
                                learning_rate,
                                max_depth,
                                n_stages,
                                min_split,
                            });
                        }
                    }
                }
            }
        }
        AlgorithmId::Mlp => {
            for alpha in logspace(-5.0, -1.0, 6) {
                for activation in [Activation::Relu, Activation::Tanh] {
                    for learning_rate in [LearningRate::Constant, LearningRate::Adaptive] {
                        for hidden in mlp_architectures() {
                            out.push(Hyper::Mlp {
                                alpha,
                                activation,
                                learning_rate,
                                hidden,
                            });
                        }
                    }
                }
            }
        }
        AlgorithmId::Null | AlgorithmId::PeakNdvi => {
            return Err(Error::NotTunable(a.to_string()));
        }
    }
    Ok(out)
}

/// Row count needed to split a node: `max(2, round(fraction * n_train))`.
pub fn min_split_count(fraction: f64, n_train: usize) -> usize {
    ((fraction * n_train as f64).round() as usize).max(2)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum ModelState {
    Lasso(lasso::LassoModel),
    Forest(forest::Forest),
    Svr(svr::SvrModel),
    Boosting(forest::Boosting),
    Mlp(mlp::MlpModel),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainedModel {
    pub hyper: Hyper,
    pub seed: u64,
    pub n_features: usize,
    pub state: ModelState,
    /// Non-fatal issues such as an iteration cap being hit.
    pub warnings: Vec<String>,
}

impl TrainedModel {
    pub fn algorithm(&self) -> AlgorithmId {
        self.hyper.algorithm()
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        if x.ncols() != self.n_features {
            return Err(Error::SchemaMismatch {
                expected: self.n_features,
                got: x.ncols(),
            });
        }
        Ok(match &self.state {
            ModelState::Lasso(m) => m.predict(x),
            ModelState::Forest(m) => m.predict(x),
            ModelState::Svr(m) => m.predict(x),
            ModelState::Boosting(m) => m.predict(x),
            ModelState::Mlp(m) => m.predict(x),
        })
    }
}

/// Fits one grid point. Deterministic given `(x, y, hyper, seed)`.
pub fn fit(
    hyper: &Hyper,
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    seed: u64,
) -> Result<TrainedModel> {
    let n = x.nrows();
    if n < 2 || y.len() != n {
        return Err(Error::SingularFit(format!("{n} rows, {} targets", y.len())));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::SingularFit("non-finite input".into()));
    }
    let cfg = defaults();
    let mut warnings = Vec::new();
    let state = match hyper {
        Hyper::Lasso { alpha } => {
            let m = lasso::fit_lasso(x, y, *alpha, cfg.lasso.max_iter, cfg.lasso.tol);
            if !m.converged {
                warnings.push(format!("lasso hit {} iterations", cfg.lasso.max_iter));
            }
            ModelState::Lasso(m)
        }
        Hyper::Forest {
            max_depth,
            max_features,
            n_trees,
            min_split,
        } => {
            let params = tree::TreeParams {
                max_depth: *max_depth,
                min_samples_split: min_split_count(*min_split, n),
                min_samples_leaf: cfg.tree.min_samples_leaf,
                max_features: match max_features {
                    MaxFeatures::All => None,
                    MaxFeatures::Sqrt => Some(((x.ncols() as f64).sqrt() as usize).max(1)),
                },
            };
            ModelState::Forest(forest::Forest::fit(
                x,
                y,
                &params,
                *n_trees,
                cfg.random_forest.bootstrap,
                seed,
            ))
        }
        Hyper::Svr {
            kernel,
            gamma,
            epsilon,
            c,
        } => {
            let m = svr::SvrModel::fit(
                x,
                y,
                &svr::SvrParams {
                    kernel: *kernel,
                    gamma: *gamma,
                    epsilon: *epsilon,
                    c: *c,
                    tol: cfg.svr.tol,
                    max_iter: cfg.svr.max_iter,
                },
            );
            if !m.converged {
                warnings.push(format!("svr hit {} iterations", cfg.svr.max_iter));
            }
            ModelState::Svr(m)
        }
        Hyper::Boosting {
            learning_rate,
            max_depth,
            n_stages,
            min_split,
        } => {
            let params = tree::TreeParams {
                max_depth: *max_depth,
                min_samples_split: min_split_count(*min_split, n),
                min_samples_leaf: cfg.tree.min_samples_leaf,
                max_features: None,
            };
            ModelState::Boosting(forest::Boosting::fit(
                x,
                y,
                &params,
                *n_stages,
                *learning_rate,
            ))
        }
        Hyper::Mlp {
            alpha,
            activation,
            learning_rate,
            hidden,
        } => {
            let m = mlp::MlpModel::fit(
                x,
                y,
                &mlp::MlpParams {
                    hidden: hidden.clone(),
                    activation: *activation,
                    alpha: *alpha,
                    learning_rate: *learning_rate,
                },
                &cfg.mlp,
                seed,
            );
            if !m.converged {
                warnings.push(format!("mlp hit {} epochs", cfg.mlp.max_epochs));
            }
            ModelState::Mlp(m)
        }
    };
    Ok(TrainedModel {
        hyper: hyper.clone(),
        seed,
        n_features: x.ncols(),
        state,
        warnings,
    })
}
