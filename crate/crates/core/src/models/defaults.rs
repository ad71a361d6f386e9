use std::sync::OnceLock;

use serde::Deserialize;

const DEFAULTS_CFG: &str = include_str!("../../defaults.cfg");

#[derive(Debug, Clone, Deserialize)]
pub struct ModelDefaults {
    pub version: u32,
    pub lasso: LassoDefaults,
    pub tree: TreeDefaults,
    pub random_forest: ForestDefaults,
    pub gradient_boosting: BoostingDefaults,
    pub svr: SvrDefaults,
    pub mlp: MlpDefaults,
}

#[derive(Debug, Clone, Deserialize)]
pub struct LassoDefaults {
    pub max_iter: usize,
    pub tol: f64,
    pub fit_intercept: bool,
}

#[derive(Debug, Clone, Deserialize)]
pub struct TreeDefaults {
    pub min_samples_leaf: usize,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ForestDefaults {
    pub bootstrap: bool,
}

#[derive(Debug, Clone, Deserialize)]
pub struct BoostingDefaults {
    pub subsample: f64,
    pub max_features: String,
}

#[derive(Debug, Clone, Deserialize)]
pub struct SvrDefaults {
    pub tol: f64,
    pub max_iter: usize,
    pub shrinking: bool,
}

#[derive(Debug, Clone, Deserialize)]
pub struct MlpDefaults {
    pub solver: String,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub beta_1: f64,
    pub beta_2: f64,
    pub epsilon: f64,
    pub tol: f64,
    pub n_iter_no_change: usize,
    pub adaptive_patience: usize,
    pub learning_rate_init: f64,
    pub shuffle: bool,
}

/// The pinned non-searched hyperparameters, parsed once.
pub fn defaults() -> &'static ModelDefaults {
    static CELL: OnceLock<ModelDefaults> = OnceLock::new();
    CELL.get_or_init(|| toml::from_str(DEFAULTS_CFG).expect("bundled defaults.cfg is valid"))
}
