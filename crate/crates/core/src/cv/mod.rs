//! Configuration lattice and nested leave-one-year-out hindcasting.

mod config;
mod engine;
mod folds;
mod select;

pub use config::{
    benchmark_configurations, enumerate_configurations, expansion_count, ModelConfiguration,
    MRMR_FRACTIONS,
};
pub use engine::{
    fit_final, run_hindcast, EngineOptions, FinalModel, FitAudit, FitCounts, FoldChoice,
    HindcastData, PredictionRecord, RunResult, ScalerMode, Stage,
};
pub use folds::{plan_nested_loyo, FoldPlan, InnerFold, OuterFold};
pub use select::select_best_configuration;
