//! Crop-yield hindcasting from dekadal remote-sensing and weather series.

pub mod bayes;
pub mod calendar;
pub mod cv;
pub mod dataset;
pub mod error;
pub mod exec;
pub mod features;
pub mod metrics;
pub mod models;
pub mod phenology;
pub mod pipeline;
pub mod report;
pub mod synth;

pub use error::{Error, Result};
