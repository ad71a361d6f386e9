use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure class, mapped onto the CLI exit-code contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Input,
    Computation,
    Config,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Input => 2,
            ErrorClass::Computation => 3,
            ErrorClass::Config => 4,
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{file}: line {line}: {reason}")]
    MalformedRow {
        file: &'static str,
        line: u64,
        reason: String,
    },
    #[error("duplicate sample for unit {unit}, variable {variable}, {year}/{dekad}")]
    DuplicateSample {
        unit: String,
        variable: String,
        year: i32,
        dekad: u8,
    },
    #[error("unknown administrative unit '{0}'")]
    UnknownUnit(String),
    #[error("missing {variable} data for unit {unit} at {year}/{dekad}")]
    CoverageGap {
        unit: String,
        variable: String,
        year: i32,
        dekad: u8,
    },
    #[error("yield table holds several crops ({0}); select one")]
    AmbiguousCrop(String),
    #[error("no yield records for crop '{0}'")]
    EmptyCrop(String),
    #[error("unit {unit} has only {years} yield years (need at least {min})")]
    TooFewUnitYears {
        unit: String,
        years: usize,
        min: usize,
    },

    #[error("seasonal amplitude {amplitude:.4} below floor {floor:.4}")]
    NoSeasonality { amplitude: f64, floor: f64 },
    #[error("solver did not converge within {iterations} iterations")]
    NonConvergence { iterations: usize },
    #[error("ascending and descending branches are not separable")]
    DegenerateSeason,
    #[error("invalid curve parameters: {0}")]
    InvalidParams(String),
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },

    #[error("column {0} has zero variance on the training rows")]
    DegenerateColumn(String),
    #[error("fit is singular: {0}")]
    SingularFit(String),
    #[error("expected {expected} columns, got {got}")]
    SchemaMismatch { expected: usize, got: usize },
    #[error("{0} is not a tunable machine-learning algorithm")]
    NotTunable(String),

    #[error("need at least {need} years, got {got}")]
    TooFewYears { need: usize, got: usize },
    #[error("every grid point failed for configuration {0}")]
    AllGridPointsFailed(String),
    #[error("no production weight for unit {0}")]
    MissingWeight(String),
    #[error("per-fold series are not aligned by year: {0}")]
    MisalignedFolds(String),
    #[error("no paired configurations for option '{0}'")]
    UnpairedConfigs(String),
    #[error("infeasible scenario: {0}")]
    InfeasibleSpec(String),

    #[error("input file missing: {}", .0.display())]
    InputMissing(PathBuf),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            Error::MalformedRow { .. } => "MalformedRow",
            Error::DuplicateSample { .. } => "DuplicateSample",
            Error::UnknownUnit(_) => "UnknownUnit",
            Error::CoverageGap { .. } => "CoverageGap",
            Error::AmbiguousCrop(_) => "AmbiguousCrop",
            Error::EmptyCrop(_) => "EmptyCrop",
            Error::TooFewUnitYears { .. } => "TooFewUnitYears",
            Error::NoSeasonality { .. } => "NoSeasonality",
            Error::NonConvergence { .. } => "NonConvergence",
            Error::DegenerateSeason => "DegenerateSeason",
            Error::InvalidParams(_) => "InvalidParams",
            Error::TooFewSamples { .. } => "TooFewSamples",
            Error::DegenerateColumn(_) => "DegenerateColumn",
            Error::SingularFit(_) => "SingularFit",
            Error::SchemaMismatch { .. } => "SchemaMismatch",
            Error::NotTunable(_) => "NotTunable",
            Error::TooFewYears { .. } => "TooFewYears",
            Error::AllGridPointsFailed(_) => "AllGridPointsFailed",
            Error::MissingWeight(_) => "MissingWeight",
            Error::MisalignedFolds(_) => "MisalignedFolds",
            Error::UnpairedConfigs(_) => "UnpairedConfigs",
            Error::InfeasibleSpec(_) => "InfeasibleSpec",
            Error::InputMissing(_) => "InputMissing",
            Error::Config(_) => "ConfigError",
            Error::Io(_) => "IoError",
            Error::Csv(_) => "CsvError",
            Error::Json(_) => "JsonError",
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::MalformedRow { .. }
            | Error::DuplicateSample { .. }
            | Error::UnknownUnit(_)
            | Error::CoverageGap { .. }
            | Error::AmbiguousCrop(_)
            | Error::EmptyCrop(_)
            | Error::TooFewUnitYears { .. }
            | Error::InputMissing(_)
            | Error::MissingWeight(_)
            | Error::Io(_)
            | Error::Csv(_)
            | Error::Json(_) => ErrorClass::Input,
            Error::Config(_) | Error::InfeasibleSpec(_) | Error::NotTunable(_) => {
                ErrorClass::Config
            }
            _ => ErrorClass::Computation,
        }
    }

    /// Error as a JSON object: `{"code": ..., "message": ...}`.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({ "code": self.code(), "message": self.to_string() })
    }
}
