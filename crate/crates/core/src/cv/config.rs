use std::fmt;

use serde::{Deserialize, Serialize};

use crate::features::FeatureSet;
use crate::models::AlgorithmId;

/// Candidate mRMR fractions (percent of continuous columns) searched in the inner loop.
pub const MRMR_FRACTIONS: [u32; 6] = [5, 10, 25, 50, 75, 100];

/// One point of the configuration lattice: algorithm plus input options.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ModelConfiguration {
    pub algorithm: AlgorithmId,
    /// `None` for benchmarks, which read their own predictor.
    pub feature_set: Option<FeatureSet>,
    pub mrmr: bool,
    pub ohe: bool,
}

impl ModelConfiguration {
    pub fn ml(algorithm: AlgorithmId, set: FeatureSet, mrmr: bool, ohe: bool) -> Self {
        ModelConfiguration {
            algorithm,
            feature_set: Some(set),
            mrmr,
            ohe,
        }
    }

    pub fn benchmark(algorithm: AlgorithmId) -> Self {
        debug_assert!(algorithm.is_benchmark());
        ModelConfiguration {
            algorithm,
            feature_set: None,
            mrmr: false,
            ohe: false,
        }
    }

    pub fn is_benchmark(&self) -> bool {
        self.algorithm.is_benchmark()
    }

    /// Stable identifier, e.g. `lasso|RS&Met-|mrmr|ohe`; benchmarks use their name.
    pub fn id(&self) -> String {
        match self.feature_set {
            None => self.algorithm.name().to_string(),
            Some(set) => format!(
                "{}|{}|{}|{}",
                self.algorithm.name(),
                set.name(),
                if self.mrmr { "mrmr" } else { "all" },
                if self.ohe { "ohe" } else { "no-ohe" }
            ),
        }
    }

    /// Same configuration with one option flipped; used to pair effects.
    pub fn with_ohe(&self, ohe: bool) -> Self {
        ModelConfiguration {
            ohe,
            ..self.clone()
        }
    }

    pub fn with_mrmr(&self, mrmr: bool) -> Self {
        ModelConfiguration {
            mrmr,
            ..self.clone()
        }
    }

    pub fn parse_id(id: &str) -> Option<Self> {
        let parts: Vec<&str> = id.split('|').collect();
        match parts.as_slice() {
            [alg] => {
                let a: AlgorithmId = alg.parse().ok()?;
                a.is_benchmark().then(|| ModelConfiguration::benchmark(a))
            }
            [alg, set, mrmr, ohe] => Some(ModelConfiguration::ml(
                alg.parse().ok()?,
                set.parse().ok()?,
                match *mrmr {
                    "mrmr" => true,
                    "all" => false,
                    _ => return None,
                },
                match *ohe {
                    "ohe" => true,
                    "no-ohe" => false,
                    _ => return None,
                },
            )),
            _ => None,
        }
    }
}

impl fmt::Display for ModelConfiguration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

/// Cartesian product in algorithm, set, mRMR, OHE order.
pub fn enumerate_configurations(
    algorithms: &[AlgorithmId],
    sets: &[FeatureSet],
    mrmr: &[bool],
    ohe: &[bool],
) -> Vec<ModelConfiguration> {
    let mut out = Vec::new();
    for &a in algorithms.iter().filter(|a| !a.is_benchmark()) {
        for &s in sets {
            for &m in mrmr {
                for &o in ohe {
                    out.push(ModelConfiguration::ml(a, s, m, o));
                }
            }
        }
    }
    out
}

pub fn benchmark_configurations() -> Vec<ModelConfiguration> {
    AlgorithmId::BENCHMARKS
        .into_iter()
        .map(ModelConfiguration::benchmark)
        .collect()
}

/// Feature configurations per algorithm when each mRMR fraction counts as its
/// own option: sets x (1 + fractions) x OHE choices.
pub fn expansion_count(n_sets: usize, mrmr: &[bool], n_ohe: usize) -> usize {
    let selection: usize = mrmr
        .iter()
        .map(|&m| if m { MRMR_FRACTIONS.len() } else { 1 })
        .sum();
    n_sets * selection * n_ohe
}
