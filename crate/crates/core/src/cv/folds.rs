use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InnerFold {
    pub val_year: i32,
    pub fit_years: Vec<i32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OuterFold {
    pub test_year: i32,
    pub train_years: Vec<i32>,
    pub inner: Vec<InnerFold>,
}

/// Nested leave-one-year-out plan.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub years: Vec<i32>,
    pub outer: Vec<OuterFold>,
}

fn leave_one_out(years: &[i32], out: i32) -> Vec<i32> {
    years.iter().copied().filter(|&y| y != out).collect()
}

pub fn plan_nested_loyo(years: &[i32]) -> Result<FoldPlan> {
    let mut years = years.to_vec();
    years.sort_unstable();
    years.dedup();
    if years.len() < 3 {
        return Err(Error::TooFewYears {
            need: 3,
            got: years.len(),
        });
    }
    let outer = years
        .iter()
        .map(|&test_year| {
            let train_years = leave_one_out(&years, test_year);
            let inner = train_years
                .iter()
                .map(|&val_year| InnerFold {
                    val_year,
                    fit_years: leave_one_out(&train_years, val_year),
                })
                .collect();
            OuterFold {
                test_year,
                train_years,
                inner,
            }
        })
        .collect();
    Ok(FoldPlan { years, outer })
}
