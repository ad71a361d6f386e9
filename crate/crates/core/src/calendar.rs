//! Dekad calendar: 36 periods per year, days 1-10, 11-20 and 21-end of each month.

use std::fmt;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

pub const DEKADS_PER_YEAR: u8 = 36;

const MONTH_ABBR: [&str; 12] = [
    "Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec",
];

/// A dekad within a given calendar year. Orders by `(year, dekad)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DekadIndex {
    pub year: i32,
    pub dekad: u8,
}

impl DekadIndex {
    /// Panics if `dekad` is outside `1..=36`.
    pub fn new(year: i32, dekad: u8) -> Self {
        assert!(
            (1..=DEKADS_PER_YEAR).contains(&dekad),
            "dekad {dekad} out of range"
        );
        DekadIndex { year, dekad }
    }

    pub fn checked(year: i32, dekad: u8) -> Option<Self> {
        (1..=DEKADS_PER_YEAR)
            .contains(&dekad)
            .then_some(DekadIndex { year, dekad })
    }

    /// Calendar month 1..=12.
    pub fn month(self) -> u32 {
        month_of_dekad(self.dekad)
    }

    /// Dekads since year 0, dekad 1. Consecutive dekads differ by one.
    pub fn ordinal(self) -> i64 {
        i64::from(self.year) * 36 + i64::from(self.dekad) - 1
    }

    pub fn from_ordinal(ordinal: i64) -> Self {
        let year = ordinal.div_euclid(36);
        let dekad = ordinal.rem_euclid(36) + 1;
        DekadIndex {
            year: year as i32,
            dekad: dekad as u8,
        }
    }

    pub fn offset(self, by: i64) -> Self {
        Self::from_ordinal(self.ordinal() + by)
    }

    pub fn first_day(self) -> NaiveDate {
        let month = self.month();
        let day = match (self.dekad - 1) % 3 {
            0 => 1,
            1 => 11,
            _ => 21,
        };
        NaiveDate::from_ymd_opt(self.year, month, day).expect("valid dekad start")
    }
}

impl fmt::Display for DekadIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-D{:02}", self.year, self.dekad)
    }
}

pub fn dekad_of_date(date: NaiveDate) -> DekadIndex {
    let slot = match date.day() {
        1..=10 => 1,
        11..=20 => 2,
        _ => 3,
    };
    DekadIndex {
        year: date.year(),
        dekad: (3 * (date.month() - 1) + slot) as u8,
    }
}

pub fn month_of_dekad(dekad: u8) -> u32 {
    u32::from(dekad).div_ceil(3)
}

pub fn month_abbr(month: u32) -> &'static str {
    MONTH_ABBR[(month as usize - 1) % 12]
}
