use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::{Datelike, NaiveDate};
use ndarray::Array3;
use serde::{Deserialize, Serialize};

use super::ClimateWindowSet;
use crate::error::{Error, Result};

/// The monthly variables of the source climate archive.
pub const TERRACLIMATE_VARIABLES: [&str; 14] = [
    "aet", "def", "pet", "pr", "ro", "soil", "srad", "swe", "tmmx", "tmmn", "vap", "vpd", "pdsi", "vs",
];

/// Default model and subgroup-analysis subset, in this fixed order.
pub const DEFAULT_CLIMATE_VARS: [&str; 5] = ["tmmx", "aet", "ro", "pr", "soil"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct YearMonth {
    pub year: i32,
    /// 1..=12
    pub month: u32,
}

impl YearMonth {
    pub fn new(year: i32, month: u32) -> Self {
        assert!((1..=12).contains(&month), "month out of range: {month}");
        Self { year, month }
    }

    pub fn of(date: NaiveDate) -> Self {
        Self::new(date.year(), date.month())
    }

    fn index(self) -> i64 {
        self.year as i64 * 12 + (self.month as i64 - 1)
    }

    fn from_index(i: i64) -> Self {
        Self::new(i.div_euclid(12) as i32, (i.rem_euclid(12) + 1) as u32)
    }

    pub fn add_months(self, n: i64) -> Self {
        Self::from_index(self.index() + n)
    }

    /// Inclusive month range.
    pub fn range(from: YearMonth, to: YearMonth) -> impl Iterator<Item = YearMonth> {
        (from.index()..=to.index()).map(Self::from_index)
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

/// Per-variable monthly series.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MonthlyClimate {
    pub variables: Vec<String>,
    pub series: Vec<BTreeMap<YearMonth, f64>>,
}

impl MonthlyClimate {
    pub fn insert(&mut self, variable: &str, month: YearMonth, value: f64) {
        let idx = match self.variables.iter().position(|v| v == variable) {
            Some(i) => i,
            None => {
                self.variables.push(variable.to_string());
                self.series.push(BTreeMap::new());
                self.variables.len() - 1
            }
        };
        self.series[idx].insert(month, value);
    }

    pub fn get(&self, variable: &str) -> Option<&BTreeMap<YearMonth, f64>> {
        self.variables
            .iter()
            .position(|v| v == variable)
            .map(|i| &self.series[i])
    }
}

/// Ordered subset of `full` named by `requested`.
pub fn select_climate_vars(full: &MonthlyClimate, requested: &[&str]) -> Result<MonthlyClimate> {
    let mut out = MonthlyClimate::default();
    for name in requested {
        let series = full
            .get(name)
            .ok_or_else(|| Error::MissingVariable(name.to_string()))?;
        out.variables.push(name.to_string());
        out.series.push(series.clone());
    }
    Ok(out)
}

/// Window `i` holds the `t1` months ending with (and including) the month of
/// image `i`, oldest first.
pub fn window_climate(
    monthly: &MonthlyClimate,
    image_dates: &[NaiveDate],
    t1: usize,
) -> Result<ClimateWindowSet> {
    if t1 == 0 {
        return Err(Error::InvalidArgument("climate window length must be positive".into()));
    }
    let c1 = monthly.variables.len();
    let mut windows = Array3::zeros((image_dates.len(), t1, c1));
    let mut missing = BTreeSet::new();
    for (i, date) in image_dates.iter().enumerate() {
        let end = YearMonth::of(*date);
        let start = end.add_months(-(t1 as i64 - 1));
        for (j, month) in YearMonth::range(start, end).enumerate() {
            for (v, series) in monthly.series.iter().enumerate() {
                match series.get(&month) {
                    Some(x) => windows[[i, j, v]] = *x as f32,
                    None => {
                        missing.insert(month);
                    }
                }
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::ClimateCoverage(missing.iter().map(|m| m.to_string()).collect()));
    }
    Ok(ClimateWindowSet {
        windows,
        variable_names: monthly.variables.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn monthly(vars: &[&str], from: YearMonth, to: YearMonth) -> MonthlyClimate {
        let mut m = MonthlyClimate::default();
        for (k, v) in vars.iter().enumerate() {
            for (i, ym) in YearMonth::range(from, to).enumerate() {
                m.insert(v, ym, (k * 1000 + i) as f64);
            }
        }
        m
    }

    #[test]
    fn select_default_subset_in_order() {
        let full = monthly(&TERRACLIMATE_VARIABLES, YearMonth::new(2000, 1), YearMonth::new(2000, 3));
        let sub = select_climate_vars(&full, &DEFAULT_CLIMATE_VARS).unwrap();
        assert_eq!(sub.variables, DEFAULT_CLIMATE_VARS);
        assert_eq!(sub.get("pr"), full.get("pr"));
        let all = select_climate_vars(&full, &TERRACLIMATE_VARIABLES).unwrap();
        assert_eq!(all, full);
    }

    #[test]
    fn select_missing_variable() {
        let vars = ["tmmx", "aet", "pr", "soil"];
        let full = monthly(&vars, YearMonth::new(2000, 1), YearMonth::new(2000, 3));
        let err = select_climate_vars(&full, &DEFAULT_CLIMATE_VARS).unwrap_err();
        assert!(matches!(err, Error::MissingVariable(v) if v == "ro"));
    }

    #[test]
    fn window_covers_preceding_year() {
        let m = monthly(&["pr"], YearMonth::new(2010, 1), YearMonth::new(2020, 12));
        let date = NaiveDate::from_ymd_opt(2018, 7, 15).unwrap();
        let w = window_climate(&m, &[date], 12).unwrap();
        let series = m.get("pr").unwrap();
        assert_eq!(w.windows[[0, 0, 0]] as f64, series[&YearMonth::new(2017, 8)]);
        assert_eq!(w.windows[[0, 11, 0]] as f64, series[&YearMonth::new(2018, 7)]);
    }

    #[test]
    fn yearly_images_give_adjacent_windows() {
        let m = monthly(&["pr"], YearMonth::new(2010, 1), YearMonth::new(2020, 12));
        let dates = [
            NaiveDate::from_ymd_opt(2016, 7, 1).unwrap(),
            NaiveDate::from_ymd_opt(2017, 7, 1).unwrap(),
        ];
        let w = window_climate(&m, &dates, 12).unwrap();
        // last month of window 0 is followed directly by first month of window 1
        assert_eq!(w.windows[[1, 0, 0]] - w.windows[[0, 11, 0]], 1.0);
    }

    #[test]
    fn coverage_gap_lists_months() {
        let m = monthly(&["pr"], YearMonth::new(2018, 1), YearMonth::new(2018, 12));
        let date = NaiveDate::from_ymd_opt(2018, 2, 1).unwrap();
        let err = window_climate(&m, &[date], 4).unwrap_err();
        match err {
            Error::ClimateCoverage(months) => assert_eq!(months, vec!["2017-11", "2017-12"]),
            e => panic!("unexpected {e}"),
        }
    }
}
