//! Ingestion of cumulative reports and auxiliary series.

mod censoring;
pub mod io;

use chrono::NaiveDate;

pub use censoring::{difference_weekly, retrievable_totals, CensoredSeries, CumulativeValue};

use crate::error::{validation, Error, Result};

/// No-intercept least-squares slope of `T_w` on `|T_w - T_{w-1}|`.
pub fn estimate_eta(totals: &[f64]) -> Result<f64> {
    if totals.len() < 2 {
        return validation("need at least two weekly totals to estimate eta");
    }
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for p in totals.windows(2) {
        let x = (p[1] - p[0]).abs();
        sxy += x * p[1];
        sxx += x * x;
    }
    if sxx == 0.0 {
        return validation("weekly totals never change; eta is undefined");
    }
    Ok(sxy / sxx)
}

/// Four-week central moving average `mean(x[w-2..=w+1])`, truncated at the edges.
pub fn central_moving_average(x: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|w| {
            let lo = w.saturating_sub(2);
            let hi = (w + 1).min(x.len() - 1);
            x[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

/// First week `w >= search_from` (0-based) whose moving average rises into the next week.
///
/// `Ok(None)` signals that no increase was found.
pub fn resurgence_start(deaths: &[f64], search_from: usize) -> Result<Option<usize>> {
    if deaths.len() < search_from + 5 {
        return validation(format!(
            "resurgence search needs at least 5 weeks from week {search_from}, series has {}",
            deaths.len()
        ));
    }
    let ma = central_moving_average(deaths);
    Ok((search_from..ma.len() - 1).find(|&w| ma[w + 1] > ma[w]))
}

/// All-age weekly deaths aligned to model weeks.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSeries {
    pub weeks: Vec<NaiveDate>,
    pub deaths: Vec<u64>,
}

/// Reindexes `(date, deaths)` pairs onto `model_weeks`, rejecting gaps.
pub fn align_calibration(series: &[(NaiveDate, u64)], model_weeks: &[NaiveDate]) -> Result<CalibrationSeries> {
    if model_weeks.is_empty() {
        return validation("no model weeks to align to");
    }
    let lookup: std::collections::HashMap<NaiveDate, u64> = series.iter().copied().collect();
    if !model_weeks.iter().any(|w| lookup.contains_key(w)) {
        return Err(Error::Data("calibration series does not overlap the model window".into()));
    }
    let gaps: Vec<String> = model_weeks.iter().filter(|w| !lookup.contains_key(w)).map(|w| w.to_string()).collect();
    if !gaps.is_empty() {
        return Err(Error::Data(format!("calibration series has gaps at {}", gaps.join(", "))));
    }
    Ok(CalibrationSeries { weeks: model_weeks.to_vec(), deaths: model_weeks.iter().map(|w| lookup[w]).collect() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AgeClass {
    Adults,
    Elderly,
}

impl AgeClass {
    pub const ALL: [AgeClass; 2] = [AgeClass::Adults, AgeClass::Elderly];

    pub fn label(&self) -> &'static str {
        match self {
            AgeClass::Adults => "18-64",
            AgeClass::Elderly => "65+",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "18-64" => Ok(AgeClass::Adults),
            "65+" => Ok(AgeClass::Elderly),
            other => Err(Error::Data(format!("unknown age class '{other}' (expected 18-64 or 65+)"))),
        }
    }

    /// Inclusive single-year age range.
    pub fn ages(&self) -> std::ops::RangeInclusive<usize> {
        match self {
            AgeClass::Adults => 18..=64,
            AgeClass::Elderly => 65..=105,
        }
    }
}

/// Cumulative full-vaccination rates of one state and age class.
#[derive(Debug, Clone, PartialEq)]
pub struct VaccinationSeries {
    pub state: String,
    pub class: AgeClass,
    pub weeks: Vec<NaiveDate>,
    pub rates: Vec<f64>,
}

impl VaccinationSeries {
    pub fn new(state: &str, class: AgeClass, mut points: Vec<(NaiveDate, f64)>) -> Result<Self> {
        points.sort_by_key(|p| p.0);
        if let Some(p) = points.iter().find(|p| !(0.0..=1.0).contains(&p.1)) {
            return Err(Error::Data(format!("{state} {}: vaccination rate {} on {} outside [0, 1]", class.label(), p.1, p.0)));
        }
        if let Some(p) = points.windows(2).find(|p| p[1].1 < p[0].1) {
            return Err(Error::Data(format!("{state} {}: vaccination rate decreases on {}", class.label(), p[1].0)));
        }
        Ok(Self { state: state.into(), class, weeks: points.iter().map(|p| p.0).collect(), rates: points.iter().map(|p| p.1).collect() })
    }

    /// Rate of the latest week on or before `date`.
    pub fn rate_on(&self, date: NaiveDate) -> Option<f64> {
        self.weeks.iter().rposition(|w| *w <= date).map(|i| self.rates[i])
    }
}
