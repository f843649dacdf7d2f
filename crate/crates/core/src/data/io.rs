//! Strict CSV loaders. Headers must match exactly; unknown columns are rejected.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Read;
use std::path::Path;

use chrono::{Datelike, NaiveDate, Weekday};

use super::{difference_weekly, AgeClass, CensoredSeries, CumulativeValue, VaccinationSeries};
use crate::error::{Error, Result};

pub const CDC_COLUMNS: [&str; 4] = ["state", "week_start_date", "age_band", "cum_deaths"];
pub const JHU_COLUMNS: [&str; 3] = ["state", "week_start_date", "deaths"];
pub const VACCINATION_COLUMNS: [&str; 4] = ["state", "week_start_date", "age_class", "rate"];

fn reader<R: Read>(input: R, expected: &[&str], source: &str) -> Result<csv::Reader<R>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(input);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != expected {
        let unknown: Vec<&String> = header.iter().filter(|h| !expected.contains(&h.as_str())).collect();
        return Err(Error::Data(format!(
            "{source}: header {header:?} does not match expected {expected:?}{}",
            if unknown.is_empty() { String::new() } else { format!(" (unknown columns {unknown:?})") }
        )));
    }
    Ok(rdr)
}

fn parse_week(s: &str, line: u64, source: &str) -> Result<NaiveDate> {
    let d = NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .map_err(|e| Error::Data(format!("{source} line {line}: bad date '{s}': {e}")))?;
    if d.weekday() != Weekday::Sat {
        return Err(Error::Data(format!("{source} line {line}: week start {d} is a {:?}, expected a Saturday", d.weekday())));
    }
    Ok(d)
}

fn parse_count(s: &str, line: u64, source: &str) -> Result<u64> {
    s.parse().map_err(|_| Error::Data(format!("{source} line {line}: '{s}' is not a non-negative integer")))
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map(|p| p.line()).unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CdcRecord {
    pub state: String,
    pub week: NaiveDate,
    pub band: String,
    /// `None` when the value was suppressed.
    pub cum_deaths: Option<u64>,
}

pub fn read_cdc<R: Read>(input: R) -> Result<Vec<CdcRecord>> {
    let mut rdr = reader(input, &CDC_COLUMNS, "cdc")?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        let cum = if rec[3].is_empty() { None } else { Some(parse_count(&rec[3], line, "cdc")?) };
        out.push(CdcRecord { state: rec[0].to_string(), week: parse_week(&rec[1], line, "cdc")?, band: rec[2].to_string(), cum_deaths: cum });
    }
    Ok(out)
}

pub fn load_cdc(path: impl AsRef<Path>) -> Result<Vec<CdcRecord>> {
    read_cdc(std::fs::File::open(path)?)
}

/// Cumulative reports of one state laid out on a contiguous weekly grid.
#[derive(Debug, Clone, PartialEq)]
pub struct StateReports {
    pub state: String,
    pub weeks: Vec<NaiveDate>,
    pub bands: Vec<String>,
    /// `values[b][w]` for band `b` and report week `w`.
    pub values: Vec<Vec<CumulativeValue>>,
}

impl StateReports {
    /// Start dates of the weekly-death weeks (all report weeks but the last).
    pub fn model_weeks(&self) -> &[NaiveDate] {
        &self.weeks[..self.weeks.len().saturating_sub(1)]
    }

    pub fn difference(&self) -> Result<Vec<CensoredSeries>> {
        self.bands.iter().zip(&self.values).map(|(b, v)| difference_weekly(b, v)).collect()
    }
}

/// Arranges the records of `state` by `bands` (in that order) over every week
/// between the first and last report. Absent rows become missing reports.
pub fn state_reports(records: &[CdcRecord], state: &str, bands: &[String]) -> Result<StateReports> {
    let rows: Vec<&CdcRecord> = records.iter().filter(|r| r.state == state).collect();
    if rows.is_empty() {
        return Err(Error::Data(format!("no CDC records for state {state}")));
    }
    let unknown: BTreeSet<&str> = rows.iter().map(|r| r.band.as_str()).filter(|b| !bands.iter().any(|x| x == b)).collect();
    if !unknown.is_empty() {
        return Err(Error::Data(format!("state {state}: unknown age bands {unknown:?}")));
    }
    let first = rows.iter().map(|r| r.week).min().expect("non-empty");
    let last = rows.iter().map(|r| r.week).max().expect("non-empty");
    let n_weeks = ((last - first).num_days() / 7 + 1) as usize;
    let weeks: Vec<NaiveDate> = (0..n_weeks).map(|i| first + chrono::Duration::days(7 * i as i64)).collect();
    let mut values = vec![vec![CumulativeValue::Missing; n_weeks]; bands.len()];
    let mut seen = HashMap::new();
    for r in rows {
        let b = bands.iter().position(|x| *x == r.band).expect("checked");
        let w = ((r.week - first).num_days() / 7) as usize;
        if seen.insert((b, w), ()).is_some() {
            return Err(Error::Data(format!("state {state}: duplicate row for band {} on {}", r.band, r.week)));
        }
        values[b][w] = match r.cum_deaths {
            Some(v) => CumulativeValue::Observed(v),
            None => CumulativeValue::Censored,
        };
    }
    Ok(StateReports { state: state.into(), weeks, bands: bands.to_vec(), values })
}

/// Weekly all-age deaths per state.
pub fn read_jhu<R: Read>(input: R) -> Result<BTreeMap<String, Vec<(NaiveDate, u64)>>> {
    let mut rdr = reader(input, &JHU_COLUMNS, "jhu")?;
    let mut out: BTreeMap<String, Vec<(NaiveDate, u64)>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        let week = parse_week(&rec[1], line, "jhu")?;
        let deaths = parse_count(&rec[2], line, "jhu")?;
        let entry = out.entry(rec[0].to_string()).or_default();
        if entry.iter().any(|(w, _)| *w == week) {
            return Err(Error::Data(format!("jhu line {line}: duplicate week {week} for {}", &rec[0])));
        }
        entry.push((week, deaths));
    }
    out.values_mut().for_each(|v| v.sort_by_key(|p| p.0));
    Ok(out)
}

pub fn load_jhu(path: impl AsRef<Path>) -> Result<BTreeMap<String, Vec<(NaiveDate, u64)>>> {
    read_jhu(std::fs::File::open(path)?)
}

pub fn read_vaccination<R: Read>(input: R) -> Result<Vec<VaccinationSeries>> {
    let mut rdr = reader(input, &VACCINATION_COLUMNS, "vaccination")?;
    let mut groups: BTreeMap<(String, AgeClass), Vec<(NaiveDate, f64)>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        let week = parse_week(&rec[1], line, "vaccination")?;
        let class = AgeClass::parse(&rec[2])?;
        let rate: f64 = rec[3]
            .parse()
            .map_err(|_| Error::Data(format!("vaccination line {line}: '{}' is not a number", &rec[3])))?;
        groups.entry((rec[0].to_string(), class)).or_default().push((week, rate));
    }
    groups.into_iter().map(|((s, c), pts)| VaccinationSeries::new(&s, c, pts)).collect()
}

pub fn load_vaccination(path: impl AsRef<Path>) -> Result<Vec<VaccinationSeries>> {
    read_vaccination(std::fs::File::open(path)?)
}

pub const LATTICE_COLUMNS: [&str; 3] = ["x", "y", "value"];

/// Values at points of a rectangular lattice, possibly with empty cells.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeData {
    /// Sorted distinct x coordinates (surface rows).
    pub xs: Vec<f64>,
    /// Sorted distinct y coordinates (surface columns).
    pub ys: Vec<f64>,
    /// `(row, col, value)` per observed point.
    pub cells: Vec<(usize, usize, f64)>,
}

pub fn read_lattice<R: Read>(input: R) -> Result<LatticeData> {
    let mut rdr = reader(input, &LATTICE_COLUMNS, "lattice")?;
    let mut points = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        let mut nums = [0.0; 3];
        for (k, n) in nums.iter_mut().enumerate() {
            *n = rec[k]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Data(format!("lattice line {line}: '{}' is not a finite number", &rec[k])))?;
        }
        points.push(nums);
    }
    if points.is_empty() {
        return Err(Error::Data("lattice file has no rows".into()));
    }
    let axis = |k: usize| {
        let mut v: Vec<f64> = points.iter().map(|p| p[k]).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    };
    let xs = axis(0);
    let ys = axis(1);
    let mut seen = BTreeSet::new();
    let mut cells = Vec::with_capacity(points.len());
    for p in &points {
        let r = xs.partition_point(|x| *x < p[0]);
        let c = ys.partition_point(|y| *y < p[1]);
        if !seen.insert((r, c)) {
            return Err(Error::Data(format!("lattice point ({}, {}) appears twice", p[0], p[1])));
        }
        cells.push((r, c, p[2]));
    }
    Ok(LatticeData { xs, ys, cells })
}

pub fn load_lattice(path: impl AsRef<Path>) -> Result<LatticeData> {
    read_lattice(std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_indexing() {
        let text = "x,y,value\n0.5,2,1.0\n0.0,2,2.0\n0.5,1,3.0\n";
        let l = read_lattice(text.as_bytes()).unwrap();
        assert_eq!(l.xs, vec![0.0, 0.5]);
        assert_eq!(l.ys, vec![1.0, 2.0]);
        assert_eq!(l.cells, vec![(1, 1, 1.0), (0, 1, 2.0), (1, 0, 3.0)]);
        assert!(read_lattice("x,y,value\n0,0,1\n0,0,2\n".as_bytes()).is_err());
        assert!(read_lattice("x,y\n0,0\n".as_bytes()).is_err());
    }

    #[test]
    fn strict_header() {
        let bad = "state,week_start_date,age_band,cum_deaths,extra\nXX,2020-05-02,0,0,1\n";
        let err = read_cdc(bad.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("unknown columns"), "{err}");
        assert!(read_jhu("state,date,deaths\n".as_bytes()).is_err());
    }

    #[test]
    fn censored_and_missing_rows() {
        let text = "state,week_start_date,age_band,cum_deaths\n\
                    XX,2020-05-02,a,0\nXX,2020-05-09,a,\nXX,2020-05-23,a,12\n";
        let recs = read_cdc(text.as_bytes()).unwrap();
        let rep = state_reports(&recs, "XX", &["a".to_string()]).unwrap();
        assert_eq!(rep.weeks.len(), 4);
        assert_eq!(
            rep.values[0],
            vec![CumulativeValue::Observed(0), CumulativeValue::Censored, CumulativeValue::Missing, CumulativeValue::Observed(12)]
        );
        assert_eq!(rep.model_weeks().len(), 3);
    }

    #[test]
    fn rejects_non_saturday_and_bad_numbers() {
        let text = "state,week_start_date,deaths\nXX,2020-05-03,4\n";
        assert!(read_jhu(text.as_bytes()).unwrap_err().to_string().contains("Saturday"));
        let text = "state,week_start_date,deaths\nXX,2020-05-02,-4\n";
        assert!(read_jhu(text.as_bytes()).is_err());
        let text = "state,week_start_date,age_class,rate\nXX,2020-05-02,kids,0.1\n";
        assert!(read_vaccination(text.as_bytes()).is_err());
    }
}
