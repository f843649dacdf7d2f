use crate::error::{Error, Result};
use crate::likelihood::CensoredSumBound;

/// One cumulative report value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CumulativeValue {
    Observed(u64),
    /// Suppressed by the source because the true count lies in 1..=9.
    Censored,
    /// No report was published for the week.
    Missing,
}

/// Weekly deaths of one band, split into retrievable weeks, one optional
/// non-retrievable block with sum bounds, and missing weeks.
///
/// Weeks are 1-based; weekly deaths `d_w = D_{w+1} - D_w` exist for
/// `w = 1..=n_weeks` where `n_weeks` is one less than the number of reports.
#[derive(Debug, Clone, PartialEq)]
pub struct CensoredSeries {
    pub band: String,
    pub n_weeks: usize,
    pub retrievable: Vec<(usize, u64)>,
    pub nonretrievable: Vec<usize>,
    pub bound: Option<CensoredSumBound>,
    pub missing_weeks: Vec<usize>,
    /// Missing reports absorbed into the censored block.
    pub merged_missing: Vec<usize>,
}

impl CensoredSeries {
    /// Retrievable deaths of week `w`, if any.
    pub fn retrievable_at(&self, w: usize) -> Option<u64> {
        self.retrievable.iter().find(|(x, _)| *x == w).map(|(_, d)| *d)
    }

    /// Human-readable notes about merges performed while differencing.
    pub fn warnings(&self) -> Vec<String> {
        self.merged_missing
            .iter()
            .map(|m| format!("band {}: missing report at week {m} merged into the censored block", self.band))
            .collect()
    }
}

/// Differences a cumulative series into weekly deaths and classifies censoring.
pub fn difference_weekly(band: &str, values: &[CumulativeValue]) -> Result<CensoredSeries> {
    use CumulativeValue::*;
    let wc = values.len();
    if wc == 0 {
        return Err(Error::Data(format!("band {band}: empty cumulative series")));
    }
    let at = |w: usize| values[w - 1];

    let small: Vec<usize> = (1..=wc).filter(|&w| matches!(at(w), Observed(v) if (1..=9).contains(&v))).collect();
    if !small.is_empty() {
        return Err(Error::Data(format!("band {band}: observed values between 1 and 9 at weeks {small:?} should have been censored")));
    }
    let observed: Vec<(usize, u64)> = (1..=wc).filter_map(|w| if let Observed(v) = at(w) { Some((w, v)) } else { None }).collect();
    let decreasing: Vec<usize> = observed.windows(2).filter(|p| p[1].1 < p[0].1).map(|p| p[1].0).collect();
    if !decreasing.is_empty() {
        return Err(Error::Data(format!("band {band}: cumulative deaths decrease at weeks {decreasing:?}")));
    }
    let censored: Vec<usize> = (1..=wc).filter(|&w| at(w) == Censored).collect();
    let mut bad: Vec<usize> = Vec::new();
    for &c in &censored {
        for &(w, v) in &observed {
            if (w < c && v > 0) || (w > c && v == 0) {
                bad.push(w);
            }
        }
    }
    if !bad.is_empty() {
        bad.sort_unstable();
        bad.dedup();
        return Err(Error::Data(format!("band {band}: cumulative deaths decrease around censored weeks at weeks {bad:?}")));
    }

    let Some(start) = (1..=wc).find(|&w| at(w) != Missing) else {
        return Ok(CensoredSeries {
            band: band.into(),
            n_weeks: wc - 1,
            retrievable: vec![],
            nonretrievable: vec![],
            bound: None,
            missing_weeks: (1..wc).collect(),
            merged_missing: vec![],
        });
    };
    let end = (1..=wc).rev().find(|&w| at(w) != Missing).expect("start exists");

    let mut in_block = vec![false; wc + 2];
    for &c in &censored {
        in_block[c] = true;
    }
    let mut merged = Vec::new();
    loop {
        let next = ((start + 1)..end).find(|&m| at(m) == Missing && !in_block[m] && (in_block[m - 1] || in_block[m + 1]));
        match next {
            Some(m) => {
                in_block[m] = true;
                merged.push(m);
            }
            None => break,
        }
    }
    merged.sort_unstable();
    let block: Vec<usize> = (1..=wc).filter(|&w| in_block[w]).collect();
    if block.windows(2).any(|p| p[1] != p[0] + 1) {
        return Err(Error::Data(format!("band {band}: more than one censored block at weeks {block:?}")));
    }

    let mut nonretrievable = Vec::new();
    let mut bound = None;
    if let (Some(&fc), Some(&lc)) = (block.first(), block.last()) {
        let fnc = lc + 1;
        let starts = fc == start;
        let ends = lc == end;
        let (first_week, last_week, b) = match (starts, ends) {
            (false, false) => {
                let Observed(v) = at(fnc) else { unreachable!("block is followed by an observation") };
                (fc - 1, fnc - 1, CensoredSumBound::exact(v))
            }
            (true, false) => {
                let Observed(v) = at(fnc) else { unreachable!("block is followed by an observation") };
                (fc, fnc - 1, CensoredSumBound::observed_end(v))
            }
            (false, true) => (fc - 1, lc - 1, CensoredSumBound::trailing()),
            (true, true) => (fc, lc - 1, CensoredSumBound::all_censored()),
        };
        if first_week <= last_week {
            nonretrievable = (first_week..=last_week).collect();
            bound = Some(b);
        }
    }

    let mut missing_weeks: Vec<usize> = (1..=wc)
        .filter(|&m| at(m) == Missing && !in_block[m])
        .flat_map(|m| [m.wrapping_sub(1), m])
        .filter(|&w| w >= 1 && w < wc)
        .collect();
    missing_weeks.sort_unstable();
    missing_weeks.dedup();

    let retrievable: Vec<(usize, u64)> = (1..wc)
        .filter(|w| !nonretrievable.contains(w) && !missing_weeks.contains(w))
        .filter_map(|w| match (at(w), at(w + 1)) {
            (Observed(a), Observed(b)) => Some((w, b - a)),
            _ => None,
        })
        .collect();

    let covered = retrievable.len() + nonretrievable.len() + missing_weeks.len();
    if covered != wc - 1 || missing_weeks.iter().any(|w| nonretrievable.contains(w)) {
        return Err(Error::Data(format!("band {band}: weeks could not be partitioned consistently")));
    }

    Ok(CensoredSeries {
        band: band.into(),
        n_weeks: wc - 1,
        retrievable,
        nonretrievable,
        bound,
        missing_weeks,
        merged_missing: merged,
    })
}

/// Total retrievable deaths per week across bands; `None` where no band is retrievable.
pub fn retrievable_totals(series: &[CensoredSeries]) -> Vec<Option<u64>> {
    let n = series.iter().map(|s| s.n_weeks).max().unwrap_or(0);
    let mut totals: Vec<Option<u64>> = vec![None; n];
    for s in series {
        for &(w, d) in &s.retrievable {
            *totals[w - 1].get_or_insert(0) += d;
        }
    }
    totals
}
