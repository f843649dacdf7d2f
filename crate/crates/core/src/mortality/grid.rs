use std::ops::RangeInclusive;

use ndarray::{Array2, ArrayView2};

use crate::error::{validation, Error, Result};

/// Single-year ages `0..=105`.
pub const N_AGES: usize = 106;

/// The eleven reporting bands of the CDC series.
pub const CDC_BANDS: [(&str, usize, usize); 11] = [
    ("0", 0, 0),
    ("1-4", 1, 4),
    ("5-14", 5, 14),
    ("15-24", 15, 24),
    ("25-34", 25, 34),
    ("35-44", 35, 44),
    ("45-54", 45, 54),
    ("55-64", 55, 64),
    ("65-74", 65, 74),
    ("75-84", 75, 84),
    ("85+", 85, 105),
];

#[derive(Debug, Clone, PartialEq)]
pub struct AgeBand {
    pub label: String,
    pub ages: RangeInclusive<usize>,
}

/// Ages, weeks and the bands that partition the ages.
#[derive(Debug, Clone, PartialEq)]
pub struct AgeGrid {
    n_ages: usize,
    n_weeks: usize,
    bands: Vec<AgeBand>,
    band_of_age: Vec<usize>,
}

impl AgeGrid {
    /// Bands must be contiguous, ordered and cover `0..n_ages` exactly.
    pub fn new(n_ages: usize, n_weeks: usize, bands: Vec<AgeBand>) -> Result<Self> {
        if n_weeks < 1 {
            return validation("age grid needs at least one week");
        }
        if n_ages == 0 || bands.is_empty() {
            return validation("age grid needs ages and bands");
        }
        let mut next = 0;
        let mut band_of_age = Vec::with_capacity(n_ages);
        for (b, band) in bands.iter().enumerate() {
            if *band.ages.start() != next || band.ages.end() < band.ages.start() {
                return validation(format!("band {} does not continue the partition at age {next}", band.label));
            }
            next = band.ages.end() + 1;
            band_of_age.extend(std::iter::repeat_n(b, band.ages.clone().count()));
        }
        if next != n_ages {
            return validation(format!("bands cover ages 0..{next}, expected 0..{n_ages}"));
        }
        Ok(Self { n_ages, n_weeks, bands, band_of_age })
    }

    /// Ages 0 to 105 in the CDC reporting bands.
    pub fn cdc(n_weeks: usize) -> Result<Self> {
        let bands = CDC_BANDS.iter().map(|&(l, a, b)| AgeBand { label: l.into(), ages: a..=b }).collect();
        Self::new(N_AGES, n_weeks, bands)
    }

    /// Ages 0 to 105 split at the given band start ages (the first must be 0).
    pub fn with_band_starts(n_weeks: usize, starts: &[usize]) -> Result<Self> {
        if starts.first() != Some(&0) || starts.windows(2).any(|p| p[1] <= p[0]) || starts.last().is_some_and(|&s| s >= N_AGES) {
            return validation(format!("band starts {starts:?} must increase from 0 and stay below {N_AGES}"));
        }
        let bands = starts
            .iter()
            .enumerate()
            .map(|(i, &s)| {
                let e = starts.get(i + 1).map_or(N_AGES - 1, |n| n - 1);
                let label = if e == N_AGES - 1 { format!("{s}+") } else if s == e { s.to_string() } else { format!("{s}-{e}") };
                AgeBand { label, ages: s..=e }
            })
            .collect();
        Self::new(N_AGES, n_weeks, bands)
    }

    pub fn n_ages(&self) -> usize {
        self.n_ages
    }

    pub fn n_weeks(&self) -> usize {
        self.n_weeks
    }

    pub fn bands(&self) -> &[AgeBand] {
        &self.bands
    }

    pub fn band_labels(&self) -> Vec<String> {
        self.bands.iter().map(|b| b.label.clone()).collect()
    }

    pub fn band_of_age(&self, age: usize) -> usize {
        self.band_of_age[age]
    }

    /// Age coordinates `0, 1, ..` used as the surface's first axis.
    pub fn age_axis(&self) -> Vec<f64> {
        (0..self.n_ages).map(|a| a as f64).collect()
    }

    /// Week coordinates `1..=W` used as the surface's second axis.
    pub fn week_axis(&self) -> Vec<f64> {
        (1..=self.n_weeks).map(|w| w as f64).collect()
    }

    /// Sums rows of an `ages x weeks` matrix within each band.
    pub fn aggregate(&self, by_age: ArrayView2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((self.bands.len(), by_age.ncols()));
        for (a, row) in by_age.outer_iter().enumerate() {
            let mut dst = out.row_mut(self.band_of_age[a]);
            dst += &row;
        }
        out
    }
}

/// Column-wise softmax of an `ages x weeks` surface.
pub fn composition_from_surface(f: ArrayView2<f64>) -> Result<Array2<f64>> {
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("surface has non-finite entries".into()));
    }
    let mut pi = f.to_owned();
    for mut col in pi.columns_mut() {
        let m = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        col.mapv_inplace(|v| (v - m).exp());
        let s = col.sum();
        col /= s;
    }
    Ok(pi)
}

/// `mu[b, w] = sum over ages a in b of lambda[w] * pi[a, w]`.
pub fn expected_band_deaths(lambda: &[f64], pi: ArrayView2<f64>, grid: &AgeGrid) -> Result<Array2<f64>> {
    if pi.dim() != (grid.n_ages(), grid.n_weeks()) || lambda.len() != grid.n_weeks() {
        return validation(format!(
            "composition is {:?} with {} totals, grid expects {}x{}",
            pi.dim(),
            lambda.len(),
            grid.n_ages(),
            grid.n_weeks()
        ));
    }
    if let Some(l) = lambda.iter().find(|l| !(**l >= 0.0)) {
        return validation(format!("weekly totals must be non-negative, got {l}"));
    }
    let mut mu = pi.to_owned();
    for (mut col, l) in mu.columns_mut().into_iter().zip(lambda) {
        col *= *l;
    }
    Ok(grid.aggregate(mu.view()))
}
