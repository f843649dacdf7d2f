//! Data generators with known truth for the mortality model and the meta-regression.

use chrono::NaiveDate;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::data::io::CdcRecord;
use crate::data::{difference_weekly, CensoredSeries, CumulativeValue};
use crate::error::{validation, Result};
use crate::meta::{GammaConvention, MetaData, MetaObservation, MetaParams};
use crate::mortality::{composition_from_surface, expected_band_deaths, AgeGrid};
use crate::simulation::sample_negbin;

/// Parameters that generate synthetic mortality reports.
#[derive(Debug, Clone, PartialEq)]
pub struct MortalityTruth {
    pub grid: AgeGrid,
    /// Log composition surface, ages x weeks.
    pub surface: Array2<f64>,
    pub lambda: Vec<f64>,
    pub nu: f64,
    /// Cumulative deaths already reported before the first week, per band.
    pub baseline: Vec<u64>,
}

impl MortalityTruth {
    /// Deaths rising with age, a composition that drifts over time, and a single wave.
    pub fn smooth(grid: AgeGrid, peak: f64, nu: f64) -> Self {
        let (n, w) = (grid.n_ages(), grid.n_weeks());
        let top = (n - 1).max(1) as f64;
        let surface = Array2::from_shape_fn((n, w), |(a, t)| {
            let x = a as f64 / top;
            let s = (t as f64 + 0.5) / w as f64;
            4.5 * x + 0.8 * (std::f64::consts::TAU * s).sin() * (x - 0.5) - 1.5 * (x - 0.8).powi(2)
        });
        let lambda = (0..w).map(|t| peak * (0.35 + 0.65 * (std::f64::consts::PI * (t as f64 + 0.5) / w as f64).sin())).collect();
        let baseline = (0..grid.bands().len()).map(|b| if b == 0 { 0 } else { 100 * b as u64 }).collect();
        Self { grid, surface, lambda, nu, baseline }
    }

    /// Expected deaths by band and week.
    pub fn expected_band_deaths(&self) -> Result<Array2<f64>> {
        let pi = composition_from_surface(self.surface.view())?;
        expected_band_deaths(&self.lambda, pi.view(), &self.grid)
    }
}

/// Reports generated from a [`MortalityTruth`].
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticMortality {
    pub truth: MortalityTruth,
    /// Weekly deaths by band and week.
    pub weekly: Array2<u64>,
    /// Cumulative reports per band, `W + 1` each.
    pub reports: Vec<Vec<CumulativeValue>>,
}

/// Simulates weekly band deaths, accumulates them, censors values in 1..=9
/// and blanks the reports listed in `missing_reports` (1-based).
pub fn simulate_mortality(truth: &MortalityTruth, missing_reports: &[usize], seed: u64) -> Result<SyntheticMortality> {
    if truth.baseline.len() != truth.grid.bands().len() {
        return validation("one baseline per band is required");
    }
    let w = truth.grid.n_weeks();
    if let Some(m) = missing_reports.iter().find(|&&m| m == 0 || m > w + 1) {
        return validation(format!("missing report {m} outside 1..={}", w + 1));
    }
    let mu = truth.expected_band_deaths()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weekly = mu.mapv(|m| sample_negbin(m, truth.nu, &mut rng));
    let reports = weekly
        .outer_iter()
        .zip(&truth.baseline)
        .map(|(row, &base)| {
            let mut cum = base;
            let mut out = vec![base];
            for d in row {
                cum += d;
                out.push(cum);
            }
            out.into_iter()
                .enumerate()
                .map(|(i, c)| {
                    if missing_reports.contains(&(i + 1)) {
                        CumulativeValue::Missing
                    } else if (1..=9).contains(&c) {
                        CumulativeValue::Censored
                    } else {
                        CumulativeValue::Observed(c)
                    }
                })
                .collect()
        })
        .collect();
    Ok(SyntheticMortality { truth: truth.clone(), weekly, reports })
}

impl SyntheticMortality {
    pub fn series(&self) -> Result<Vec<CensoredSeries>> {
        self.truth.grid.bands().iter().zip(&self.reports).map(|(b, r)| difference_weekly(&b.label, r)).collect()
    }

    /// All-age weekly deaths.
    pub fn totals(&self) -> Vec<u64> {
        self.weekly.columns().into_iter().map(|c| c.sum()).collect()
    }

    /// Rows in the CDC layout, weekly from `first_week`.
    pub fn cdc_records(&self, state: &str, first_week: NaiveDate) -> Vec<CdcRecord> {
        let mut out = Vec::new();
        for (band, reports) in self.truth.grid.bands().iter().zip(&self.reports) {
            for (i, v) in reports.iter().enumerate() {
                let week = first_week + chrono::Duration::days(7 * i as i64);
                let cum_deaths = match v {
                    CumulativeValue::Observed(c) => Some(*c),
                    CumulativeValue::Censored => None,
                    CumulativeValue::Missing => continue,
                };
                out.push(CdcRecord { state: state.into(), week, band: band.label.clone(), cum_deaths });
            }
        }
        out
    }
}

/// Meta-regression design and parameters with known truth.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaTruth {
    pub params: MetaParams,
    pub vaccination: Vec<[f64; 2]>,
    pub weeks: usize,
    pub convention: GammaConvention,
}

impl MetaTruth {
    /// `n_states` states with widely spread coverage and the given same-class effect.
    pub fn spread(n_states: usize, weeks: usize, chi_vacc: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vaccination: Vec<[f64; 2]> =
            (0..n_states).map(|_| [rng.random_range(0.05..0.95), rng.random_range(0.3..0.95)]).collect();
        let sigma_chi = [0.05, 0.05];
        let chi_state = (0..n_states)
            .map(|_| [sigma_chi[0] * rng.sample::<f64, _>(StandardNormal), sigma_chi[1] * rng.sample::<f64, _>(StandardNormal)])
            .collect();
        let kappa = (0..n_states).map(|_| rng.random_range(1.5..2.5)).collect();
        let params = MetaParams {
            chi_base: [0.0, 0.0],
            chi_vacc,
            chi_cross: [0.0, 0.0],
            psi_base: [0.1, 0.05],
            psi_vacc: -0.2,
            psi_cross: [0.0, 0.0],
            sigma_chi,
            kappa,
            chi_state,
        };
        Self { params, vaccination, weeks, convention: GammaConvention::ShapeRate }
    }

    /// Draws `r ~ Gamma(xi, kappa^2)` for every state, class and week.
    pub fn simulate(&self, seed: u64) -> Result<MetaData> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.vaccination.len();
        let mut observations = Vec::new();
        for m in 0..n {
            let (chi, psi) = self.params.linear_terms(m, self.vaccination[m]);
            let k2 = self.params.kappa[m].powi(2);
            let scale = match self.convention {
                GammaConvention::ShapeRate => 1.0 / k2,
                GammaConvention::ShapeScale => k2,
            };
            for c in 0..2 {
                for k in 0..self.weeks {
                    let xi = (chi[c] + psi[c] * k as f64).exp();
                    let r = Gamma::new(xi, scale).map_err(|e| crate::Error::Numerical(e.to_string()))?.sample(&mut rng);
                    observations.push(MetaObservation { state: m, class: c, offset: k, r: r.max(f64::MIN_POSITIVE) });
                }
            }
        }
        let data = MetaData {
            states: (0..n).map(|m| format!("S{:02}", m + 1)).collect(),
            vaccination: self.vaccination.clone(),
            observations,
            max_pre: vec![[100.0, 100.0]; n],
        };
        data.validate()?;
        Ok(data)
    }
}
