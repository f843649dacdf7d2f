//! Simulation study and lattice benchmark comparing the four surface priors.

use std::time::Instant;

use bsgp_hmc::{diagnostics::quantile, sample, PosteriorDraws, SamplerConfig};
use ndarray::Array2;
use rand::{seq::index::sample as sample_indices, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};

use crate::data::io::LatticeData;
use crate::error::{validation, Result};
use crate::kernels::{KroneckerCov, SqExpKernel};
use crate::priors::{Hyperpriors, PriorKind, SurfacePrior};
use crate::regression::{CellValue, Observation, SurfaceRegression};
use crate::splines::{eval_basis, KnotVector};

/// A prior and, for the spline priors, its knot count per axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MethodSpec {
    pub kind: PriorKind,
    pub knots: Option<usize>,
}

impl MethodSpec {
    pub fn new(kind: PriorKind, knots: Option<usize>) -> Result<Self> {
        match (kind, knots) {
            (PriorKind::Standard2DGP, None) => Ok(Self { kind, knots }),
            (PriorKind::Standard2DGP, Some(_)) => validation("the standard 2-D GP takes no knots"),
            (_, Some(k)) if k >= 2 => Ok(Self { kind, knots }),
            _ => validation(format!("{} needs at least 2 knots per axis", kind.label())),
        }
    }

    pub fn label(&self) -> String {
        match self.knots {
            Some(k) => format!("{} ({k} knots)", self.kind.label()),
            None => self.kind.label().to_string(),
        }
    }
}

/// Builds a prior over a `rows x cols` lattice. GP coordinates are the cell
/// indices `1..=n` of each axis so that the lengthscale prior is in the same
/// units as for the projected GP's basis indices.
pub fn build_prior(method: MethodSpec, rows: &[f64], cols: &[f64], degree: usize, hyper: Hyperpriors) -> Result<SurfacePrior> {
    let prior = match (method.kind, method.knots) {
        (PriorKind::Standard2DGP, _) => {
            let idx = |n: usize| (1..=n).map(|i| i as f64).collect::<Vec<_>>();
            SurfacePrior::gp2d(idx(rows.len()), idx(cols.len()))?
        }
        (kind, Some(k)) => {
            let axis = |g: &[f64]| -> Result<_> {
                let lo = g.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                eval_basis(&KnotVector::equispaced(lo, hi, k, degree)?, g)
            };
            let (b1, b2) = (axis(rows)?, axis(cols)?);
            match kind {
                PriorKind::StandardBSplines => SurfacePrior::bsplines(b1, b2),
                PriorKind::BayesianPSplines => SurfacePrior::psplines(b1, b2),
                PriorKind::ProjectedGP => SurfacePrior::projected_gp(b1, b2),
                PriorKind::Standard2DGP => unreachable!("handled above"),
            }
        }
        (kind, None) => return validation(format!("{} needs a knot count", kind.label())),
    };
    Ok(prior.with_hyperpriors(hyper))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSettings {
    /// Cells per axis on `[0, 1]`.
    pub grid_size: usize,
    pub lengthscale: f64,
    pub zeta: f64,
    /// Overdispersion of the simulated counts.
    pub nu: f64,
    pub train_fraction: f64,
    pub degree: usize,
}

impl Default for SimulationSettings {
    fn default() -> Self {
        Self { grid_size: 30, lengthscale: 0.25, zeta: 1.0, nu: 0.5, train_fraction: 0.4, degree: 3 }
    }
}

impl SimulationSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return validation(format!("train fraction {} must lie strictly between 0 and 1", self.train_fraction));
        }
        if self.grid_size < 2 {
            return validation("grid needs at least 2 cells per axis");
        }
        if !(self.lengthscale > 0.0 && self.zeta > 0.0 && self.nu > 0.0) {
            return validation("lengthscale, zeta and nu must be positive");
        }
        Ok(())
    }

    pub fn grid(&self) -> Vec<f64> {
        let n = self.grid_size;
        (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
    }
}

/// Named correlation scenarios of the study.
pub fn scenario_label(lengthscale: f64) -> &'static str {
    match lengthscale {
        l if (l - 0.05).abs() < 1e-12 => "weakly correlated",
        l if (l - 0.25).abs() < 1e-12 => "mildly correlated",
        l if (l - 1.0).abs() < 1e-12 => "strongly correlated",
        _ => "custom",
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedSurface {
    pub grid: Vec<f64>,
    /// True log mean `f`.
    pub log_mean: Array2<f64>,
    pub counts: Array2<u64>,
    pub train: Vec<(usize, usize)>,
    pub test: Vec<(usize, usize)>,
}

/// Draws a negative-binomial count with mean `mu` and overdispersion `nu`.
pub fn sample_negbin<R: Rng + ?Sized>(mu: f64, nu: f64, rng: &mut R) -> u64 {
    if mu <= 0.0 {
        return 0;
    }
    let rate = Gamma::new(mu / nu, nu).expect("positive parameters").sample(rng);
    if rate <= 0.0 {
        return 0;
    }
    Poisson::new(rate).map(|p| p.sample(rng) as u64).unwrap_or(0)
}

pub fn simulate_surface(settings: &SimulationSettings, seed: u64) -> Result<SimulatedSurface> {
    settings.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = settings.grid();
    let n = grid.len();
    let kernel = SqExpKernel::from_scale(settings.zeta, settings.lengthscale)?;
    let cov = KroneckerCov::from_axes(&grid, &grid, &kernel, &kernel)?;
    let z = Array2::from_shape_simple_fn((n, n), || rng.sample::<f64, _>(StandardNormal));
    let log_mean = cov.sample(z.view())?;
    let counts = log_mean.mapv(|f| sample_negbin(f.exp(), settings.nu, &mut rng));
    let n_train = ((n * n) as f64 * settings.train_fraction).round().max(1.0) as usize;
    let mut picked = vec![false; n * n];
    for i in sample_indices(&mut rng, n * n, n_train) {
        picked[i] = true;
    }
    let cell = |i: usize| (i / n, i % n);
    let train = (0..n * n).filter(|&i| picked[i]).map(cell).collect();
    let test = (0..n * n).filter(|&i| !picked[i]).map(cell).collect();
    Ok(SimulatedSurface { grid, log_mean, counts, train, test })
}

/// Outcome of one fitted method.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodResult {
    pub method: MethodSpec,
    pub mse: f64,
    pub seconds: f64,
    pub divergences: usize,
    /// Largest split R-hat over the reported test-cell means.
    pub max_rhat: f64,
}

fn posterior_medians(draws: &PosteriorDraws, first: usize, count: usize) -> Vec<f64> {
    (first..first + count).map(|j| quantile(&draws.pooled(j), 0.5)).collect()
}

fn max_rhat(draws: &PosteriorDraws) -> f64 {
    draws.summary().map(|s| s.iter().map(|p| p.rhat).fold(f64::NAN, f64::max)).unwrap_or(f64::NAN)
}

fn fit_and_score(model: &SurfaceRegression, method: MethodSpec, sampler: &SamplerConfig, truth: &[f64]) -> Result<MethodResult> {
    let start = Instant::now();
    let draws = sample(model, sampler)?;
    let seconds = start.elapsed().as_secs_f64();
    let first = 1 + model.prior().hyper_names().len();
    let med = posterior_medians(&draws, first, truth.len());
    let mse = med.iter().zip(truth).map(|(m, t)| (m - t).powi(2)).sum::<f64>() / truth.len() as f64;
    Ok(MethodResult { method, mse, seconds, divergences: draws.total_divergences(), max_rhat: max_rhat(&draws) })
}

/// Fits one method to the training cells and scores the posterior-median
/// mean surface against the true `exp f` on held-out cells.
pub fn fit_simulated(sim: &SimulatedSurface, method: MethodSpec, degree: usize, sampler: &SamplerConfig) -> Result<MethodResult> {
    let prior = build_prior(method, &sim.grid, &sim.grid, degree, Hyperpriors::default())?;
    let data = sim.train.iter().map(|&(r, c)| CellValue { row: r, col: c, value: sim.counts[[r, c]] as f64 }).collect();
    let model = SurfaceRegression::new(prior, Observation::NegBin, data, sim.test.clone())?;
    let truth: Vec<f64> = sim.test.iter().map(|&(r, c)| sim.log_mean[[r, c]].exp()).collect();
    fit_and_score(&model, method, sampler, &truth)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationReport {
    pub scenario: &'static str,
    pub seed: u64,
    pub n_train: usize,
    pub results: Vec<MethodResult>,
}

pub fn run_simulation(settings: &SimulationSettings, methods: &[MethodSpec], sampler: &SamplerConfig, seed: u64) -> Result<SimulationReport> {
    let sim = simulate_surface(settings, seed)?;
    let results = methods.iter().map(|&m| fit_simulated(&sim, m, settings.degree, sampler)).collect::<Result<_>>()?;
    Ok(SimulationReport { scenario: scenario_label(settings.lengthscale), seed, n_train: sim.train.len(), results })
}

/// Splits lattice points into `n_train` training points and up to `n_test` test points.
pub fn split_lattice(data: &LatticeData, n_train: usize, n_test: Option<usize>, seed: u64) -> Result<(Vec<CellValue>, Vec<CellValue>)> {
    let n = data.cells.len();
    if n_train == 0 || n_train >= n {
        return validation(format!("training size {n_train} must lie between 1 and {}", n - 1));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let order = sample_indices(&mut rng, n, n).into_vec();
    let to_cell = |i: usize| {
        let (row, col, value) = data.cells[i];
        CellValue { row, col, value }
    };
    let train = order[..n_train].iter().map(|&i| to_cell(i)).collect();
    let rest = &order[n_train..];
    let take = n_test.unwrap_or(rest.len()).min(rest.len());
    let test = rest[..take].iter().map(|&i| to_cell(i)).collect();
    Ok((train, test))
}

/// Gaussian-likelihood fits of spline priors on a lattice; MSE against held-out values.
pub fn run_benchmark(
    data: &LatticeData,
    methods: &[MethodSpec],
    n_train: usize,
    n_test: Option<usize>,
    degree: usize,
    sampler: &SamplerConfig,
    seed: u64,
) -> Result<Vec<MethodResult>> {
    let (train, test) = split_lattice(data, n_train, n_test, seed)?;
    let report: Vec<(usize, usize)> = test.iter().map(|c| (c.row, c.col)).collect();
    let truth: Vec<f64> = test.iter().map(|c| c.value).collect();
    methods
        .iter()
        .map(|&m| {
            let prior = build_prior(m, &data.xs, &data.ys, degree, Hyperpriors::default())?;
            let model = SurfaceRegression::new(prior, Observation::Gaussian, train.clone(), report.clone())?;
            fit_and_score(&model, m, sampler, &truth)
        })
        .collect()
}
