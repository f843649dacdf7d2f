use ndarray::{Array3, ArrayView2, Axis};

use crate::diagnostics::{ess_bulk, quantile, rank_normalized_split_rhat};
use crate::SampleError;

/// Post-warmup output of [`sample`](crate::sample).
#[derive(Debug, Clone)]
pub struct PosteriorDraws {
    /// Labels of the constrained quantities.
    pub names: Vec<String>,
    /// Constrained quantities, `chains x draws x names.len()`.
    pub quantities: Array3<f64>,
    /// Unconstrained positions, `chains x draws x dim`.
    pub raw: Array3<f64>,
    pub divergences: Vec<usize>,
    pub step_sizes: Vec<f64>,
    pub mean_accept: Vec<f64>,
    pub leapfrog_steps: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q500: f64,
    pub q975: f64,
    pub ess_bulk: f64,
    pub rhat: f64,
}

impl PosteriorDraws {
    pub fn n_chains(&self) -> usize {
        self.raw.len_of(Axis(0))
    }

    pub fn n_draws(&self) -> usize {
        self.raw.len_of(Axis(1))
    }

    pub fn total_divergences(&self) -> usize {
        self.divergences.iter().sum()
    }

    /// Draws of one named quantity laid out as `chains x draws`.
    pub fn quantity(&self, index: usize) -> ArrayView2<'_, f64> {
        self.quantities.index_axis(Axis(2), index)
    }

    /// All retained draws of one quantity, chain-major.
    pub fn pooled(&self, index: usize) -> Vec<f64> {
        self.quantity(index).iter().copied().collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Iterates over every retained unconstrained draw, chain-major.
    pub fn raw_draws(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        self.raw
            .outer_iter()
            .flat_map(|chain| chain.outer_iter().map(|d| d.to_vec()).collect::<Vec<_>>())
    }

    /// Posterior summaries with rank-normalised split R-hat and bulk ESS.
    pub fn summary(&self) -> Result<Vec<ParameterSummary>, SampleError> {
        (0..self.names.len())
            .map(|j| {
                let view = self.quantity(j);
                let chains: Vec<Vec<f64>> = view.outer_iter().map(|c| c.to_vec()).collect();
                let pooled: Vec<f64> = chains.iter().flatten().copied().collect();
                let n = pooled.len() as f64;
                let mean = pooled.iter().sum::<f64>() / n;
                let sd = (pooled.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
                Ok(ParameterSummary {
                    name: self.names[j].clone(),
                    mean,
                    sd,
                    q025: quantile(&pooled, 0.025),
                    q500: quantile(&pooled, 0.5),
                    q975: quantile(&pooled, 0.975),
                    ess_bulk: ess_bulk(&chains)?,
                    rhat: rank_normalized_split_rhat(&chains)?,
                })
            })
            .collect()
    }
}
