use bsgp_hmc::PosteriorDraws;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Gamma};
use rayon::prelude::*;
use statrs::function::gamma::ln_gamma;

use super::model::MortalityModel;
use crate::error::{validation, Error, Result};

fn check_alpha(alpha: &[f64]) -> Result<()> {
    if alpha.is_empty() {
        return validation("Dirichlet-Multinomial needs at least one category");
    }
    if let Some(a) = alpha.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
        return validation(format!("concentrations must be positive and finite, got {a}"));
    }
    Ok(())
}

/// `log P(counts)` under a Dirichlet-Multinomial with the given concentrations.
pub fn dirichlet_multinomial_logpmf(counts: &[u64], alpha: &[f64]) -> Result<f64> {
    check_alpha(alpha)?;
    if counts.len() != alpha.len() {
        return validation(format!("{} counts for {} concentrations", counts.len(), alpha.len()));
    }
    let n: u64 = counts.iter().sum();
    let a: f64 = alpha.iter().sum();
    let mut lp = ln_gamma(a) + ln_gamma(n as f64 + 1.0) - ln_gamma(n as f64 + a);
    for (&x, &al) in counts.iter().zip(alpha) {
        let x = x as f64;
        lp += ln_gamma(x + al) - ln_gamma(al) - ln_gamma(x + 1.0);
    }
    Ok(lp)
}

/// `log G` for `G ~ Gamma(shape, 1)`, stable for small shapes.
fn log_gamma_draw<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    if shape >= 1.0 {
        Gamma::new(shape, 1.0).expect("positive shape").sample(rng).ln()
    } else {
        let g = Gamma::new(shape + 1.0, 1.0).expect("positive shape").sample(rng).ln();
        let u: f64 = rng.random::<f64>();
        g + u.max(f64::MIN_POSITIVE).ln() / shape
    }
}

/// One Dirichlet-Multinomial draw, summing to `total` exactly.
pub fn sample_dirichlet_multinomial<R: Rng + ?Sized>(total: u64, alpha: &[f64], rng: &mut R) -> Result<Vec<u64>> {
    check_alpha(alpha)?;
    let mut out = vec![0u64; alpha.len()];
    if total == 0 {
        return Ok(out);
    }
    let logs: Vec<f64> = alpha.iter().map(|&a| log_gamma_draw(a, rng)).collect();
    let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logs.iter().map(|l| (l - m).exp()).collect();
    let mut mass: f64 = weights.iter().sum();
    let mut left = total;
    let last = alpha.len() - 1;
    for (k, w) in weights.iter().enumerate() {
        if left == 0 {
            break;
        }
        if k == last {
            out[k] = left;
            break;
        }
        let p = (w / mass).clamp(0.0, 1.0);
        let x = Binomial::new(left, p).map_err(|e| Error::Numerical(e.to_string()))?.sample(rng);
        out[k] = x;
        left -= x;
        mass -= w;
        if mass <= 0.0 {
            out[k] += left;
            left = 0;
        }
    }
    Ok(out)
}

/// Posterior predictive deaths by age and week, one matrix per draw.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveDraws {
    pub draws: Vec<Array2<u64>>,
}

impl PredictiveDraws {
    pub fn n_draws(&self) -> usize {
        self.draws.len()
    }

    /// Across-draw mean, the rescaled expected deaths.
    pub fn mean(&self) -> Array2<f64> {
        let shape = self.draws.first().map_or((0, 0), |d| d.dim());
        let mut acc = Array2::<f64>::zeros(shape);
        for d in &self.draws {
            acc.zip_mut_with(d, |a, &x| *a += x as f64);
        }
        acc / self.draws.len().max(1) as f64
    }
}

/// Rescales each draw of `ages x weeks` concentrations to the calibration
/// totals. Draw `i` uses ChaCha stream `i` under `seed`.
pub fn predictive_rescale(concentrations: &[Array2<f64>], totals: &[u64], seed: u64) -> Result<PredictiveDraws> {
    for c in concentrations {
        if c.ncols() != totals.len() {
            return validation(format!("concentrations cover {} weeks, calibration has {}", c.ncols(), totals.len()));
        }
    }
    let draws = concentrations
        .par_iter()
        .enumerate()
        .map(|(i, alpha)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut out = Array2::zeros(alpha.dim());
            for (w, &t) in totals.iter().enumerate() {
                let col: Vec<f64> = alpha.column(w).to_vec();
                let x = sample_dirichlet_multinomial(t, &col, &mut rng)?;
                out.column_mut(w).iter_mut().zip(x).for_each(|(o, v)| *o = v);
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PredictiveDraws { draws })
}

/// Concentrations of up to `per_chain` evenly spaced retained draws of each chain.
pub fn concentration_draws(model: &MortalityModel, draws: &PosteriorDraws, per_chain: usize) -> Result<Vec<Array2<f64>>> {
    if per_chain == 0 {
        return validation("need at least one draw per chain");
    }
    let n = draws.n_draws();
    let take = per_chain.min(n);
    let picks: Vec<(usize, usize)> =
        (0..draws.n_chains()).flat_map(|c| (0..take).map(move |k| (c, k * n / take))).collect();
    picks
        .par_iter()
        .map(|&(c, i)| {
            let x: Vec<f64> = draws.raw.slice(ndarray::s![c, i, ..]).to_vec();
            model.age_concentrations(&x)
        })
        .collect()
}

/// Cumulative deaths over all weeks in the given ages divided by their population, per draw.
pub fn mortality_rate(d_star: &PredictiveDraws, ages: &[usize], population: &[f64]) -> Result<Vec<f64>> {
    if ages.is_empty() {
        return validation("age band is empty");
    }
    if let Some(a) = ages.iter().find(|&&a| a >= population.len()) {
        return validation(format!("age {a} has no population entry"));
    }
    if let Some(p) = ages.iter().map(|&a| population[a]).find(|p| !(*p > 0.0)) {
        return validation(format!("population counts must be positive, got {p}"));
    }
    let pop: f64 = ages.iter().map(|&a| population[a]).sum();
    d_star
        .draws
        .iter()
        .map(|d| {
            if let Some(a) = ages.iter().find(|&&a| a >= d.nrows()) {
                return validation(format!("age {a} lies outside the predictive draws"));
            }
            Ok(ages.iter().map(|&a| d.row(a).iter().sum::<u64>() as f64).sum::<f64>() / pop)
        })
        .collect()
}
