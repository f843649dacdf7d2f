//! Convergence diagnostics: rank-normalised split R-hat and bulk effective
//! sample size, following the Vehtari et al. (2021) definitions.
//!
//! Every function takes draws as one slice per chain.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::{PosteriorDraws, SampleError};

fn check(chains: &[Vec<f64>]) -> Result<usize, SampleError> {
    if chains.len() < 2 {
        return Err(SampleError::InsufficientDraws(format!(
            "need at least 2 chains, got {}",
            chains.len()
        )));
    }
    let n = chains[0].len();
    if chains.iter().any(|c| c.len() != n) {
        return Err(SampleError::InsufficientDraws("chains have unequal lengths".into()));
    }
    if n < 4 {
        return Err(SampleError::InsufficientDraws(format!(
            "need at least 4 draws per chain, got {n}"
        )));
    }
    Ok(n)
}

/// Splits each chain into its first and second half, dropping the middle
/// draw of odd-length chains.
pub fn split_chains(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(2 * chains.len());
    for c in chains {
        let half = c.len() / 2;
        out.push(c[..half].to_vec());
        out.push(c[c.len() - half..].to_vec());
    }
    out
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Classic potential scale reduction on chains as given.
fn psrf(chains: &[Vec<f64>]) -> f64 {
    let n = chains[0].len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let within = chains.iter().map(|c| variance(c)).sum::<f64>() / chains.len() as f64;
    let between = n * variance(&means);
    if within == 0.0 {
        return f64::NAN;
    }
    let var_plus = (n - 1.0) / n * within + between / n;
    (var_plus / within).sqrt()
}

/// Split R-hat on the raw draw values.
pub fn split_rhat(chains: &[Vec<f64>]) -> Result<f64, SampleError> {
    check(chains)?;
    Ok(psrf(&split_chains(chains)))
}

/// Replaces draws by normal scores of their pooled fractional ranks
/// (`(r - 3/8) / (S + 1/4)`), averaging ranks over ties.
pub fn rank_normalize(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut indexed: Vec<(f64, usize, usize)> = chains
        .iter()
        .enumerate()
        .flat_map(|(c, xs)| xs.iter().enumerate().map(move |(i, &x)| (x, c, i)))
        .collect();
    indexed.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total = indexed.len() as f64;
    let normal = Normal::standard();
    let mut out: Vec<Vec<f64>> = chains.iter().map(|c| vec![0.0; c.len()]).collect();
    let mut start = 0;
    while start < indexed.len() {
        let mut end = start + 1;
        while end < indexed.len() && indexed[end].0 == indexed[start].0 {
            end += 1;
        }
        // 1-based ranks start+1 ..= end share their average
        let rank = (start + 1 + end) as f64 / 2.0;
        let z = normal.inverse_cdf((rank - 0.375) / (total + 0.25));
        for &(_, c, i) in &indexed[start..end] {
            out[c][i] = z;
        }
        start = end;
    }
    out
}

/// Rank-normalised split R-hat: the larger of the bulk and folded-tail values.
pub fn rank_normalized_split_rhat(chains: &[Vec<f64>]) -> Result<f64, SampleError> {
    check(chains)?;
    let split = split_chains(chains);
    let bulk = psrf(&rank_normalize(&split));
    let pooled: Vec<f64> = split.iter().flatten().copied().collect();
    let median = quantile(&pooled, 0.5);
    let folded: Vec<Vec<f64>> = split
        .iter()
        .map(|c| c.iter().map(|x| (x - median).abs()).collect())
        .collect();
    let tail = psrf(&rank_normalize(&folded));
    Ok(match (bulk.is_nan(), tail.is_nan()) {
        (true, true) => f64::NAN,
        (true, false) => tail,
        (false, true) => bulk,
        (false, false) => bulk.max(tail),
    })
}

fn autocovariance(x: &[f64], lag: usize) -> f64 {
    let m = mean(x);
    let n = x.len();
    x[..n - lag]
        .iter()
        .zip(&x[lag..])
        .map(|(a, b)| (a - m) * (b - m))
        .sum::<f64>()
        / n as f64
}

/// Multi-chain effective sample size with Geyer's initial monotone sequence,
/// computed on the chains exactly as given.
fn ess_of(chains: &[Vec<f64>]) -> f64 {
    let m = chains.len() as f64;
    let n = chains[0].len();
    let nf = n as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let within = chains.iter().map(|c| variance(c)).sum::<f64>() / m;
    let between_over_n = variance(&means);
    let var_plus = (nf - 1.0) / nf * within + between_over_n;
    if !(var_plus > 0.0) {
        return f64::NAN;
    }
    let rho = |lag: usize| -> f64 {
        let mean_acov = chains.iter().map(|c| autocovariance(c, lag)).sum::<f64>() / m;
        1.0 - (within - mean_acov) / var_plus
    };

    let mut rho_even = 1.0;
    let mut rho_odd = rho(1);
    let mut sum_pairs = 0.0;
    let mut prev_pair = f64::INFINITY;
    let mut t = 0;
    while t + 1 < n {
        let mut pair = rho_even + rho_odd;
        if pair < 0.0 {
            break;
        }
        if pair > prev_pair {
            pair = prev_pair;
        }
        sum_pairs += pair;
        prev_pair = pair;
        t += 2;
        if t + 1 >= n {
            break;
        }
        rho_even = rho(t);
        rho_odd = rho(t + 1);
    }
    let tau = (-1.0 + 2.0 * sum_pairs).max(1.0 / (m * nf).log10());
    m * nf / tau
}

/// Effective sample size of split chains on the raw scale.
pub fn ess(chains: &[Vec<f64>]) -> Result<f64, SampleError> {
    check(chains)?;
    Ok(ess_of(&split_chains(chains)))
}

/// Bulk effective sample size: ESS of rank-normalised split chains.
pub fn ess_bulk(chains: &[Vec<f64>]) -> Result<f64, SampleError> {
    check(chains)?;
    Ok(ess_of(&rank_normalize(&split_chains(chains))))
}

/// Linear-interpolation sample quantile (type 7).
pub fn quantile(values: &[f64], p: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Per-quantity `(bulk ESS, rank-normalised split R-hat)`.
pub fn diagnostics(draws: &PosteriorDraws) -> Result<Vec<(f64, f64)>, SampleError> {
    (0..draws.names.len())
        .map(|j| {
            let chains: Vec<Vec<f64>> = draws.quantity(j).outer_iter().map(|c| c.to_vec()).collect();
            Ok((ess_bulk(&chains)?, rank_normalized_split_rhat(&chains)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn normal_chains(n_chains: usize, n: usize, shift: f64, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n_chains)
            .map(|c| {
                (0..n)
                    .map(|_| rng.sample::<f64, _>(StandardNormal) + shift * c as f64)
                    .collect()
            })
            .collect()
    }

    #[test]
    fn iid_chains_have_unit_rhat() {
        let chains = normal_chains(4, 1000, 0.0, 3);
        let r = rank_normalized_split_rhat(&chains).unwrap();
        assert!((r - 1.0).abs() < 0.01, "rhat {r}");
        let e = ess_bulk(&chains).unwrap();
        assert!(e > 3000.0, "ess {e}");
    }

    #[test]
    fn shifted_chains_are_flagged() {
        let chains = normal_chains(4, 500, 1.0, 4);
        assert!(rank_normalized_split_rhat(&chains).unwrap() > 1.2);
        assert!(split_rhat(&chains).unwrap() > 1.2);
    }

    #[test]
    fn ar1_ess_matches_closed_form() {
        let phi = 0.9;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 5000;
        let chains: Vec<Vec<f64>> = (0..4)
            .map(|_| {
                let mut x = rng.sample::<f64, _>(StandardNormal) / (1.0_f64 - phi * phi).sqrt();
                (0..n)
                    .map(|_| {
                        x = phi * x + rng.sample::<f64, _>(StandardNormal);
                        x
                    })
                    .collect()
            })
            .collect();
        let expected = 4.0 * n as f64 * (1.0 - phi) / (1.0 + phi);
        let got = ess(&chains).unwrap();
        assert!((got / expected - 1.0).abs() < 0.3, "ess {got} vs {expected}");
        let bulk = ess_bulk(&chains).unwrap();
        assert!((bulk / expected - 1.0).abs() < 0.3, "bulk {bulk} vs {expected}");
    }

    #[test]
    fn too_few_draws_is_an_error() {
        assert!(matches!(
            ess_bulk(&[vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]]),
            Err(SampleError::InsufficientDraws(_))
        ));
        assert!(rank_normalized_split_rhat(&[vec![1.0; 10]]).is_err());
    }

    #[test]
    fn rank_normalisation_averages_ties() {
        let z = rank_normalize(&[vec![1.0, 2.0], vec![2.0, 3.0]]);
        assert_eq!(z[0][1], z[1][0]);
        assert!(z[0][0] < z[0][1] && z[0][1] < z[1][1]);
    }

    #[test]
    fn quantile_interpolates() {
        let v = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 4.0);
        assert!((quantile(&v, 0.5) - 2.5).abs() < 1e-15);
    }
}
