//! Negative-Binomial (shape-scale), censored-sum and Gaussian log likelihoods.

use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{validation, Result};

fn check_nb(alpha: f64, theta: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return validation(format!("Negative-Binomial shape must be positive, got {alpha}"));
    }
    if !(theta > 0.0 && theta < 1.0) {
        return validation(format!("Negative-Binomial scale must lie in (0, 1), got {theta}"));
    }
    Ok(())
}

/// Shape `alpha` and scale `theta` for mean `mu` and overdispersion `nu`.
pub fn shape_scale(mu: f64, nu: f64) -> (f64, f64) {
    (mu / nu, nu / (1.0 + nu))
}

/// `log[Γ(d+α) / (Γ(α) d!) θ^d (1-θ)^α]`.
pub fn negbin_logpmf(d: u64, alpha: f64, theta: f64) -> Result<f64> {
    check_nb(alpha, theta)?;
    Ok(logpmf_unchecked(d, alpha, theta))
}

fn logpmf_unchecked(d: u64, alpha: f64, theta: f64) -> f64 {
    let d = d as f64;
    ln_gamma(d + alpha) - ln_gamma(alpha) - ln_gamma(d + 1.0) + d * theta.ln() + alpha * (-theta).ln_1p()
}

/// Log pmf with its partial derivatives with respect to `alpha` and `theta`.
pub fn negbin_logpmf_grad(d: u64, alpha: f64, theta: f64) -> Result<(f64, f64, f64)> {
    check_nb(alpha, theta)?;
    let df = d as f64;
    let lp = logpmf_unchecked(d, alpha, theta);
    let d_alpha = digamma(df + alpha) - digamma(alpha) + (-theta).ln_1p();
    let d_theta = df / theta - alpha / (1.0 - theta);
    Ok((lp, d_alpha, d_theta))
}

/// Mean and variance implied by shape and scale.
pub fn negbin_moments(alpha: f64, theta: f64) -> (f64, f64) {
    (alpha * theta / (1.0 - theta), alpha * theta / (1.0 - theta).powi(2))
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `log P(D <= d)`, accumulated term by term in log space.
pub fn negbin_logcdf(d: u64, alpha: f64, theta: f64) -> Result<f64> {
    check_nb(alpha, theta)?;
    let mut term = logpmf_unchecked(0, alpha, theta);
    let mut acc = term;
    for k in 0..d {
        let kf = k as f64;
        term += theta.ln() + (kf + alpha).ln() - (kf + 1.0).ln();
        let (hi, lo) = if acc > term { (acc, term) } else { (term, acc) };
        acc = hi + (lo - hi).exp().ln_1p();
    }
    Ok(acc.min(0.0))
}

/// Which pattern of censoring produced a non-retrievable block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CensorScenario {
    /// Censoring strictly inside the series: the block sum is known exactly.
    ExactSum,
    /// Censoring from the first week up to an observed value.
    IntervalWithObservedEnd,
    /// Censoring that runs to the end of the series after an observed zero.
    TrailingCensored,
    /// Every cumulative value censored.
    AllCensored,
}

/// Bounds `lower <= sum <= upper` on the deaths of a non-retrievable block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CensoredSumBound {
    pub scenario: CensorScenario,
    pub lower: u64,
    pub upper: u64,
}

impl CensoredSumBound {
    pub fn exact(value: u64) -> Self {
        Self { scenario: CensorScenario::ExactSum, lower: value, upper: value }
    }

    /// Bounds implied by the first observed cumulative value `d` after a leading block.
    pub fn observed_end(d: u64) -> Self {
        Self { scenario: CensorScenario::IntervalWithObservedEnd, lower: d.saturating_sub(9), upper: d.saturating_sub(1) }
    }

    pub fn trailing() -> Self {
        Self { scenario: CensorScenario::TrailingCensored, lower: 1, upper: 9 }
    }

    pub fn all_censored() -> Self {
        Self { scenario: CensorScenario::AllCensored, lower: 0, upper: 8 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lower > self.upper {
            return validation(format!("censored bound has lower {} above upper {}", self.lower, self.upper));
        }
        if self.scenario == CensorScenario::ExactSum && self.lower != self.upper {
            return validation("an exact-sum bound must have equal lower and upper values");
        }
        Ok(())
    }
}

/// `log P(lower <= S <= upper)` for `S ~ NegBin(alpha_sum, theta)`, with
/// partial derivatives in `alpha_sum` and `theta`.
///
/// Every bound spans at most ten values, so the probability is summed
/// directly in log space rather than formed as a difference of CDFs.
pub fn censored_block_loglik_grad(bound: &CensoredSumBound, alpha_sum: f64, theta: f64) -> Result<(f64, f64, f64)> {
    bound.validate()?;
    if !(alpha_sum > 0.0) {
        return validation("non-retrievable block has no weeks (aggregated shape is not positive)");
    }
    check_nb(alpha_sum, theta)?;
    let terms: Vec<(f64, f64, f64)> =
        (bound.lower..=bound.upper).map(|k| negbin_logpmf_grad(k, alpha_sum, theta)).collect::<Result<_>>()?;
    let lps: Vec<f64> = terms.iter().map(|t| t.0).collect();
    let total = log_sum_exp(&lps);
    let (mut da, mut dt) = (0.0, 0.0);
    for (lp, a, t) in &terms {
        let w = (lp - total).exp();
        da += w * a;
        dt += w * t;
    }
    Ok((total, da, dt))
}

pub fn censored_block_loglik(bound: &CensoredSumBound, alpha_sum: f64, theta: f64) -> Result<f64> {
    censored_block_loglik_grad(bound, alpha_sum, theta).map(|t| t.0)
}

pub fn gaussian_loglik(y: f64, mean: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return validation(format!("Gaussian sd must be positive, got {sigma}"));
    }
    let z = (y - mean) / sigma;
    Ok(-0.5 * z * z - sigma.ln() - 0.918_938_533_204_672_8)
}
