use bsgp_hmc::{DensityError, LogDensity};
use ndarray::{Array2, ArrayView2};
use statrs::function::gamma::ln_gamma;

use super::grid::{composition_from_surface, AgeGrid};
use crate::data::{estimate_eta, retrievable_totals, CensoredSeries};
use crate::error::{validation, Error, Result};
use crate::likelihood::{censored_block_loglik_grad, negbin_logpmf_grad};
use crate::priors::SurfacePrior;

const LN_2: f64 = std::f64::consts::LN_2;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, PartialEq)]
pub struct MortalityConfig {
    /// Multiplies `2 eta` in the sd `T_w / (2 eta)` of the weekly-total prior.
    pub sd_factor: f64,
    /// Scale of the half-normal prior on `nu^(-1/2)`.
    pub nu_prior_scale: f64,
    /// Overrides the estimate of `eta` from the retrievable totals.
    pub eta: Option<f64>,
}

impl Default for MortalityConfig {
    fn default() -> Self {
        Self { sd_factor: 1.0, nu_prior_scale: 1.0, eta: None }
    }
}

/// Constrained view of a raw parameter vector.
#[derive(Debug, Clone)]
pub struct MortalityParams {
    pub lambda: Vec<f64>,
    pub nu: f64,
    pub hypers: Vec<f64>,
    pub surface: Array2<f64>,
}

/// Log posterior split into its parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorTerms {
    pub likelihood: f64,
    pub lambda_prior: f64,
    pub nu_prior: f64,
    pub surface_prior: f64,
}

impl PosteriorTerms {
    pub fn total(&self) -> f64 {
        self.likelihood + self.lambda_prior + self.nu_prior + self.surface_prior
    }
}

/// Age-by-week composition model for one state.
///
/// Raw layout: `x[0..W]` with `lambda_w = T_w exp(x_w)`, then `log s` with
/// `nu = s^-2`, then the surface prior's parameters.
#[derive(Debug, Clone)]
pub struct MortalityModel {
    grid: AgeGrid,
    prior: SurfacePrior,
    series: Vec<CensoredSeries>,
    prior_mean: Vec<f64>,
    eta: f64,
    lambda_shape: f64,
    config: MortalityConfig,
}

/// Weekly prior means from retrievable totals: gaps are interpolated
/// linearly, the ends carried flat, and everything floored at 1.
pub fn prior_weekly_totals(series: &[CensoredSeries]) -> Result<Vec<f64>> {
    let totals = retrievable_totals(series);
    let known: Vec<(usize, f64)> = totals.iter().enumerate().filter_map(|(w, t)| t.map(|t| (w, t as f64))).collect();
    if known.is_empty() {
        return Err(Error::Data("no week has retrievable deaths in any band".into()));
    }
    let out = (0..totals.len())
        .map(|w| {
            let after = known.iter().position(|&(k, _)| k >= w);
            let v = match after {
                Some(i) if known[i].0 == w || i == 0 => known[i].1,
                Some(i) => {
                    let (w0, t0) = known[i - 1];
                    let (w1, t1) = known[i];
                    t0 + (t1 - t0) * (w - w0) as f64 / (w1 - w0) as f64
                }
                None => known[known.len() - 1].1,
            };
            v.max(1.0)
        })
        .collect();
    Ok(out)
}

impl MortalityModel {
    /// `series` must hold one entry per band of `grid`, in band order.
    pub fn new(grid: AgeGrid, prior: SurfacePrior, series: Vec<CensoredSeries>, config: MortalityConfig) -> Result<Self> {
        let w = grid.n_weeks();
        if prior.surface_shape() != (grid.n_ages(), w) {
            return validation(format!("surface prior is {:?}, grid is {}x{w}", prior.surface_shape(), grid.n_ages()));
        }
        if series.len() != grid.bands().len() {
            return validation(format!("{} band series for {} bands", series.len(), grid.bands().len()));
        }
        for (s, band) in series.iter().zip(grid.bands()) {
            if s.band != band.label {
                return validation(format!("series for band {} given where band {} was expected", s.band, band.label));
            }
            check_partition(s, w)?;
        }
        if !(config.sd_factor > 0.0 && config.nu_prior_scale > 0.0) {
            return validation("sd_factor and nu_prior_scale must be positive");
        }
        let prior_mean = prior_weekly_totals(&series)?;
        let eta = match config.eta {
            Some(e) if e > 0.0 => e,
            Some(e) => return validation(format!("eta must be positive, got {e}")),
            None => estimate_eta(&prior_mean)?,
        };
        let lambda_shape = (2.0 * eta * config.sd_factor).powi(2);
        Ok(Self { grid, prior, series, prior_mean, eta, lambda_shape, config })
    }

    pub fn grid(&self) -> &AgeGrid {
        &self.grid
    }

    pub fn prior(&self) -> &SurfacePrior {
        &self.prior
    }

    pub fn series(&self) -> &[CensoredSeries] {
        &self.series
    }

    pub fn config(&self) -> &MortalityConfig {
        &self.config
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Prior means `T_w` of the weekly totals.
    pub fn prior_mean(&self) -> &[f64] {
        &self.prior_mean
    }

    fn n_weeks(&self) -> usize {
        self.grid.n_weeks()
    }

    fn surface_raw<'a>(&self, raw: &'a [f64]) -> &'a [f64] {
        &raw[self.n_weeks() + 1..]
    }

    fn check_len(&self, raw: &[f64]) -> Result<()> {
        if raw.len() != LogDensity::dim(self) {
            return validation(format!("mortality model expects {} parameters, got {}", LogDensity::dim(self), raw.len()));
        }
        Ok(())
    }

    pub fn params(&self, raw: &[f64]) -> Result<MortalityParams> {
        self.check_len(raw)?;
        let w = self.n_weeks();
        let lambda = (0..w).map(|i| self.prior_mean[i] * raw[i].exp()).collect();
        let nu = (-2.0 * raw[w]).exp();
        let s = self.surface_raw(raw);
        let (_, surface) = self.prior.logprior_and_surface(s)?;
        Ok(MortalityParams { lambda, nu, hypers: self.prior.hyperparameters(s), surface })
    }

    /// Expected deaths `mu[a, w]` by single year of age.
    pub fn expected_age_deaths(&self, raw: &[f64]) -> Result<Array2<f64>> {
        let p = self.params(raw)?;
        let mut mu = composition_from_surface(p.surface.view())?;
        for (mut col, l) in mu.columns_mut().into_iter().zip(&p.lambda) {
            col *= *l;
        }
        Ok(mu)
    }

    /// Dirichlet-Multinomial concentrations `mu[a, w] / nu`.
    pub fn age_concentrations(&self, raw: &[f64]) -> Result<Array2<f64>> {
        let nu = (-2.0 * raw[self.n_weeks()]).exp();
        Ok(self.expected_age_deaths(raw)? / nu)
    }

    pub fn expected_band_deaths(&self, raw: &[f64]) -> Result<Array2<f64>> {
        Ok(self.grid.aggregate(self.expected_age_deaths(raw)?.view()))
    }

    /// Observation log likelihood of band expected deaths `mu` (bands x weeks),
    /// with adjoints written to `mu_bar` and returned for `nu`.
    fn likelihood(&self, mu: ArrayView2<f64>, nu: f64, mut mu_bar: Option<&mut Array2<f64>>) -> Result<(f64, f64)> {
        let theta = nu / (1.0 + nu);
        let dtheta_dnu = 1.0 / ((1.0 + nu) * (1.0 + nu));
        let (mut lp, mut nu_bar) = (0.0, 0.0);
        for (b, s) in self.series.iter().enumerate() {
            for &(w, d) in &s.retrievable {
                let m = mu[[b, w - 1]];
                let (l, da, dt) = negbin_logpmf_grad(d, m / nu, theta)?;
                lp += l;
                nu_bar += -da * m / (nu * nu) + dt * dtheta_dnu;
                if let Some(g) = mu_bar.as_deref_mut() {
                    g[[b, w - 1]] += da / nu;
                }
            }
            if let Some(bound) = &s.bound {
                let m: f64 = s.nonretrievable.iter().map(|w| mu[[b, w - 1]]).sum();
                let (l, da, dt) = censored_block_loglik_grad(bound, m / nu, theta)?;
                lp += l;
                nu_bar += -da * m / (nu * nu) + dt * dtheta_dnu;
                if let Some(g) = mu_bar.as_deref_mut() {
                    for w in &s.nonretrievable {
                        g[[b, w - 1]] += da / nu;
                    }
                }
            }
        }
        Ok((lp, nu_bar))
    }

    /// Gamma prior on each `lambda_w` plus the log-scale Jacobian; returns the
    /// value and the gradient in `x_w`.
    fn lambda_prior(&self, lambda: &[f64]) -> (f64, Vec<f64>) {
        let k = self.lambda_shape;
        let mut lp = 0.0;
        let grad = lambda
            .iter()
            .zip(&self.prior_mean)
            .map(|(&l, &t)| {
                let r = k / t;
                lp += k * r.ln() - ln_gamma(k) + k * l.ln() - r * l;
                k - r * l
            })
            .collect();
        (lp, grad)
    }

    /// Half-normal on `s = nu^(-1/2)` with the Jacobian of `u = log s`.
    fn nu_prior(&self, u: f64) -> (f64, f64) {
        let sc = self.config.nu_prior_scale;
        let s = u.exp();
        let z = s / sc;
        (LN_2 - HALF_LN_2PI - sc.ln() - 0.5 * z * z + u, 1.0 - z * z)
    }

    /// The log posterior broken into likelihood and prior parts.
    pub fn terms(&self, raw: &[f64]) -> Result<PosteriorTerms> {
        self.check_len(raw)?;
        let w = self.n_weeks();
        let fwd = self.prior.forward(self.surface_raw(raw))?;
        let lambda: Vec<f64> = (0..w).map(|i| self.prior_mean[i] * raw[i].exp()).collect();
        let nu = (-2.0 * raw[w]).exp();
        let pi = composition_from_surface(fwd.surface.view())?;
        let mu = super::grid::expected_band_deaths(&lambda, pi.view(), &self.grid)?;
        let (likelihood, _) = self.likelihood(mu.view(), nu, None)?;
        Ok(PosteriorTerms {
            likelihood,
            lambda_prior: self.lambda_prior(&lambda).0,
            nu_prior: self.nu_prior(raw[w]).0,
            surface_prior: fwd.log_density,
        })
    }

    pub fn log_posterior(&self, raw: &[f64], grad: &mut [f64]) -> Result<f64> {
        self.check_len(raw)?;
        if grad.len() != raw.len() {
            return validation("gradient buffer length differs from the parameter vector");
        }
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite parameter".into()));
        }
        let w = self.n_weeks();
        let fwd = self.prior.forward(self.surface_raw(raw))?;
        let lambda: Vec<f64> = (0..w).map(|i| self.prior_mean[i] * raw[i].exp()).collect();
        let nu = (-2.0 * raw[w]).exp();
        let pi = composition_from_surface(fwd.surface.view())?;
        let mu = super::grid::expected_band_deaths(&lambda, pi.view(), &self.grid)?;

        let mut mu_bar = Array2::zeros(mu.dim());
        let (lik, nu_bar) = self.likelihood(mu.view(), nu, Some(&mut mu_bar))?;
        let (lp_lambda, g_lambda) = self.lambda_prior(&lambda);
        let (lp_nu, g_u) = self.nu_prior(raw[w]);

        let mut f_bar = Array2::zeros(pi.dim());
        for t in 0..w {
            let mut lambda_bar = 0.0;
            let mut dot = 0.0;
            for a in 0..self.grid.n_ages() {
                let g = mu_bar[[self.grid.band_of_age(a), t]];
                let p = pi[[a, t]];
                lambda_bar += g * p;
                dot += p * g * lambda[t];
            }
            for a in 0..self.grid.n_ages() {
                let p = pi[[a, t]];
                f_bar[[a, t]] = p * (mu_bar[[self.grid.band_of_age(a), t]] * lambda[t] - dot);
            }
            grad[t] = g_lambda[t] + lambda_bar * lambda[t];
        }
        grad[w] = g_u + nu_bar * (-2.0 * nu);
        self.prior.backward(&fwd, f_bar.view(), &mut grad[w + 1..])?;
        let total = lik + lp_lambda + lp_nu + fwd.log_density;
        if !total.is_finite() {
            return Err(Error::Numerical("log posterior is not finite".into()));
        }
        Ok(total)
    }

    /// Names of the constrained quantities reported per draw.
    pub fn quantity_names(&self) -> Vec<String> {
        let mut names: Vec<String> = (1..=self.n_weeks()).map(|w| format!("lambda[{w}]")).collect();
        names.push("nu".into());
        names.extend(self.prior.hyper_names().iter().map(|h| h.to_string()));
        for band in self.grid.bands() {
            for w in 1..=self.n_weeks() {
                names.push(format!("mu[{},{w}]", band.label));
            }
        }
        names
    }

    /// Labels of the unconstrained coordinates.
    pub fn raw_names(&self) -> Vec<String> {
        let mut names: Vec<String> = (1..=self.n_weeks()).map(|w| format!("log_lambda_ratio[{w}]")).collect();
        names.push("log_inv_sqrt_nu".into());
        names.extend(self.prior.param_names());
        names
    }

    /// Index of `mu[band, week]` (0-based band, 1-based week) among the quantities.
    pub fn mu_index(&self, band: usize, week: usize) -> usize {
        self.n_weeks() + 1 + self.prior.hyper_names().len() + band * self.n_weeks() + week - 1
    }
}

fn check_partition(s: &CensoredSeries, n_weeks: usize) -> Result<()> {
    if s.n_weeks != n_weeks {
        return validation(format!("band {} has {} weeks, model has {n_weeks}", s.band, s.n_weeks));
    }
    let mut seen = vec![false; n_weeks + 1];
    let weeks = s.retrievable.iter().map(|p| p.0).chain(s.nonretrievable.iter().copied()).chain(s.missing_weeks.iter().copied());
    for w in weeks {
        if w == 0 || w > n_weeks || seen[w] {
            return validation(format!("band {}: week {w} is out of range or classified twice", s.band));
        }
        seen[w] = true;
    }
    if seen[1..].iter().any(|s| !s) {
        return validation(format!("band {}: weeks are not fully partitioned", s.band));
    }
    if s.bound.is_some() == s.nonretrievable.is_empty() {
        return validation(format!("band {}: censored bound and non-retrievable weeks disagree", s.band));
    }
    Ok(())
}

impl LogDensity for MortalityModel {
    fn dim(&self) -> usize {
        self.n_weeks() + 1 + self.prior.dim()
    }

    fn logp_and_grad(&self, x: &[f64], grad: &mut [f64]) -> std::result::Result<f64, DensityError> {
        self.log_posterior(x, grad).map_err(DensityError::from)
    }

    fn param_names(&self) -> Vec<String> {
        self.quantity_names()
    }

    fn constrain(&self, x: &[f64]) -> Vec<f64> {
        let Ok(p) = self.params(x) else {
            return vec![f64::NAN; self.quantity_names().len()];
        };
        let mu = match composition_from_surface(p.surface.view())
            .and_then(|pi| super::grid::expected_band_deaths(&p.lambda, pi.view(), &self.grid))
        {
            Ok(mu) => mu,
            Err(_) => return vec![f64::NAN; self.quantity_names().len()],
        };
        let mut out = p.lambda;
        out.push(p.nu);
        out.extend(p.hypers);
        out.extend(mu.iter());
        out
    }
}
