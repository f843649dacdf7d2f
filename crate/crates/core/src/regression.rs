//! Surface regression on a lattice: counts or Gaussian values observed on a
//! subset of cells, with a [`SurfacePrior`] on the latent surface.

use bsgp_hmc::{DensityError, LogDensity};
use ndarray::Array2;

use crate::error::{validation, Error, Result};
use crate::likelihood::{negbin_logpmf_grad, shape_scale};
use crate::priors::SurfacePrior;

const LN_2: f64 = std::f64::consts::LN_2;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observation {
    /// `y ~ NegBin(mean exp f, overdispersion nu)` with `nu^(-1/2)` half-normal.
    NegBin,
    /// `y ~ Normal(f, sigma)` with `sigma` half-normal.
    Gaussian,
}

/// A value observed at lattice cell `(row, col)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellValue {
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

/// Raw layout: `log s` (the half-normal scale parameter), then the prior's parameters.
#[derive(Debug, Clone)]
pub struct SurfaceRegression {
    prior: SurfacePrior,
    observation: Observation,
    data: Vec<CellValue>,
    report: Vec<(usize, usize)>,
}

impl SurfaceRegression {
    /// `report` lists the cells whose mean is recorded per draw.
    pub fn new(prior: SurfacePrior, observation: Observation, data: Vec<CellValue>, report: Vec<(usize, usize)>) -> Result<Self> {
        let (n, m) = prior.surface_shape();
        for &(r, c) in data.iter().map(|d| (d.row, d.col)).collect::<Vec<_>>().iter().chain(&report) {
            if r >= n || c >= m {
                return validation(format!("cell ({r}, {c}) lies outside the {n}x{m} surface"));
            }
        }
        for d in &data {
            let ok = match observation {
                Observation::NegBin => d.value >= 0.0 && d.value.fract() == 0.0,
                Observation::Gaussian => d.value.is_finite(),
            };
            if !ok {
                return validation(format!("value {} at ({}, {}) does not fit the {observation:?} model", d.value, d.row, d.col));
            }
        }
        if data.is_empty() {
            return validation("no observations");
        }
        Ok(Self { prior, observation, data, report })
    }

    pub fn prior(&self) -> &SurfacePrior {
        &self.prior
    }

    pub fn report_cells(&self) -> &[(usize, usize)] {
        &self.report
    }

    /// Mean surface (`exp f` for counts, `f` for Gaussian values).
    pub fn mean_surface(&self, raw: &[f64]) -> Result<Array2<f64>> {
        let (_, f) = self.prior.logprior_and_surface(&raw[1..])?;
        Ok(match self.observation {
            Observation::NegBin => f.mapv(f64::exp),
            Observation::Gaussian => f,
        })
    }

    pub fn log_density(&self, raw: &[f64], grad: &mut [f64]) -> Result<f64> {
        if raw.len() != LogDensity::dim(self) || grad.len() != raw.len() {
            return validation(format!("surface regression expects {} parameters", LogDensity::dim(self)));
        }
        let fwd = self.prior.forward(&raw[1..])?;
        let u = raw[0];
        let s = u.exp();
        let mut lp = LN_2 - HALF_LN_2PI - 0.5 * s * s + u;
        let mut g_u = 1.0 - s * s;
        let mut f_bar = Array2::zeros(fwd.surface.dim());
        match self.observation {
            Observation::NegBin => {
                let nu = 1.0 / (s * s);
                let (_, theta) = shape_scale(1.0, nu);
                let dtheta_dnu = 1.0 / ((1.0 + nu) * (1.0 + nu));
                let mut nu_bar = 0.0;
                for d in &self.data {
                    let mu = fwd.surface[[d.row, d.col]].exp();
                    let alpha = mu / nu;
                    let (l, da, dt) = negbin_logpmf_grad(d.value as u64, alpha, theta)?;
                    lp += l;
                    f_bar[[d.row, d.col]] += da * alpha;
                    nu_bar += -da * alpha / nu + dt * dtheta_dnu;
                }
                g_u += nu_bar * (-2.0 * nu);
            }
            Observation::Gaussian => {
                for d in &self.data {
                    let r = (d.value - fwd.surface[[d.row, d.col]]) / s;
                    lp += -0.5 * r * r - u - HALF_LN_2PI;
                    f_bar[[d.row, d.col]] += r / s;
                    g_u += r * r - 1.0;
                }
            }
        }
        grad[0] = g_u;
        self.prior.backward(&fwd, f_bar.view(), &mut grad[1..])?;
        let total = lp + fwd.log_density;
        if !total.is_finite() {
            return Err(Error::Numerical("surface regression density is not finite".into()));
        }
        Ok(total)
    }
}

impl LogDensity for SurfaceRegression {
    fn dim(&self) -> usize {
        1 + self.prior.dim()
    }

    fn logp_and_grad(&self, x: &[f64], grad: &mut [f64]) -> std::result::Result<f64, DensityError> {
        self.log_density(x, grad).map_err(DensityError::from)
    }

    fn param_names(&self) -> Vec<String> {
        let scale = match self.observation {
            Observation::NegBin => "nu",
            Observation::Gaussian => "sigma",
        };
        let mut names = vec![scale.to_string()];
        names.extend(self.prior.hyper_names().iter().map(|h| h.to_string()));
        names.extend(self.report.iter().map(|(r, c)| format!("mean[{},{}]", r + 1, c + 1)));
        names
    }

    fn constrain(&self, x: &[f64]) -> Vec<f64> {
        let s = x[0].exp();
        let mut out = vec![match self.observation {
            Observation::NegBin => 1.0 / (s * s),
            Observation::Gaussian => s,
        }];
        out.extend(self.prior.hyperparameters(&x[1..]));
        match self.mean_surface(x) {
            Ok(m) => out.extend(self.report.iter().map(|&(r, c)| m[[r, c]])),
            Err(_) => out.extend(std::iter::repeat_n(f64::NAN, self.report.len())),
        }
        out
    }
}
