//! Relative resurgence deaths, the vaccination meta-regression and counterfactual projection.

use bsgp_hmc::{diagnostics::quantile, DensityError, LogDensity, PosteriorDraws};
use chrono::NaiveDate;
use statrs::function::gamma::{digamma, ln_gamma};

use crate::data::{AgeClass, VaccinationSeries};
use crate::error::{validation, Error, Result};
use crate::mortality::PredictiveDraws;

const LN_2_OVER_PI: f64 = -0.451_582_705_289_454_9;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;
/// Prior variance of every fixed effect.
pub const FIXED_EFFECT_VARIANCE: f64 = 0.5;

/// Relative deaths of one state and age class over the resurgence weeks.
#[derive(Debug, Clone, PartialEq)]
pub struct RelativeDeaths {
    pub class: AgeClass,
    /// 0-based index of the first resurgence week.
    pub start: usize,
    /// Maximum of the mean trajectory before `start`.
    pub max_pre: f64,
    /// `r` computed from the mean trajectory, one per resurgence week.
    pub mean: Vec<f64>,
    /// `r` per draw, each divided by the same `max_pre`.
    pub draws: Vec<Vec<f64>>,
}

/// Weekly deaths summed over the ages of `class`, one trajectory per draw.
pub fn class_trajectories(d_star: &PredictiveDraws, class: AgeClass) -> Result<Vec<Vec<f64>>> {
    let ages = class.ages();
    d_star
        .draws
        .iter()
        .map(|d| {
            if *ages.end() >= d.nrows() {
                return validation(format!("draws cover {} ages, class {} needs {}", d.nrows(), class.label(), ages.end() + 1));
            }
            Ok((0..d.ncols()).map(|w| ages.clone().map(|a| d[[a, w]] as f64).sum()).collect())
        })
        .collect()
}

/// Divides each trajectory from `start` onwards by the pre-resurgence maximum
/// of the across-draw mean trajectory.
pub fn relative_deaths(trajectories: &[Vec<f64>], class: AgeClass, start: usize) -> Result<RelativeDeaths> {
    let Some(first) = trajectories.first() else {
        return validation("no trajectories given");
    };
    let n = first.len();
    if trajectories.iter().any(|t| t.len() != n) {
        return validation("trajectories differ in length");
    }
    if start == 0 || start >= n {
        return validation(format!("resurgence start {start} leaves no pre-resurgence or resurgence weeks in {n}"));
    }
    let k = trajectories.len() as f64;
    let mean: Vec<f64> = (0..n).map(|w| trajectories.iter().map(|t| t[w]).sum::<f64>() / k).collect();
    let max_pre = mean[..start].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max_pre > 0.0) {
        return validation(format!("pre-resurgence maximum for {} is {max_pre}", class.label()));
    }
    Ok(RelativeDeaths {
        class,
        start,
        max_pre,
        mean: mean[start..].iter().map(|m| m / max_pre).collect(),
        draws: trajectories.iter().map(|t| t[start..].iter().map(|m| m / max_pre).collect()).collect(),
    })
}

/// Coverage 14 days before the resurgence start.
pub fn pre_resurgence_rate(series: &VaccinationSeries, start: NaiveDate) -> Result<f64> {
    let date = start - chrono::Duration::days(14);
    series
        .rate_on(date)
        .ok_or_else(|| Error::Data(format!("no {} vaccination rate for {} on {date}", series.class.label(), series.state)))
}

/// How the second Gamma argument `kappa^2` is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GammaConvention {
    /// `kappa^2` is the rate; `E[r] = xi / kappa^2`.
    #[default]
    ShapeRate,
    /// `kappa^2` is the scale; `E[r] = xi kappa^2`.
    ShapeScale,
}

impl GammaConvention {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "shape-rate" => Ok(Self::ShapeRate),
            "shape-scale" => Ok(Self::ShapeScale),
            _ => validation(format!("unknown gamma convention '{s}' (expected shape-rate or shape-scale)")),
        }
    }

    /// The Gamma rate for a given `kappa`.
    fn rate(&self, kappa: f64) -> f64 {
        match self {
            Self::ShapeRate => kappa * kappa,
            Self::ShapeScale => 1.0 / (kappa * kappa),
        }
    }

    /// `d log(rate) / d log(kappa)`.
    fn rate_exponent(&self) -> f64 {
        match self {
            Self::ShapeRate => 2.0,
            Self::ShapeScale => -2.0,
        }
    }
}

/// One relative-deaths value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetaObservation {
    pub state: usize,
    /// 0 for 18-64, 1 for 65+.
    pub class: usize,
    /// Weeks since the resurgence start, 0-based.
    pub offset: usize,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetaData {
    pub states: Vec<String>,
    /// Pre-resurgence coverage `[18-64, 65+]` per state.
    pub vaccination: Vec<[f64; 2]>,
    pub observations: Vec<MetaObservation>,
    /// Pre-resurgence maxima `[18-64, 65+]` per state, for projections.
    pub max_pre: Vec<[f64; 2]>,
}

impl MetaData {
    /// Builds observations from the mean relative deaths of each state and class.
    pub fn from_relative(states: Vec<String>, vaccination: Vec<[f64; 2]>, relative: &[[RelativeDeaths; 2]]) -> Result<Self> {
        if relative.len() != states.len() {
            return validation("one pair of relative-death series is needed per state");
        }
        let mut observations = Vec::new();
        for (m, pair) in relative.iter().enumerate() {
            for (c, rd) in pair.iter().enumerate() {
                for (k, &r) in rd.mean.iter().enumerate() {
                    observations.push(MetaObservation { state: m, class: c, offset: k, r });
                }
            }
        }
        let max_pre = relative.iter().map(|p| [p[0].max_pre, p[1].max_pre]).collect();
        let data = Self { states, vaccination, observations, max_pre };
        data.validate()?;
        Ok(data)
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.states.len();
        if m == 0 || self.vaccination.len() != m || self.max_pre.len() != m {
            return validation("states, vaccination rates and maxima must align and be non-empty");
        }
        if self.vaccination.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
            return validation("vaccination rates must lie in [0, 1]");
        }
        for o in &self.observations {
            if o.state >= m || o.class > 1 {
                return validation(format!("observation refers to state {} class {}", o.state, o.class));
            }
            if !(o.r > 0.0 && o.r.is_finite()) {
                return validation(format!("relative deaths must be positive, got {}", o.r));
            }
        }
        Ok(())
    }

    /// Number of resurgence weeks observed for each state and class.
    pub fn weeks(&self, state: usize, class: usize) -> usize {
        self.observations.iter().filter(|o| o.state == state && o.class == class).map(|o| o.offset + 1).max().unwrap_or(0)
    }
}

/// Named view of a raw meta-regression vector.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaParams {
    pub chi_base: [f64; 2],
    pub chi_vacc: f64,
    pub chi_cross: [f64; 2],
    pub psi_base: [f64; 2],
    pub psi_vacc: f64,
    pub psi_cross: [f64; 2],
    pub sigma_chi: [f64; 2],
    pub kappa: Vec<f64>,
    pub chi_state: Vec<[f64; 2]>,
}

impl MetaParams {
    /// `(chi, psi)` of state `m` given its coverage `v`.
    pub fn linear_terms(&self, m: usize, v: [f64; 2]) -> ([f64; 2], [f64; 2]) {
        let chi = [
            self.chi_base[0] + self.chi_state[m][0] + self.chi_vacc * v[0] + self.chi_cross[0] * v[1],
            self.chi_base[1] + self.chi_state[m][1] + self.chi_cross[1] * v[0] + self.chi_vacc * v[1],
        ];
        let psi = [
            self.psi_base[0] + self.psi_vacc * v[0] + self.psi_cross[0] * v[1],
            self.psi_base[1] + self.psi_cross[1] * v[0] + self.psi_vacc * v[1],
        ];
        (chi, psi)
    }
}

const FIXED: [&str; 10] = [
    "chi_base[18-64]",
    "chi_base[65+]",
    "chi_vacc",
    "chi_vacc_cross[18-64]",
    "chi_vacc_cross[65+]",
    "psi_base[18-64]",
    "psi_base[65+]",
    "psi_vacc",
    "psi_vacc_cross[18-64]",
    "psi_vacc_cross[65+]",
];

/// Random-effects Gamma meta-regression.
///
/// Raw layout: the ten fixed effects in [`MetaModel::fixed_names`] order, `log sigma_chi` per
/// class, `log kappa` per state, then standardised state effects `z[m, c]`
/// with `chi_state = sigma_chi[c] z[m, c]`.
#[derive(Debug, Clone)]
pub struct MetaModel {
    data: MetaData,
    convention: GammaConvention,
    fixed_sd: f64,
}

impl MetaModel {
    pub fn new(data: MetaData, convention: GammaConvention) -> Result<Self> {
        data.validate()?;
        Ok(Self { data, convention, fixed_sd: FIXED_EFFECT_VARIANCE.sqrt() })
    }

    /// Sd of the normal prior on the ten fixed effects (`sqrt(0.5)` by default).
    pub fn with_fixed_sd(mut self, sd: f64) -> Result<Self> {
        if !(sd > 0.0 && sd.is_finite()) {
            return validation(format!("fixed-effect prior sd must be positive, got {sd}"));
        }
        self.fixed_sd = sd;
        Ok(self)
    }

    pub fn data(&self) -> &MetaData {
        &self.data
    }

    pub fn convention(&self) -> GammaConvention {
        self.convention
    }

    pub fn fixed_names() -> &'static [&'static str] {
        &FIXED
    }

    fn n_states(&self) -> usize {
        self.data.states.len()
    }

    pub fn params(&self, x: &[f64]) -> Result<MetaParams> {
        if x.len() != LogDensity::dim(self) {
            return validation(format!("meta model expects {} parameters, got {}", LogDensity::dim(self), x.len()));
        }
        let m = self.n_states();
        let sigma = [x[10].exp(), x[11].exp()];
        let kappa = x[12..12 + m].iter().map(|u| u.exp()).collect();
        let z = &x[12 + m..];
        Ok(MetaParams {
            chi_base: [x[0], x[1]],
            chi_vacc: x[2],
            chi_cross: [x[3], x[4]],
            psi_base: [x[5], x[6]],
            psi_vacc: x[7],
            psi_cross: [x[8], x[9]],
            sigma_chi: sigma,
            kappa,
            chi_state: (0..m).map(|s| [sigma[0] * z[2 * s], sigma[1] * z[2 * s + 1]]).collect(),
        })
    }

    /// Expected relative deaths `E[r]` under the given coverage of state `m`.
    pub fn expected_relative(&self, p: &MetaParams, m: usize, class: usize, offset: usize, v: [f64; 2]) -> f64 {
        let (chi, psi) = p.linear_terms(m, v);
        let xi = (chi[class] + psi[class] * offset as f64).exp();
        xi / self.convention.rate(p.kappa[m])
    }

    pub fn meta_loglik(&self, x: &[f64], grad: &mut [f64]) -> Result<f64> {
        let p = self.params(x)?;
        if grad.len() != x.len() {
            return validation("gradient buffer length differs from the parameter vector");
        }
        grad.fill(0.0);
        let m = self.n_states();
        let mut lp = 0.0;
        // fixed effects
        let var = self.fixed_sd * self.fixed_sd;
        for i in 0..10 {
            lp += -0.5 * x[i] * x[i] / var - self.fixed_sd.ln() - HALF_LN_2PI;
            grad[i] = -x[i] / var;
        }
        // half-Cauchy(0, 1) on sigma and kappa, sampled on the log scale
        for i in 10..12 + m {
            let s = x[i].exp();
            lp += LN_2_OVER_PI - (s * s).ln_1p() + x[i];
            grad[i] = 1.0 - 2.0 * s * s / (1.0 + s * s);
        }
        for i in 12 + m..x.len() {
            lp += -0.5 * x[i] * x[i] - HALF_LN_2PI;
            grad[i] = -x[i];
        }

        let zo = 12 + m;
        for o in &self.data.observations {
            let v = self.data.vaccination[o.state];
            let (chi, psi) = p.linear_terms(o.state, v);
            let t = o.offset as f64;
            let c = o.class;
            let xi = (chi[c] + psi[c] * t).exp();
            let beta = self.convention.rate(p.kappa[o.state]);
            let lr = o.r.ln();
            lp += xi * beta.ln() - ln_gamma(xi) + (xi - 1.0) * lr - beta * o.r;
            let d_eta = xi * (beta.ln() - digamma(xi) + lr);
            let d_logbeta = xi - beta * o.r;
            grad[12 + o.state] += d_logbeta * self.convention.rate_exponent();

            // chi row c: base[c] + state + vacc * v[c] + cross[c] * v[1 - c]
            grad[c] += d_eta;
            grad[2] += d_eta * v[c];
            grad[3 + c] += d_eta * v[1 - c];
            let zi = zo + 2 * o.state + c;
            grad[zi] += d_eta * p.sigma_chi[c];
            grad[10 + c] += d_eta * p.chi_state[o.state][c];
            grad[5 + c] += d_eta * t;
            grad[7] += d_eta * t * v[c];
            grad[8 + c] += d_eta * t * v[1 - c];
        }
        if !lp.is_finite() {
            return Err(Error::Numerical("meta log density is not finite".into()));
        }
        Ok(lp)
    }

    /// Names of the unconstrained coordinates.
    pub fn raw_names(&self) -> Vec<String> {
        let mut names: Vec<String> = FIXED.iter().map(|s| s.to_string()).collect();
        names.extend(["log_sigma_chi[18-64]".into(), "log_sigma_chi[65+]".into()]);
        names.extend(self.data.states.iter().map(|s| format!("log_kappa[{s}]")));
        for s in &self.data.states {
            names.push(format!("z_state[{s},18-64]"));
            names.push(format!("z_state[{s},65+]"));
        }
        names
    }
}

impl LogDensity for MetaModel {
    fn dim(&self) -> usize {
        12 + 3 * self.n_states()
    }

    fn logp_and_grad(&self, x: &[f64], grad: &mut [f64]) -> std::result::Result<f64, DensityError> {
        self.meta_loglik(x, grad).map_err(DensityError::from)
    }

    fn param_names(&self) -> Vec<String> {
        let mut names: Vec<String> = FIXED.iter().map(|s| s.to_string()).collect();
        names.extend(["sigma_chi[18-64]".into(), "sigma_chi[65+]".into()]);
        names.extend(self.data.states.iter().map(|s| format!("kappa[{s}]")));
        for s in &self.data.states {
            names.push(format!("chi_state[{s},18-64]"));
            names.push(format!("chi_state[{s},65+]"));
        }
        names
    }

    fn constrain(&self, x: &[f64]) -> Vec<f64> {
        let Ok(p) = self.params(x) else {
            return vec![f64::NAN; self.dim()];
        };
        let mut out = x[..10].to_vec();
        out.extend(p.sigma_chi);
        out.extend(&p.kappa);
        out.extend(p.chi_state.iter().flatten());
        out
    }
}

/// Median and 95% interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub median: f64,
    pub lo95: f64,
    pub hi95: f64,
}

impl Interval {
    pub fn from_draws(values: &[f64]) -> Self {
        Self { median: quantile(values, 0.5), lo95: quantile(values, 0.025), hi95: quantile(values, 0.975) }
    }
}

/// Avoided deaths for one state and class.
#[derive(Debug, Clone, PartialEq)]
pub struct CounterfactualSummary {
    pub state: String,
    pub class: AgeClass,
    pub avoided: Interval,
    pub pct: Interval,
    /// Per-draw avoided deaths.
    pub avoided_draws: Vec<f64>,
}

/// Projects deaths with every state's 18-64 coverage set to `scenario_rate`
/// and compares them with the fitted projection, draw by draw.
pub fn counterfactual_project(model: &MetaModel, draws: &PosteriorDraws, scenario_rate: f64) -> Result<Vec<CounterfactualSummary>> {
    if !(0.0..=1.0).contains(&scenario_rate) {
        return validation(format!("scenario coverage {scenario_rate} lies outside [0, 1]"));
    }
    let data = model.data();
    let params: Vec<MetaParams> = draws.raw_draws().map(|x| model.params(&x)).collect::<Result<_>>()?;
    if params.is_empty() {
        return validation("no posterior draws");
    }
    let mut out = Vec::new();
    for (m, state) in data.states.iter().enumerate() {
        let v = data.vaccination[m];
        let cf = [scenario_rate, v[1]];
        for (c, class) in AgeClass::ALL.iter().enumerate() {
            let weeks = data.weeks(m, c);
            let scale = data.max_pre[m][c];
            let mut avoided = Vec::with_capacity(params.len());
            let mut pct = Vec::with_capacity(params.len());
            for p in &params {
                let (mut obs, mut alt) = (0.0, 0.0);
                for k in 0..weeks {
                    obs += scale * model.expected_relative(p, m, c, k, v);
                    alt += scale * model.expected_relative(p, m, c, k, cf);
                }
                avoided.push(obs - alt);
                pct.push(if obs > 0.0 { 100.0 * (obs - alt) / obs } else { 0.0 });
            }
            out.push(CounterfactualSummary {
                state: state.clone(),
                class: *class,
                avoided: Interval::from_draws(&avoided),
                pct: Interval::from_draws(&pct),
                avoided_draws: avoided,
            });
        }
    }
    Ok(out)
}
