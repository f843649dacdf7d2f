use std::path::{Path, PathBuf};

use bsgp_core::meta::GammaConvention;
use bsgp_core::priors::{Hyperpriors, PriorKind};
use bsgp_core::simulation::{MethodSpec, SimulationSettings};
use bsgp_hmc::SamplerConfig;
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// Everything a subcommand needs. Relative paths are resolved against the
/// directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub out: PathBuf,
    pub state: Option<String>,
    pub data: DataConfig,
    pub prior: PriorConfig,
    pub mcmc: McmcConfig,
    pub fit: FitConfig,
    pub simulate: SimulateConfig,
    pub benchmark: BenchmarkConfig,
    pub meta: MetaConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            out: PathBuf::from("out"),
            state: None,
            data: DataConfig::default(),
            prior: PriorConfig::default(),
            mcmc: McmcConfig::default(),
            fit: FitConfig::default(),
            simulate: SimulateConfig::default(),
            benchmark: BenchmarkConfig::default(),
            meta: MetaConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub cdc: Option<PathBuf>,
    pub jhu: Option<PathBuf>,
    pub vaccination: Option<PathBuf>,
    pub lattice: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    pub kind: String,
    /// Knots over the age axis (surface rows).
    pub knots_rows: usize,
    /// Knots over the week axis (surface columns).
    pub knots_cols: usize,
    pub degree: usize,
    pub lengthscale_shape: f64,
    pub lengthscale_scale: f64,
    pub zeta_scale: f64,
    pub tau_scale: f64,
    pub sum_to_zero_sd: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        let h = Hyperpriors::default();
        Self {
            kind: "projected-gp".into(),
            knots_rows: 12,
            knots_cols: 10,
            degree: 3,
            lengthscale_shape: h.lengthscale_shape,
            lengthscale_scale: h.lengthscale_scale,
            zeta_scale: h.zeta_scale,
            tau_scale: h.tau_scale,
            sum_to_zero_sd: h.sum_to_zero_sd,
        }
    }
}

impl PriorConfig {
    pub fn hyperpriors(&self) -> Hyperpriors {
        Hyperpriors {
            lengthscale_shape: self.lengthscale_shape,
            lengthscale_scale: self.lengthscale_scale,
            zeta_scale: self.zeta_scale,
            tau_scale: self.tau_scale,
            sum_to_zero_sd: self.sum_to_zero_sd,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmcConfig {
    pub chains: usize,
    pub iters: usize,
    pub warmup: usize,
    pub seed: u64,
    pub max_leapfrog: usize,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self { chains: 4, iters: 1000, warmup: 500, seed: 1, max_leapfrog: 256 }
    }
}

impl McmcConfig {
    pub fn sampler(&self) -> SamplerConfig {
        SamplerConfig {
            chains: self.chains,
            iterations: self.iters,
            warmup: self.warmup,
            seed: self.seed,
            max_leapfrog: self.max_leapfrog,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    /// Band start ages; the eleven CDC bands when absent.
    pub band_starts: Option<Vec<usize>>,
    pub draws_per_chain: usize,
    pub sd_factor: f64,
    pub nu_prior_scale: f64,
    pub eta: Option<f64>,
    /// Age groups reported by `predict`, as `lo-hi` or `lo+`.
    pub groups: Vec<String>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            band_starts: None,
            draws_per_chain: 500,
            sd_factor: 1.0,
            nu_prior_scale: 1.0,
            eta: None,
            groups: vec!["0-17".into(), "18-64".into(), "65+".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub grid_size: usize,
    pub lengthscale: f64,
    pub zeta: f64,
    pub nu: f64,
    pub train_fraction: f64,
    /// `kind` or `kind:knots`.
    pub methods: Vec<String>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        let s = SimulationSettings::default();
        Self {
            grid_size: s.grid_size,
            lengthscale: s.lengthscale,
            zeta: s.zeta,
            nu: s.nu,
            train_fraction: s.train_fraction,
            methods: vec!["projected-gp:10".into(), "gp2d".into(), "bsplines:30".into(), "psplines:10".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub n_train: usize,
    pub n_test: Option<usize>,
    pub methods: Vec<String>,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self { n_train: 2000, n_test: None, methods: vec!["bsplines:125".into(), "psplines:125".into(), "projected-gp:125".into()] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetaConfig {
    pub states: Vec<String>,
    /// Directory holding the `fit` outputs; `out` when absent.
    pub fit_dir: Option<PathBuf>,
    /// Resurgence search starts at the first model week on or after this date.
    pub anchor: Option<NaiveDate>,
    pub gamma_convention: String,
    /// Counterfactual 18-64 coverage; the highest observed coverage when absent.
    pub scenario_rate: Option<f64>,
}

impl Default for MetaConfig {
    fn default() -> Self {
        Self { states: vec![], fit_dir: None, anchor: None, gamma_convention: "shape-rate".into(), scenario_rate: None }
    }
}

impl MetaConfig {
    pub fn convention(&self) -> CliResult<GammaConvention> {
        Ok(GammaConvention::parse(&self.gamma_convention)?)
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub state: Option<String>,
    pub prior: Option<String>,
    pub knots_age: Option<usize>,
    pub knots_week: Option<usize>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Input(format!("config: {e}")))
    }

    /// Reads `path` (defaults when `None`), applies `overrides` and resolves paths.
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> CliResult<Resolved> {
        let (mut cfg, base) = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Input(format!("cannot read config {}: {e}", p.display())))?;
                (Self::from_toml(&text)?, p.parent().map(Path::to_path_buf).unwrap_or_default())
            }
            None => (Self::default(), PathBuf::new()),
        };
        cfg.apply(overrides);
        cfg.validate()?;
        let hash = cfg.hash();
        let out = cfg.out.clone();
        cfg.resolve_paths(&base);
        if overrides.out.is_some() {
            cfg.out = out;
        }
        Ok(Resolved { config: cfg, hash })
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.mcmc.seed = s;
        }
        if let Some(p) = &o.out {
            self.out = p.clone();
        }
        if let Some(s) = &o.state {
            self.state = Some(s.clone());
        }
        if let Some(k) = o.knots_age {
            self.prior.knots_rows = k;
        }
        if let Some(k) = o.knots_week {
            self.prior.knots_cols = k;
        }
        if let Some(p) = &o.prior {
            self.prior.kind = p.clone();
            let method = if p == "gp2d" { p.clone() } else { format!("{p}:{}", self.prior.knots_rows) };
            self.simulate.methods = vec![method.clone()];
            self.benchmark.methods = vec![method];
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        PriorKind::parse(&self.prior.kind)?;
        if self.prior.knots_rows < 2 || self.prior.knots_cols < 2 {
            return Err(CliError::Input("knot counts must be at least 2 per axis".into()));
        }
        self.mcmc.sampler().validate().map_err(|e| CliError::Input(e.to_string()))?;
        if self.fit.draws_per_chain == 0 {
            return Err(CliError::Input("fit.draws_per_chain must be positive".into()));
        }
        for m in self.simulate.methods.iter().chain(&self.benchmark.methods) {
            parse_method(m)?;
        }
        self.meta.convention()?;
        Ok(())
    }

    /// SHA-256 of the effective configuration, before path resolution.
    pub fn hash(&self) -> String {
        let text = toml::to_string(self).expect("config serialises");
        Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.out);
        for p in [&mut self.data.cdc, &mut self.data.jhu, &mut self.data.vaccination, &mut self.data.lattice, &mut self.meta.fit_dir]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
    }

    pub fn simulation_settings(&self) -> SimulationSettings {
        SimulationSettings {
            grid_size: self.simulate.grid_size,
            lengthscale: self.simulate.lengthscale,
            zeta: self.simulate.zeta,
            nu: self.simulate.nu,
            train_fraction: self.simulate.train_fraction,
            degree: self.prior.degree,
        }
    }
}

/// A validated configuration together with its hash.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: RunConfig,
    pub hash: String,
}

/// Parses `kind` or `kind:knots`.
pub fn parse_method(s: &str) -> CliResult<MethodSpec> {
    let (kind, knots) = match s.split_once(':') {
        Some((k, n)) => (k, Some(n.parse::<usize>().map_err(|_| CliError::Input(format!("bad knot count in method '{s}'")))?)),
        None => (s, None),
    };
    Ok(MethodSpec::new(PriorKind::parse(kind)?, knots)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::default();
        let text = toml::to_string(&c).unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), c);
        assert_eq!((c.prior.knots_rows, c.prior.knots_cols), (12, 10));
    }

    #[test]
    fn flags_win() {
        let mut c = RunConfig::from_toml("[mcmc]\nseed = 5\n[prior]\nknots_rows = 8\n").unwrap();
        c.apply(&Overrides { seed: Some(9), knots_age: Some(6), ..Default::default() });
        assert_eq!((c.mcmc.seed, c.prior.knots_rows, c.prior.knots_cols), (9, 6, 10));
        c.apply(&Overrides { prior: Some("bsplines".into()), ..Default::default() });
        assert_eq!(c.simulate.methods, vec!["bsplines:6".to_string()]);
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.mcmc.seed = 2;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(RunConfig::from_toml("[mcmc]\nsteps = 3\n").is_err());
        let mut c = RunConfig::default();
        c.prior.knots_cols = 1;
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.prior.kind = "splines".into();
        assert!(c.validate().is_err());
        assert!(parse_method("gp2d:4").is_err());
        assert_eq!(parse_method("bsplines:30").unwrap().knots, Some(30));
    }
}
