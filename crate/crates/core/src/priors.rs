//! The four interchangeable priors on a latent surface `f`.
//!
//! Every variant maps an unconstrained parameter vector to a log prior density
//! and a surface, and back-propagates a surface adjoint to the parameters. The
//! latent matrix is stored row-major after the log-transformed hyperparameters.

use std::f64::consts::{LN_2, PI};

use ndarray::{Array2, ArrayView2};
use statrs::function::gamma::ln_gamma;

use crate::error::{validation, Error, Result};
use crate::kernels::{kernel_evaluations, SqExpKernel, JITTER};
use crate::linalg::{cholesky, cholesky_backward, log_det_from_cholesky, solve_lower};
use crate::splines::BasisMatrix;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PriorKind {
    Standard2DGP,
    StandardBSplines,
    BayesianPSplines,
    ProjectedGP,
}

impl PriorKind {
    pub fn label(&self) -> &'static str {
        match self {
            PriorKind::Standard2DGP => "gp2d",
            PriorKind::StandardBSplines => "bsplines",
            PriorKind::BayesianPSplines => "psplines",
            PriorKind::ProjectedGP => "projected-gp",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "gp2d" => Ok(PriorKind::Standard2DGP),
            "bsplines" => Ok(PriorKind::StandardBSplines),
            "psplines" => Ok(PriorKind::BayesianPSplines),
            "projected-gp" => Ok(PriorKind::ProjectedGP),
            other => validation(format!(
                "unknown prior '{other}' (expected projected-gp, gp2d, bsplines or psplines)"
            )),
        }
    }
}

/// Hyperprior settings. Defaults: `gamma ~ Inv-Gamma(5, 5)`, `zeta ~ half-Cauchy(0, 1)`,
/// `tau ~ half-Cauchy(0, 1)`, and a soft sum-to-zero constraint `mean(phi) ~ N(0, 0.001)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperpriors {
    pub lengthscale_shape: f64,
    pub lengthscale_scale: f64,
    pub zeta_scale: f64,
    pub tau_scale: f64,
    pub sum_to_zero_sd: f64,
}

impl Default for Hyperpriors {
    fn default() -> Self {
        Self {
            lengthscale_shape: 5.0,
            lengthscale_scale: 5.0,
            zeta_scale: 1.0,
            tau_scale: 1.0,
            sum_to_zero_sd: 0.001,
        }
    }
}

/// Log density and derivative of a half-Cauchy on `x = exp(u)`, including the Jacobian.
fn log_half_cauchy(u: f64, scale: f64) -> (f64, f64) {
    let x = u.exp();
    let r = x / scale;
    let lp = LN_2 - (PI * scale).ln() - (r * r).ln_1p() + u;
    (lp, 1.0 - 2.0 * r * r / (1.0 + r * r))
}

/// Log density and derivative of an inverse gamma on `x = exp(u)`, including the Jacobian.
fn log_inv_gamma(u: f64, shape: f64, scale: f64) -> (f64, f64) {
    let x = u.exp();
    let lp = shape * scale.ln() - ln_gamma(shape) - shape * u - scale / x;
    (lp, -shape + scale / x)
}

/// Horizontal and vertical neighbour pairs on an `rows x cols` lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct GmrfGraph {
    pub rows: usize,
    pub cols: usize,
    pub edges: Vec<(usize, usize)>,
    pub degree: Vec<usize>,
}

impl GmrfGraph {
    /// Nodes are numbered row-major, `i * cols + j`.
    pub fn lattice(rows: usize, cols: usize) -> Self {
        let mut edges = Vec::new();
        let mut degree = vec![0; rows * cols];
        for i in 0..rows {
            for j in 0..cols {
                let u = i * cols + j;
                if j + 1 < cols {
                    edges.push((u, u + 1));
                }
                if i + 1 < rows {
                    edges.push((u, u + cols));
                }
            }
        }
        for &(a, b) in &edges {
            degree[a] += 1;
            degree[b] += 1;
        }
        Self { rows, cols, edges, degree }
    }

    /// Structure matrix `D - A` of the intrinsic GMRF.
    pub fn structure_matrix(&self) -> Array2<f64> {
        let n = self.rows * self.cols;
        let mut q = Array2::<f64>::zeros((n, n));
        for (u, &d) in self.degree.iter().enumerate() {
            q[[u, u]] = d as f64;
        }
        for &(a, b) in &self.edges {
            q[[a, b]] -= 1.0;
            q[[b, a]] -= 1.0;
        }
        q
    }
}

/// `-(1 / (2 tau^2)) * sum over neighbours of (beta_u - beta_v)^2`.
pub fn gmrf_pairwise_logdensity(graph: &GmrfGraph, beta: &[f64], tau: f64) -> f64 {
    let ss: f64 = graph.edges.iter().map(|&(a, b)| (beta[a] - beta[b]).powi(2)).sum();
    -ss / (2.0 * tau * tau)
}

#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
enum Axes {
    Coordinates { rows: Vec<f64>, cols: Vec<f64> },
    Bases { rows: BasisMatrix, cols: BasisMatrix },
}

/// A prior on a latent `n x m` surface.
#[derive(Debug, Clone)]
pub struct SurfacePrior {
    kind: PriorKind,
    axes: Axes,
    graph: Option<GmrfGraph>,
    hyper: Hyperpriors,
}

/// Intermediate values of [`SurfacePrior::forward`] needed by the backward pass.
#[derive(Debug, Clone)]
pub struct PriorForward {
    pub log_density: f64,
    pub surface: Array2<f64>,
    cache: Cache,
}

#[derive(Debug, Clone)]
enum Cache {
    Plain { beta: Array2<f64> },
    Scaled { tau: f64, beta: Array2<f64> },
    Gp(Box<GpCache>),
}

#[derive(Debug, Clone)]
struct GpCache {
    factors: [GpFactor; 2],
    z: Array2<f64>,
    grad_log_zeta: f64,
    grad_log_gamma: [f64; 2],
}

#[derive(Debug, Clone)]
struct GpFactor {
    lengthscale: f64,
    k0: Array2<f64>,
    sq_dist: Array2<f64>,
    l: Array2<f64>,
}

impl GpFactor {
    fn build(x: &[f64], zeta: f64, lengthscale: f64) -> Result<Self> {
        let kernel = SqExpKernel::from_scale(zeta, lengthscale)?;
        let sq_dist = Array2::from_shape_fn((x.len(), x.len()), |(i, j)| (x[i] - x[j]).powi(2));
        let k0 = crate::kernels::sqexp(x, x, &kernel);
        let mut k = k0.clone();
        k.diag_mut().iter_mut().for_each(|v| *v += JITTER);
        let l = cholesky(k.view())?;
        Ok(Self { lengthscale, k0, sq_dist, l })
    }

    /// Adjoints of `log zeta` and `log gamma` given the factor's adjoint.
    fn hyper_adjoint(&self, l_bar: ArrayView2<f64>) -> (f64, f64) {
        let k_bar = cholesky_backward(self.l.view(), l_bar);
        let inv_g2 = 1.0 / (self.lengthscale * self.lengthscale);
        let mut d_zeta = 0.0;
        let mut d_gamma = 0.0;
        for ((kb, k0), d2) in k_bar.iter().zip(self.k0.iter()).zip(self.sq_dist.iter()) {
            d_zeta += kb * 2.0 * k0;
            d_gamma += kb * k0 * d2 * inv_g2;
        }
        (d_zeta, d_gamma)
    }
}

impl SurfacePrior {
    /// Standard 2-D GP over the grid coordinates of each axis.
    pub fn gp2d(rows: Vec<f64>, cols: Vec<f64>) -> Result<Self> {
        if rows.is_empty() || cols.is_empty() {
            return validation("GP axes must be non-empty");
        }
        Ok(Self { kind: PriorKind::Standard2DGP, axes: Axes::Coordinates { rows, cols }, graph: None, hyper: Hyperpriors::default() })
    }

    /// Tensor-product B-splines with independent standard normal coefficients.
    pub fn bsplines(rows: BasisMatrix, cols: BasisMatrix) -> Self {
        Self { kind: PriorKind::StandardBSplines, axes: Axes::Bases { rows, cols }, graph: None, hyper: Hyperpriors::default() }
    }

    /// Tensor-product B-splines with a first-order GMRF on the coefficient lattice.
    pub fn psplines(rows: BasisMatrix, cols: BasisMatrix) -> Self {
        let graph = GmrfGraph::lattice(rows.basis_count(), cols.basis_count());
        Self { kind: PriorKind::BayesianPSplines, axes: Axes::Bases { rows, cols }, graph: Some(graph), hyper: Hyperpriors::default() }
    }

    /// B-spline surface whose coefficients follow a separable GP over basis indices `1..I`, `1..J`.
    pub fn projected_gp(rows: BasisMatrix, cols: BasisMatrix) -> Self {
        Self { kind: PriorKind::ProjectedGP, axes: Axes::Bases { rows, cols }, graph: None, hyper: Hyperpriors::default() }
    }

    pub fn with_hyperpriors(mut self, hyper: Hyperpriors) -> Self {
        self.hyper = hyper;
        self
    }

    pub fn kind(&self) -> PriorKind {
        self.kind
    }

    pub fn hyperpriors(&self) -> &Hyperpriors {
        &self.hyper
    }

    pub fn graph(&self) -> Option<&GmrfGraph> {
        self.graph.as_ref()
    }

    pub fn bases(&self) -> Option<(&BasisMatrix, &BasisMatrix)> {
        match &self.axes {
            Axes::Bases { rows, cols } => Some((rows, cols)),
            Axes::Coordinates { .. } => None,
        }
    }

    /// Shape `n x m` of the surface produced.
    pub fn surface_shape(&self) -> (usize, usize) {
        match &self.axes {
            Axes::Coordinates { rows, cols } => (rows.len(), cols.len()),
            Axes::Bases { rows, cols } => (rows.grid_size(), cols.grid_size()),
        }
    }

    /// Shape of the latent matrix (`z`, `beta` or `phi`).
    pub fn latent_shape(&self) -> (usize, usize) {
        match &self.axes {
            Axes::Coordinates { rows, cols } => (rows.len(), cols.len()),
            Axes::Bases { rows, cols } => (rows.basis_count(), cols.basis_count()),
        }
    }

    pub fn hyper_names(&self) -> &'static [&'static str] {
        match self.kind {
            PriorKind::Standard2DGP | PriorKind::ProjectedGP => &["zeta", "gamma1", "gamma2"],
            PriorKind::StandardBSplines => &[],
            PriorKind::BayesianPSplines => &["tau"],
        }
    }

    pub fn dim(&self) -> usize {
        let (a, b) = self.latent_shape();
        self.hyper_names().len() + a * b
    }

    /// Labels of the unconstrained coordinates.
    pub fn param_names(&self) -> Vec<String> {
        let latent = match self.kind {
            PriorKind::Standard2DGP | PriorKind::ProjectedGP => "z",
            PriorKind::StandardBSplines => "beta",
            PriorKind::BayesianPSplines => "phi",
        };
        let (a, b) = self.latent_shape();
        let mut names: Vec<String> = self.hyper_names().iter().map(|h| format!("log_{h}")).collect();
        for i in 0..a {
            for j in 0..b {
                names.push(format!("{latent}[{},{}]", i + 1, j + 1));
            }
        }
        names
    }

    /// Constrained hyperparameter values, in [`hyper_names`](Self::hyper_names) order.
    pub fn hyperparameters(&self, raw: &[f64]) -> Vec<f64> {
        raw[..self.hyper_names().len()].iter().map(|u| u.exp()).collect()
    }

    fn check_len(&self, raw: &[f64]) -> Result<()> {
        if raw.len() != self.dim() {
            return validation(format!("{} prior expects {} parameters, got {}", self.kind.label(), self.dim(), raw.len()));
        }
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite prior parameter".into()));
        }
        Ok(())
    }

    fn latent(&self, raw: &[f64]) -> Array2<f64> {
        let h = self.hyper_names().len();
        Array2::from_shape_vec(self.latent_shape(), raw[h..].to_vec()).expect("length checked")
    }

    fn project(&self, beta: &Array2<f64>) -> Array2<f64> {
        match &self.axes {
            Axes::Bases { rows, cols } => rows.values.t().dot(beta).dot(&cols.values),
            Axes::Coordinates { .. } => beta.clone(),
        }
    }

    /// Adjoint of the coefficients from the adjoint of the surface.
    fn project_adjoint(&self, g: ArrayView2<f64>) -> Array2<f64> {
        match &self.axes {
            Axes::Bases { rows, cols } => rows.values.dot(&g).dot(&cols.values.t()),
            Axes::Coordinates { .. } => g.to_owned(),
        }
    }

    fn gp_axes(&self) -> (Vec<f64>, Vec<f64>) {
        match &self.axes {
            Axes::Coordinates { rows, cols } => (rows.clone(), cols.clone()),
            Axes::Bases { rows, cols } => (
                (1..=rows.basis_count()).map(|i| i as f64).collect(),
                (1..=cols.basis_count()).map(|j| j as f64).collect(),
            ),
        }
    }

    /// Factored coefficient covariance at the given parameters (GP variants only).
    pub fn coefficient_covariance(&self, raw: &[f64]) -> Result<Option<crate::kernels::KroneckerCov>> {
        if !matches!(self.kind, PriorKind::Standard2DGP | PriorKind::ProjectedGP) {
            return Ok(None);
        }
        self.check_len(raw)?;
        let (r, c) = self.gp_axes();
        let zeta = raw[0].exp();
        let k1 = SqExpKernel::from_scale(zeta, raw[1].exp())?;
        let k2 = SqExpKernel::from_scale(zeta, raw[2].exp())?;
        crate::kernels::KroneckerCov::from_axes(&r, &c, &k1, &k2).map(Some)
    }

    /// Log prior density (up to a constant, Jacobians included) and the realised surface.
    pub fn logprior_and_surface(&self, raw: &[f64]) -> Result<(f64, Array2<f64>)> {
        let f = self.forward(raw)?;
        Ok((f.log_density, f.surface))
    }

    pub fn forward(&self, raw: &[f64]) -> Result<PriorForward> {
        self.check_len(raw)?;
        match self.kind {
            PriorKind::StandardBSplines => {
                let beta = self.latent(raw);
                let lp = -0.5 * beta.iter().map(|b| b * b).sum::<f64>() - HALF_LN_2PI * beta.len() as f64;
                let surface = self.project(&beta);
                Ok(PriorForward { log_density: lp, surface, cache: Cache::Plain { beta } })
            }
            PriorKind::BayesianPSplines => {
                let graph = self.graph.as_ref().expect("psplines carry a graph");
                let (lp_tau, _) = log_half_cauchy(raw[0], self.hyper.tau_scale);
                let tau = raw[0].exp();
                let phi = self.latent(raw);
                let flat = phi.as_slice().expect("standard layout");
                let mean = phi.mean().unwrap_or(0.0);
                let sd = self.hyper.sum_to_zero_sd;
                let lp = lp_tau + gmrf_pairwise_logdensity(graph, flat, 1.0) - 0.5 * (mean / sd).powi(2);
                let beta = phi * tau;
                let surface = self.project(&beta);
                Ok(PriorForward { log_density: lp, surface, cache: Cache::Scaled { tau, beta } })
            }
            PriorKind::Standard2DGP | PriorKind::ProjectedGP => {
                let h = &self.hyper;
                let (lp_z, dz) = log_half_cauchy(raw[0], h.zeta_scale);
                let (lp_g1, dg1) = log_inv_gamma(raw[1], h.lengthscale_shape, h.lengthscale_scale);
                let (lp_g2, dg2) = log_inv_gamma(raw[2], h.lengthscale_shape, h.lengthscale_scale);
                let zeta = raw[0].exp();
                let (r, c) = self.gp_axes();
                let before = kernel_evaluations();
                let f1 = GpFactor::build(&r, zeta, raw[1].exp())?;
                let f2 = GpFactor::build(&c, zeta, raw[2].exp())?;
                debug_assert_eq!(kernel_evaluations() - before, (r.len() * r.len() + c.len() * c.len()) as u64);
                let z = self.latent(raw);
                let lp_latent = -0.5 * z.iter().map(|v| v * v).sum::<f64>() - HALF_LN_2PI * z.len() as f64;
                let beta = f1.l.dot(&z).dot(&f2.l.t());
                let surface = self.project(&beta);
                Ok(PriorForward {
                    log_density: lp_z + lp_g1 + lp_g2 + lp_latent,
                    surface,
                    cache: Cache::Gp(Box::new(GpCache { factors: [f1, f2], z, grad_log_zeta: dz, grad_log_gamma: [dg1, dg2] })),
                })
            }
        }
    }

    /// Writes into `grad` the gradient of `log prior + L(surface)` where
    /// `surface_grad` is the adjoint `dL/df`.
    pub fn backward(&self, fwd: &PriorForward, surface_grad: ArrayView2<f64>, grad: &mut [f64]) -> Result<()> {
        if surface_grad.dim() != self.surface_shape() {
            return validation(format!("surface adjoint is {:?}, expected {:?}", surface_grad.dim(), self.surface_shape()));
        }
        if grad.len() != self.dim() {
            return validation(format!("gradient buffer has length {}, expected {}", grad.len(), self.dim()));
        }
        let h = self.hyper_names().len();
        let coef_bar = self.project_adjoint(surface_grad);
        match (&fwd.cache, self.kind) {
            (Cache::Plain { beta }, PriorKind::StandardBSplines) => {
                for ((g, cb), b) in grad.iter_mut().zip(coef_bar.iter()).zip(beta.iter()) {
                    *g = cb - b;
                }
                Ok(())
            }
            (Cache::Scaled { tau, beta }, PriorKind::BayesianPSplines) => {
                let graph = self.graph.as_ref().expect("psplines carry a graph");
                let m = beta.len() as f64;
                let sd = self.hyper.sum_to_zero_sd;
                let phi: Vec<f64> = beta.iter().map(|b| b / tau).collect();
                let mean = phi.iter().sum::<f64>() / m;
                let mut g_phi: Vec<f64> = coef_bar.iter().map(|b| b * tau).collect();
                for &(a, b) in &graph.edges {
                    let d = phi[a] - phi[b];
                    g_phi[a] -= d;
                    g_phi[b] += d;
                }
                let g_mean = -mean / (sd * sd) / m;
                g_phi.iter_mut().for_each(|g| *g += g_mean);
                let (_, d_tau) = log_half_cauchy(tau.ln(), self.hyper.tau_scale);
                grad[0] = d_tau + coef_bar.iter().zip(beta.iter()).map(|(g, b)| g * b).sum::<f64>();
                grad[h..].copy_from_slice(&g_phi);
                Ok(())
            }
            (Cache::Gp(c), PriorKind::Standard2DGP | PriorKind::ProjectedGP) => {
                let [f1, f2] = &c.factors;
                let z_bar = f1.l.t().dot(&coef_bar).dot(&f2.l);
                let l1_bar = coef_bar.dot(&f2.l).dot(&c.z.t());
                let l2_bar = coef_bar.t().dot(&f1.l).dot(&c.z);
                let (z1, g1) = f1.hyper_adjoint(l1_bar.view());
                let (z2, g2) = f2.hyper_adjoint(l2_bar.view());
                grad[0] = c.grad_log_zeta + z1 + z2;
                grad[1] = c.grad_log_gamma[0] + g1;
                grad[2] = c.grad_log_gamma[1] + g2;
                for ((g, zb), z) in grad[h..].iter_mut().zip(z_bar.iter()).zip(c.z.iter()) {
                    *g = zb - z;
                }
                Ok(())
            }
            _ => Err(Error::Validation("forward pass belongs to a different prior".into())),
        }
    }

    /// Log prior and its gradient, with no downstream contribution from the surface.
    pub fn logprior_and_grad(&self, raw: &[f64], grad: &mut [f64]) -> Result<f64> {
        let fwd = self.forward(raw)?;
        let zero = Array2::zeros(self.surface_shape());
        self.backward(&fwd, zero.view(), grad)?;
        Ok(fwd.log_density)
    }
}

/// Data-fit and penalty terms of the projected-GP prior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyTerms {
    /// `vec(beta)^T K_beta^{-1} vec(beta)` for the coefficients reproducing `f`.
    pub data_fit: f64,
    /// `log |K_beta|`.
    pub penalty: f64,
}

/// Splits the projected-GP log prior `-(data_fit + penalty) / 2` of a surface
/// into its quadratic and log-determinant parts.
///
/// `f` is an `n x m` surface in the span of the basis; its coefficients are
/// recovered by least squares and `K_beta` is indexed by column-stacked
/// coefficients.
pub fn penalty_decomposition(prior: &SurfacePrior, f: ArrayView2<f64>, k_beta: ArrayView2<f64>) -> Result<PenaltyTerms> {
    let Some((rows, cols)) = prior.bases().filter(|_| prior.kind() == PriorKind::ProjectedGP) else {
        return validation("penalty decomposition applies to the projected GP prior only");
    };
    if f.dim() != prior.surface_shape() {
        return validation(format!("surface is {:?}, expected {:?}", f.dim(), prior.surface_shape()));
    }
    let (i_n, j_n) = (rows.basis_count(), cols.basis_count());
    let m = i_n * j_n;
    if k_beta.dim() != (m, m) {
        return validation(format!("K_beta is {:?}, expected {m} x {m}", k_beta.dim()));
    }
    // beta = (B1 B1^T)^{-1} B1 f B2^T (B2 B2^T)^{-1}
    let g1 = cholesky(rows.values.dot(&rows.values.t()).view())
        .map_err(|e| Error::Numerical(format!("row basis Gram matrix is singular: {e}")))?;
    let g2 = cholesky(cols.values.dot(&cols.values.t()).view())
        .map_err(|e| Error::Numerical(format!("column basis Gram matrix is singular: {e}")))?;
    let rhs = rows.values.dot(&f).dot(&cols.values.t());
    let beta = gram_solve(&g1, &gram_solve(&g2, &rhs.t().to_owned()).t().to_owned());
    let l = cholesky(k_beta).map_err(|e| Error::Numerical(format!("K_beta is singular: {e}")))?;
    let v = crate::kernels::vec_columns(beta.view());
    let y = solve_lower(l.view(), &v);
    Ok(PenaltyTerms { data_fit: y.iter().map(|x| x * x).sum(), penalty: log_det_from_cholesky(l.view()) })
}

/// Solves `(L L^T) X = B` column by column.
fn gram_solve(l: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(b.dim());
    for j in 0..b.ncols() {
        let col: Vec<f64> = b.column(j).to_vec();
        let y = solve_lower(l.view(), &col);
        let x = solve_upper_transposed(l, &y);
        for (i, v) in x.into_iter().enumerate() {
            out[[i, j]] = v;
        }
    }
    out
}

fn solve_upper_transposed(l: &Array2<f64>, b: &[f64]) -> Vec<f64> {
    let n = l.nrows();
    let mut x = b.to_vec();
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in (i + 1)..n {
            s -= l[[k, i]] * x[k];
        }
        x[i] = s / l[[i, i]];
    }
    x
}
