use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::adapt::{DualAverage, DualAverageSettings, VarianceEstimator, WarmupSchedule};
use crate::integrator::{integrate, PhasePoint};
use crate::{LogDensity, PosteriorDraws, SampleError};

const MAX_INIT_ATTEMPTS: usize = 100;
const DIVERGENCE_THRESHOLD: f64 = 1000.0;

/// Settings for [`sample`]. `iterations` counts warmup plus retained draws.
#[derive(Debug, Clone)]
pub struct SamplerConfig {
    pub chains: usize,
    pub iterations: usize,
    pub warmup: usize,
    pub seed: u64,
    /// Upper bound on leapfrog steps per iteration.
    pub max_leapfrog: usize,
    /// Nominal integration time; each iteration jitters it over `[0.8, 1.2]` of this.
    pub path_length: f64,
    pub dual_averaging: DualAverageSettings,
    /// Initial positions are drawn uniformly from `(-init_radius, init_radius)`.
    pub init_radius: f64,
    /// Disables step-size adaptation and integrates with this step throughout.
    pub fixed_step_size: Option<f64>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            chains: 8,
            iterations: 1500,
            warmup: 500,
            seed: 1,
            max_leapfrog: 256,
            path_length: 2.0,
            dual_averaging: DualAverageSettings::default(),
            init_radius: 2.0,
            fixed_step_size: None,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), SampleError> {
        if self.chains == 0 {
            return Err(SampleError::Config("chains must be positive".into()));
        }
        if self.warmup >= self.iterations {
            return Err(SampleError::Config(format!(
                "warmup ({}) must be smaller than iterations ({})",
                self.warmup, self.iterations
            )));
        }
        if self.max_leapfrog == 0 {
            return Err(SampleError::Config("max_leapfrog must be positive".into()));
        }
        if let Some(step) = self.fixed_step_size {
            if !(step > 0.0) {
                return Err(SampleError::Config("fixed_step_size must be positive".into()));
            }
        }
        if !(self.path_length > 0.0) {
            return Err(SampleError::Config("path_length must be positive".into()));
        }
        Ok(())
    }
}

/// Per-chain output before merging.
struct ChainOutput {
    raw: Vec<Vec<f64>>,
    divergences: usize,
    step_size: f64,
    mean_accept: f64,
    leapfrog_steps: usize,
}

/// Draws from `target` with multi-chain adaptive HMC.
///
/// Chains run in parallel. Chain `c` uses the ChaCha stream `c` under key
/// `seed`, and outputs are merged in chain order, so identical configurations
/// give bit-identical draws.
pub fn sample<T: LogDensity>(target: &T, config: &SamplerConfig) -> Result<PosteriorDraws, SampleError> {
    config.validate()?;
    if target.dim() == 0 {
        return Err(SampleError::Config("target dimension must be at least 1".into()));
    }
    let outputs: Vec<Result<ChainOutput, SampleError>> = (0..config.chains)
        .into_par_iter()
        .map(|chain| run_chain(target, config, chain))
        .collect();
    let outputs = outputs.into_iter().collect::<Result<Vec<_>, _>>()?;

    let kept = config.iterations - config.warmup;
    let dim = target.dim();
    let names = target.param_names();
    let mut raw = Array3::zeros((config.chains, kept, dim));
    let mut quantities = Array3::zeros((config.chains, kept, names.len()));
    for (c, out) in outputs.iter().enumerate() {
        for (i, x) in out.raw.iter().enumerate() {
            for (j, v) in x.iter().enumerate() {
                raw[[c, i, j]] = *v;
            }
            for (j, v) in target.constrain(x).into_iter().enumerate() {
                quantities[[c, i, j]] = v;
            }
        }
    }
    Ok(PosteriorDraws {
        names,
        quantities,
        raw,
        divergences: outputs.iter().map(|o| o.divergences).collect(),
        step_sizes: outputs.iter().map(|o| o.step_size).collect(),
        mean_accept: outputs.iter().map(|o| o.mean_accept).collect(),
        leapfrog_steps: outputs.iter().map(|o| o.leapfrog_steps).collect(),
    })
}

fn chain_rng(seed: u64, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64);
    rng
}

fn initial_point<T: LogDensity>(
    target: &T,
    config: &SamplerConfig,
    chain: usize,
    rng: &mut ChaCha8Rng,
) -> Result<PhasePoint, SampleError> {
    let r = config.init_radius;
    for _ in 0..MAX_INIT_ATTEMPTS {
        let x: Vec<f64> = (0..target.dim()).map(|_| rng.random_range(-r..r)).collect();
        if let Ok(point) = PhasePoint::new(target, x) {
            if point.is_finite() {
                return Ok(point);
            }
        }
    }
    Err(SampleError::Initialization {
        chain,
        attempts: MAX_INIT_ATTEMPTS,
    })
}

fn resample_momentum(point: &mut PhasePoint, inv_mass: &[f64], rng: &mut ChaCha8Rng) {
    for (p, m) in point.momentum.iter_mut().zip(inv_mass) {
        let z: f64 = rng.sample(StandardNormal);
        *p = z / m.sqrt();
    }
}

/// Doubles or halves a unit step until single-step acceptance crosses 0.8.
fn initial_step_size<T: LogDensity>(
    target: &T,
    point: &PhasePoint,
    inv_mass: &[f64],
    rng: &mut ChaCha8Rng,
) -> f64 {
    let mut step = 1.0;
    let mut trial = point.clone();
    resample_momentum(&mut trial, inv_mass, rng);
    let h0 = trial.hamiltonian(inv_mass);
    let log_accept = |step: f64, trial: &PhasePoint| -> f64 {
        let mut p = trial.clone();
        match integrate(target, &mut p, step, 1, inv_mass) {
            Ok(()) => h0 - p.hamiltonian(inv_mass),
            Err(_) => f64::NEG_INFINITY,
        }
    };
    let threshold = 0.8f64.ln();
    let direction = if log_accept(step, &trial) > threshold { 1 } else { -1 };
    for _ in 0..60 {
        step = if direction == 1 { step * 2.0 } else { step / 2.0 };
        let la = log_accept(step, &trial);
        let crossed = if direction == 1 { !(la > threshold) } else { la > threshold };
        if crossed {
            break;
        }
    }
    step
}

fn run_chain<T: LogDensity>(target: &T, config: &SamplerConfig, chain: usize) -> Result<ChainOutput, SampleError> {
    let mut rng = chain_rng(config.seed, chain);
    let dim = target.dim();
    let mut inv_mass = vec![1.0; dim];
    let mut current = initial_point(target, config, chain, &mut rng)?;
    let mut step = match config.fixed_step_size {
        Some(step) => step,
        None => initial_step_size(target, &current, &inv_mass, &mut rng),
    };
    let mut dual = DualAverage::new(config.dual_averaging, step);
    let schedule = WarmupSchedule::new(config.warmup);
    let mut variance = VarianceEstimator::new(dim);

    let kept = config.iterations - config.warmup;
    let mut raw = Vec::with_capacity(kept);
    let mut divergences = 0;
    let mut accept_sum = 0.0;
    let mut leapfrog_steps = 0;

    for iter in 0..config.iterations {
        let warming = iter < config.warmup;
        let jitter: f64 = rng.random_range(0.8..1.2);
        let n_steps = ((config.path_length * jitter / step).round() as usize).clamp(1, config.max_leapfrog);
        leapfrog_steps += n_steps;

        resample_momentum(&mut current, &inv_mass, &mut rng);
        let h0 = current.hamiltonian(&inv_mass);
        let mut proposal = current.clone();
        let (accept_stat, divergent) = match integrate(target, &mut proposal, step, n_steps, &inv_mass) {
            Ok(()) => {
                let delta = proposal.hamiltonian(&inv_mass) - h0;
                if !delta.is_finite() || delta > DIVERGENCE_THRESHOLD {
                    (0.0, true)
                } else {
                    ((-delta).exp().min(1.0), false)
                }
            }
            Err(_) => (0.0, true),
        };
        let u: f64 = rng.random();
        if !divergent && u < accept_stat {
            current = proposal;
        }

        if warming && config.fixed_step_size.is_none() {
            dual.update(accept_stat);
            step = dual.current();
            if schedule.collects(iter) {
                variance.add(&current.position);
            }
            if schedule.window_closes(iter) {
                inv_mass = variance.regularized();
                variance = VarianceEstimator::new(dim);
                step = initial_step_size(target, &current, &inv_mass, &mut rng);
                dual.restart(step);
            }
            if iter + 1 == config.warmup {
                step = dual.adapted();
            }
        } else {
            if divergent {
                divergences += 1;
            }
            accept_sum += accept_stat;
            raw.push(current.position.clone());
        }
    }

    Ok(ChainOutput {
        raw,
        divergences,
        step_size: step,
        mean_accept: accept_sum / kept as f64,
        leapfrog_steps,
    })
}
