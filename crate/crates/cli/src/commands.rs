use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use bsgp_core::data::io::{load_cdc, load_jhu, load_lattice, load_vaccination, state_reports};
use bsgp_core::data::{align_calibration, resurgence_start, AgeClass, VaccinationSeries};
use bsgp_core::meta::{counterfactual_project, pre_resurgence_rate, relative_deaths, Interval, MetaData, MetaModel, RelativeDeaths};
use bsgp_core::mortality::*;
use bsgp_core::priors::{PriorKind, SurfacePrior};
use bsgp_core::simulation::{run_benchmark, run_simulation, MethodResult};
use bsgp_core::splines::{eval_basis, BasisMatrix, KnotVector};
use bsgp_hmc::diagnostics::quantile;
use bsgp_hmc::{sample, LogDensity, PosteriorDraws};
use chrono::NaiveDate;

use crate::config::{parse_method, PriorConfig, Resolved, RunConfig};
use crate::error::{CliError, CliResult};
use crate::output::{num, read_stamped, OutputDir};

fn input(msg: impl Into<String>) -> CliError {
    CliError::Input(msg.into())
}

fn required<'a>(p: &'a Option<PathBuf>, key: &str) -> CliResult<&'a Path> {
    let p = p.as_deref().ok_or_else(|| input(format!("config key {key} is required")))?;
    if !p.exists() {
        return Err(input(format!("{key}: {} does not exist", p.display())));
    }
    Ok(p)
}

fn output(r: &Resolved) -> CliResult<OutputDir> {
    OutputDir::create(&r.config.out, &r.hash, r.config.mcmc.seed)
}

fn method_rows(results: &[MethodResult], extra: &[String]) -> Vec<Vec<String>> {
    results
        .iter()
        .map(|m| {
            let mut row = extra.to_vec();
            row.extend([
                m.method.kind.label().to_string(),
                m.method.knots.map_or(String::new(), |k| k.to_string()),
                num(m.mse),
                m.divergences.to_string(),
                num(m.max_rhat),
            ]);
            row
        })
        .collect()
}

fn timing_rows(results: &[MethodResult]) -> Vec<Vec<String>> {
    results.iter().map(|m| vec![m.method.label(), format!("{:.3}", m.seconds)]).collect()
}

/// Simulation study: MSE table plus a separate runtime table.
pub fn cmd_simulate(r: &Resolved) -> CliResult<Vec<PathBuf>> {
    let c = &r.config;
    let settings = c.simulation_settings();
    settings.validate()?;
    let methods = c.simulate.methods.iter().map(|m| parse_method(m)).collect::<CliResult<Vec<_>>>()?;
    let out = output(r)?;
    let report = run_simulation(&settings, &methods, &c.mcmc.sampler(), c.mcmc.seed)?;
    let extra = [report.scenario.to_string(), report.seed.to_string(), report.n_train.to_string()];
    Ok(vec![
        out.write_csv(
            "simulation.csv",
            &["scenario", "seed", "n_train", "method", "knots", "mse", "divergences", "max_rhat"],
            method_rows(&report.results, &extra),
        )?,
        out.write_csv("timings.csv", &["method", "seconds"], timing_rows(&report.results))?,
    ])
}

/// Lattice benchmark with Gaussian likelihood.
pub fn cmd_benchmark(r: &Resolved) -> CliResult<Vec<PathBuf>> {
    let c = &r.config;
    let data = load_lattice(required(&c.data.lattice, "data.lattice")?)?;
    let methods = c.benchmark.methods.iter().map(|m| parse_method(m)).collect::<CliResult<Vec<_>>>()?;
    if data.cells.len() <= c.benchmark.n_train {
        return Err(input(format!("benchmark.n_train = {} but the lattice has {} points", c.benchmark.n_train, data.cells.len())));
    }
    let out = output(r)?;
    let results = run_benchmark(&data, &methods, c.benchmark.n_train, c.benchmark.n_test, c.prior.degree, &c.mcmc.sampler(), c.mcmc.seed)?;
    let n_test = c.benchmark.n_test.unwrap_or(data.cells.len() - c.benchmark.n_train).min(data.cells.len() - c.benchmark.n_train);
    let extra = [c.benchmark.n_train.to_string(), n_test.to_string()];
    Ok(vec![
        out.write_csv(
            "benchmark.csv",
            &["n_train", "n_test", "method", "knots", "mse", "divergences", "max_rhat"],
            method_rows(&results, &extra),
        )?,
        out.write_csv("timings.csv", &["method", "seconds"], timing_rows(&results))?,
    ])
}

fn axis_basis(grid: &[f64], knots: usize, degree: usize) -> CliResult<BasisMatrix> {
    let lo = grid[0];
    let hi = grid[grid.len() - 1];
    Ok(eval_basis(&KnotVector::equispaced(lo, hi, knots, degree)?, grid)?)
}

/// Surface prior over ages x weeks with separate knot counts per axis.
pub fn mortality_prior(c: &PriorConfig, grid: &AgeGrid) -> CliResult<SurfacePrior> {
    let kind = PriorKind::parse(&c.kind)?;
    let prior = if kind == PriorKind::Standard2DGP {
        let idx = |n: usize| (1..=n).map(|i| i as f64).collect::<Vec<_>>();
        SurfacePrior::gp2d(idx(grid.n_ages()), idx(grid.n_weeks()))?
    } else {
        let b1 = axis_basis(&grid.age_axis(), c.knots_rows, c.degree)?;
        let b2 = axis_basis(&grid.week_axis(), c.knots_cols, c.degree)?;
        match kind {
            PriorKind::StandardBSplines => SurfacePrior::bsplines(b1, b2),
            PriorKind::BayesianPSplines => SurfacePrior::psplines(b1, b2),
            _ => SurfacePrior::projected_gp(b1, b2),
        }
    };
    Ok(prior.with_hyperpriors(c.hyperpriors()))
}

fn band_labels(c: &RunConfig) -> CliResult<Vec<String>> {
    Ok(match &c.fit.band_starts {
        Some(starts) => AgeGrid::with_band_starts(1, starts)?.band_labels(),
        None => CDC_BANDS.iter().map(|b| b.0.to_string()).collect(),
    })
}

/// A fitted mortality model with its rescaled predictive draws.
pub struct MortalityFit {
    pub state: String,
    pub weeks: Vec<NaiveDate>,
    pub model: MortalityModel,
    pub draws: PosteriorDraws,
    pub predictive: PredictiveDraws,
}

pub fn run_mortality_fit(c: &RunConfig) -> CliResult<MortalityFit> {
    let state = c.state.clone().ok_or_else(|| input("a state is required (--state or `state` in the config)"))?;
    let records = load_cdc(required(&c.data.cdc, "data.cdc")?)?;
    let jhu = load_jhu(required(&c.data.jhu, "data.jhu")?)?;
    let labels = band_labels(c)?;
    let reports = state_reports(&records, &state, &labels)?;
    let series = reports.difference()?;
    for s in &series {
        for w in s.warnings() {
            eprintln!("warning: {state} {w}");
        }
    }
    let weeks = reports.model_weeks().to_vec();
    if weeks.len() < 2 {
        return Err(input(format!("state {state} has fewer than three weekly reports")));
    }
    let calibration = jhu.get(&state).ok_or_else(|| input(format!("no JHU deaths for state {state}")))?;
    let calibration = align_calibration(calibration, &weeks)?;
    let grid = match &c.fit.band_starts {
        Some(starts) => AgeGrid::with_band_starts(weeks.len(), starts)?,
        None => AgeGrid::cdc(weeks.len())?,
    };
    let prior = mortality_prior(&c.prior, &grid)?;
    let config = MortalityConfig { sd_factor: c.fit.sd_factor, nu_prior_scale: c.fit.nu_prior_scale, eta: c.fit.eta };
    let model = MortalityModel::new(grid, prior, series, config)?;
    eprintln!("fitting {state}: {} weeks, {} parameters", weeks.len(), model.dim());
    let start = Instant::now();
    let draws = sample(&model, &c.mcmc.sampler())?;
    eprintln!("sampled in {:.1}s with {} divergences", start.elapsed().as_secs_f64(), draws.total_divergences());
    let conc = concentration_draws(&model, &draws, c.fit.draws_per_chain)?;
    let predictive = predictive_rescale(&conc, &calibration.deaths, c.mcmc.seed)?;
    Ok(MortalityFit { state, weeks, model, draws, predictive })
}

fn quantiles3(v: &[f64]) -> [String; 3] {
    [num(quantile(v, 0.025)), num(quantile(v, 0.5)), num(quantile(v, 0.975))]
}

/// Draws of the summed deaths over `ages`, per week.
fn group_trajectories(p: &PredictiveDraws, ages: &[usize]) -> Vec<Vec<f64>> {
    p.draws.iter().map(|d| (0..d.ncols()).map(|w| ages.iter().map(|&a| d[[a, w]] as f64).sum()).collect()).collect()
}

fn per_week(traj: &[Vec<f64>], w: usize) -> Vec<f64> {
    traj.iter().map(|t| t[w]).collect()
}

pub fn cmd_fit(r: &Resolved) -> CliResult<Vec<PathBuf>> {
    let fit = run_mortality_fit(&r.config)?;
    let out = output(r)?;
    let s = &fit.state;
    let mut files = Vec::new();

    let n_ages = fit.model.grid().n_ages();
    let mut rows = Vec::new();
    for a in 0..n_ages {
        let traj = group_trajectories(&fit.predictive, &[a]);
        for (w, week) in fit.weeks.iter().enumerate() {
            let mut row = vec![a.to_string(), week.to_string()];
            row.extend(quantiles3(&per_week(&traj, w)));
            rows.push(row);
        }
    }
    files.push(out.write_csv(&format!("fit_{s}.csv"), &["age", "week", "q2.5", "q50", "q97.5"], rows)?);

    let mut rows = Vec::new();
    for class in AgeClass::ALL {
        let traj = group_trajectories(&fit.predictive, &class.ages().collect::<Vec<_>>());
        for (w, week) in fit.weeks.iter().enumerate() {
            let v = per_week(&traj, w);
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            let mut row = vec![week.to_string(), class.label().to_string(), num(mean)];
            row.extend(quantiles3(&v));
            rows.push(row);
        }
    }
    files.push(out.write_csv(&format!("classes_{s}.csv"), &["week", "age_class", "mean", "q2.5", "q50", "q97.5"], rows)?);

    let summary = fit.draws.summary()?;
    files.push(out.write_csv(
        &format!("summary_{s}.csv"),
        &["name", "mean", "sd", "q2.5", "q50", "q97.5", "ess_bulk", "rhat"],
        summary.iter().map(|p| {
            vec![p.name.clone(), num(p.mean), num(p.sd), num(p.q025), num(p.q500), num(p.q975), num(p.ess_bulk), num(p.rhat)]
        }),
    )?);
    files.push(diagnostics(&out, &format!("diagnostics_{s}.csv"), &fit.draws)?);
    files.push(write_draws(&out, &format!("draws_{s}.csv"), &fit.draws)?);
    Ok(files)
}

fn diagnostics(out: &OutputDir, name: &str, d: &PosteriorDraws) -> CliResult<PathBuf> {
    out.write_csv(
        name,
        &["chain", "divergences", "step_size", "mean_accept", "leapfrog_steps"],
        (0..d.n_chains()).map(|c| {
            vec![c.to_string(), d.divergences[c].to_string(), num(d.step_sizes[c]), num(d.mean_accept[c]), d.leapfrog_steps[c].to_string()]
        }),
    )
}

fn write_draws(out: &OutputDir, name: &str, d: &PosteriorDraws) -> CliResult<PathBuf> {
    let mut header = vec!["chain", "draw"];
    header.extend(d.names.iter().map(String::as_str));
    let rows = (0..d.n_chains()).flat_map(|c| {
        (0..d.n_draws()).map(move |i| {
            let mut row = vec![c.to_string(), i.to_string()];
            row.extend(d.quantities.slice(ndarray::s![c, i, ..]).iter().map(|&v| num(v)));
            row
        })
    });
    out.write_csv(name, &header, rows)
}

/// Parses `lo-hi` or `lo+` into single-year ages.
pub fn parse_group(s: &str) -> CliResult<Vec<usize>> {
    let bad = || input(format!("age group '{s}' must look like 20-49 or 65+"));
    let (lo, hi) = if let Some(lo) = s.strip_suffix('+') {
        (lo.parse::<usize>().map_err(|_| bad())?, N_AGES - 1)
    } else {
        let (a, b) = s.split_once('-').ok_or_else(bad)?;
        (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?)
    };
    if lo > hi || hi >= N_AGES {
        return Err(bad());
    }
    Ok((lo..=hi).collect())
}

/// Weekly and cumulative predictive deaths for the configured age groups.
pub fn cmd_predict(r: &Resolved) -> CliResult<Vec<PathBuf>> {
    let groups = r.config.fit.groups.iter().map(|g| Ok((g.clone(), parse_group(g)?))).collect::<CliResult<Vec<_>>>()?;
    let fit = run_mortality_fit(&r.config)?;
    let out = output(r)?;
    let mut rows = Vec::new();
    for (label, ages) in &groups {
        let traj = group_trajectories(&fit.predictive, ages);
        let cum: Vec<Vec<f64>> = traj
            .iter()
            .map(|t| t.iter().scan(0.0, |acc, x| {
                *acc += x;
                Some(*acc)
            }).collect())
            .collect();
        for (w, week) in fit.weeks.iter().enumerate() {
            let mut row = vec![label.clone(), week.to_string()];
            row.extend(quantiles3(&per_week(&traj, w)));
            row.extend(quantiles3(&per_week(&cum, w)));
            rows.push(row);
        }
    }
    let header = ["age_group", "week", "q2.5", "q50", "q97.5", "cum_q2.5", "cum_q50", "cum_q97.5"];
    Ok(vec![out.write_csv(&format!("predict_{}.csv", fit.state), &header, rows)?])
}

/// Mean class trajectories written by `fit`.
fn read_classes(path: &Path, state: &str) -> CliResult<(Vec<NaiveDate>, [Vec<f64>; 2])> {
    if !path.exists() {
        return Err(input(format!("no fit output for state {state} at {}; run `bsgp fit --state {state}` first", path.display())));
    }
    let mut rdr = read_stamped(path)?;
    let mut by_class: [BTreeMap<NaiveDate, f64>; 2] = Default::default();
    for rec in rdr.records() {
        let rec = rec?;
        let bad = || input(format!("{}: malformed row {:?}", path.display(), rec));
        let week = NaiveDate::parse_from_str(rec.get(0).ok_or_else(bad)?, "%Y-%m-%d").map_err(|_| bad())?;
        let class = AgeClass::parse(rec.get(1).ok_or_else(bad)?)?;
        let mean: f64 = rec.get(2).ok_or_else(bad)?.parse().map_err(|_| bad())?;
        by_class[class as usize].insert(week, mean);
    }
    let weeks: Vec<NaiveDate> = by_class[0].keys().copied().collect();
    if weeks.is_empty() || by_class[1].keys().copied().collect::<Vec<_>>() != weeks {
        return Err(input(format!("{}: both age classes must cover the same weeks", path.display())));
    }
    Ok((weeks, [by_class[0].values().copied().collect(), by_class[1].values().copied().collect()]))
}

fn vaccination_for<'a>(all: &'a [VaccinationSeries], state: &str, class: AgeClass) -> CliResult<&'a VaccinationSeries> {
    all.iter()
        .find(|v| v.state == state && v.class == class)
        .ok_or_else(|| input(format!("no {} vaccination series for state {state}", class.label())))
}

/// Resurgence meta-regression over previously fitted states.
pub fn cmd_meta(r: &Resolved) -> CliResult<Vec<PathBuf>> {
    let c = &r.config;
    if c.meta.states.is_empty() {
        return Err(input("meta.states lists no states"));
    }
    let convention = c.meta.convention()?;
    let vaccination = load_vaccination(required(&c.data.vaccination, "data.vaccination")?)?;
    let jhu = load_jhu(required(&c.data.jhu, "data.jhu")?)?;
    let fit_dir = c.meta.fit_dir.clone().unwrap_or_else(|| c.out.clone());

    let mut rates = Vec::new();
    let mut relative: Vec<[RelativeDeaths; 2]> = Vec::new();
    let mut start_weeks = Vec::new();
    for state in &c.meta.states {
        let (weeks, means) = read_classes(&fit_dir.join(format!("classes_{state}.csv")), state)?;
        let calib = jhu.get(state).ok_or_else(|| input(format!("no JHU deaths for state {state}")))?;
        let deaths: Vec<f64> = align_calibration(calib, &weeks)?.deaths.iter().map(|&d| d as f64).collect();
        let from = c.meta.anchor.map_or(0, |a| weeks.iter().position(|w| *w >= a).unwrap_or(weeks.len()));
        let start = resurgence_start(&deaths, from)?
            .ok_or_else(|| input(format!("no resurgence found for state {state} after week {from}")))?;
        if start == 0 {
            return Err(input(format!("state {state}: resurgence starts in the first week, no pre-resurgence period")));
        }
        let pair = [
            relative_deaths(&[means[0].clone()], AgeClass::Adults, start)?,
            relative_deaths(&[means[1].clone()], AgeClass::Elderly, start)?,
        ];
        rates.push([
            pre_resurgence_rate(vaccination_for(&vaccination, state, AgeClass::Adults)?, weeks[start])?,
            pre_resurgence_rate(vaccination_for(&vaccination, state, AgeClass::Elderly)?, weeks[start])?,
        ]);
        relative.push(pair);
        start_weeks.push((weeks, start));
    }
    let scenario = c.meta.scenario_rate.unwrap_or_else(|| rates.iter().map(|v| v[0]).fold(0.0, f64::max));
    if !(0.0..=1.0).contains(&scenario) {
        return Err(input(format!("meta.scenario_rate {scenario} lies outside [0, 1]")));
    }
    let data = MetaData::from_relative(c.meta.states.clone(), rates, &relative)?;
    let model = MetaModel::new(data, convention)?;
    let out = output(r)?;
    let draws = sample(&model, &c.mcmc.sampler())?;
    let mut files = Vec::new();

    let n_fixed = MetaModel::fixed_names().len();
    let forest_rows = (0..n_fixed + 2).map(|j| {
        let v = draws.pooled(j);
        let i = Interval::from_draws(&v);
        vec![draws.names[j].clone(), num(i.median), num(i.lo95), num(i.hi95)]
    });
    files.push(out.write_csv("forest.csv", &["parameter", "median", "lo95", "hi95"], forest_rows)?);

    let params = draws.raw_draws().map(|x| model.params(&x)).collect::<bsgp_core::Result<Vec<_>>>()?;
    let mut ppc = Vec::new();
    for (m, state) in c.meta.states.iter().enumerate() {
        let v = model.data().vaccination[m];
        let (weeks, start) = &start_weeks[m];
        for (cls, class) in AgeClass::ALL.iter().enumerate() {
            for (k, &obs) in relative[m][cls].mean.iter().enumerate() {
                let e: Vec<f64> = params.iter().map(|p| model.expected_relative(p, m, cls, k, v)).collect();
                let i = Interval::from_draws(&e);
                ppc.push(vec![
                    state.clone(),
                    class.label().to_string(),
                    k.to_string(),
                    weeks[start + k].to_string(),
                    num(obs),
                    num(i.median),
                    num(i.lo95),
                    num(i.hi95),
                ]);
            }
        }
    }
    files.push(out.write_csv(
        "ppc.csv",
        &["state", "age_class", "offset", "week", "observed", "expected_median", "expected_lo95", "expected_hi95"],
        ppc,
    )?);

    let cf = counterfactual_project(&model, &draws, scenario)?;
    files.push(out.write_csv(
        "counterfactual.csv",
        &["state", "age_class", "avoided_median", "avoided_lo95", "avoided_hi95", "pct_median", "pct_lo95", "pct_hi95"],
        cf.iter().map(|s| {
            vec![
                s.state.clone(),
                s.class.label().to_string(),
                num(s.avoided.median),
                num(s.avoided.lo95),
                num(s.avoided.hi95),
                num(s.pct.median),
                num(s.pct.lo95),
                num(s.pct.hi95),
            ]
        }),
    )?);
    let summary = draws.summary()?;
    files.push(out.write_csv(
        "meta_summary.csv",
        &["name", "mean", "sd", "q2.5", "q50", "q97.5", "ess_bulk", "rhat"],
        summary.iter().map(|p| {
            vec![p.name.clone(), num(p.mean), num(p.sd), num(p.q025), num(p.q500), num(p.q975), num(p.ess_bulk), num(p.rhat)]
        }),
    )?);
    files.push(diagnostics(&out, "meta_diagnostics.csv", &draws)?);
    eprintln!("counterfactual 18-64 coverage {scenario:.3}");
    Ok(files)
}
