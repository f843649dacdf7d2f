use bsgp_core::data::io::LatticeData;
use bsgp_core::data::CumulativeValue;
use bsgp_core::mortality::AgeGrid;
use bsgp_core::priors::{Hyperpriors, PriorKind};
use bsgp_core::regression::{CellValue, Observation, SurfaceRegression};
use bsgp_core::simulation::*;
use bsgp_core::synthetic::{simulate_mortality, MetaTruth, MortalityTruth};
use bsgp_hmc::{LogDensity, SamplerConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn grid(n: usize) -> Vec<f64> {
    (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
}

fn model(kind: PriorKind, knots: Option<usize>, obs: Observation) -> SurfaceRegression {
    let g = grid(6);
    let prior = build_prior(MethodSpec::new(kind, knots).unwrap(), &g, &g, 3, Hyperpriors::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let data = (0..12)
        .map(|i| CellValue {
            row: i % 6,
            col: (i * 5) % 6,
            value: match obs {
                Observation::NegBin => rng.random_range(0..20) as f64,
                Observation::Gaussian => rng.random_range(-2.0..2.0),
            },
        })
        .collect();
    SurfaceRegression::new(prior, obs, data, vec![(0, 0), (5, 5)]).unwrap()
}

#[test]
fn gradients_match_finite_differences() {
    let cases = [
        (PriorKind::ProjectedGP, Some(4)),
        (PriorKind::Standard2DGP, None),
        (PriorKind::BayesianPSplines, Some(4)),
        (PriorKind::StandardBSplines, Some(4)),
    ];
    for (kind, knots) in cases {
        for obs in [Observation::NegBin, Observation::Gaussian] {
            let m = model(kind, knots, obs);
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            for _ in 0..5 {
                let x: Vec<f64> = (0..m.dim()).map(|_| rng.random_range(-0.8..0.8)).collect();
                let mut g = vec![0.0; x.len()];
                m.log_density(&x, &mut g).unwrap();
                let mut scratch = vec![0.0; x.len()];
                for i in 0..x.len() {
                    let h = 1e-4;
                    let mut at = |d: f64| {
                        let mut y = x.clone();
                        y[i] += d;
                        m.log_density(&y, &mut scratch).unwrap()
                    };
                    let fd = (-at(2.0 * h) + 8.0 * at(h) - 8.0 * at(-h) + at(-2.0 * h)) / (12.0 * h);
                    assert!((fd - g[i]).abs() / g[i].abs().max(1.0) < 1e-5, "{kind:?} {obs:?} {i}: {} vs {fd}", g[i]);
                }
            }
        }
    }
}

#[test]
fn rejects_bad_observations() {
    let g = grid(4);
    let prior = || build_prior(MethodSpec::new(PriorKind::StandardBSplines, Some(3)).unwrap(), &g, &g, 2, Hyperpriors::default()).unwrap();
    let cell = |v: f64| vec![CellValue { row: 0, col: 0, value: v }];
    assert!(SurfaceRegression::new(prior(), Observation::NegBin, cell(1.5), vec![]).is_err());
    assert!(SurfaceRegression::new(prior(), Observation::NegBin, cell(-1.0), vec![]).is_err());
    assert!(SurfaceRegression::new(prior(), Observation::Gaussian, cell(f64::NAN), vec![]).is_err());
    assert!(SurfaceRegression::new(prior(), Observation::Gaussian, vec![CellValue { row: 4, col: 0, value: 0.0 }], vec![]).is_err());
    assert!(SurfaceRegression::new(prior(), Observation::Gaussian, vec![], vec![]).is_err());
    assert!(SurfaceRegression::new(prior(), Observation::Gaussian, cell(0.0), vec![(0, 9)]).is_err());
}

#[test]
fn quantities_are_named_and_constrained() {
    let m = model(PriorKind::ProjectedGP, Some(4), Observation::NegBin);
    let names = m.param_names();
    assert_eq!(names[0], "nu");
    assert_eq!(names.last().unwrap(), "mean[6,6]");
    let x = vec![0.3; m.dim()];
    let q = m.constrain(&x);
    assert_eq!(q.len(), names.len());
    assert!((q[0] - (-0.6f64).exp()).abs() < 1e-12);
    let surface = m.mean_surface(&x).unwrap();
    assert_eq!(*q.last().unwrap(), surface[[5, 5]]);
}

#[test]
fn method_specs() {
    assert!(MethodSpec::new(PriorKind::Standard2DGP, Some(5)).is_err());
    assert!(MethodSpec::new(PriorKind::ProjectedGP, None).is_err());
    assert!(MethodSpec::new(PriorKind::ProjectedGP, Some(1)).is_err());
    assert_eq!(MethodSpec::new(PriorKind::ProjectedGP, Some(10)).unwrap().label(), format!("{} (10 knots)", PriorKind::ProjectedGP.label()));
    assert_eq!(scenario_label(0.05), "weakly correlated");
    assert_eq!(scenario_label(1.0), "strongly correlated");
}

#[test]
fn simulation_is_seeded() {
    let s = SimulationSettings { grid_size: 8, ..Default::default() };
    let a = simulate_surface(&s, 3).unwrap();
    assert_eq!(a, simulate_surface(&s, 3).unwrap());
    assert_ne!(a.counts, simulate_surface(&s, 4).unwrap().counts);
    assert_eq!(a.train.len(), 26);
    assert_eq!(a.train.len() + a.test.len(), 64);
    assert!(a.train.iter().all(|c| !a.test.contains(c)));
}

#[test]
fn settings_validation() {
    for f in [0.0, 1.0, -0.2, 1.5] {
        let s = SimulationSettings { train_fraction: f, ..Default::default() };
        assert!(simulate_surface(&s, 0).is_err());
    }
    assert!(SimulationSettings { grid_size: 1, ..Default::default() }.validate().is_err());
    assert!(SimulationSettings { lengthscale: 0.0, ..Default::default() }.validate().is_err());
}

#[test]
fn negbin_draws_have_the_right_moments() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mu, nu) = (6.0, 0.5);
    let n = 200_000;
    let xs: Vec<f64> = (0..n).map(|_| sample_negbin(mu, nu, &mut rng) as f64).collect();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    assert!((mean - mu).abs() < 0.05);
    assert!((var / (mu * (1.0 + nu)) - 1.0).abs() < 0.03);
    assert_eq!(sample_negbin(0.0, nu, &mut rng), 0);
}

fn lattice(value: impl Fn(usize, usize) -> f64) -> LatticeData {
    let xs = grid(5);
    let ys = grid(4);
    let cells = (0..5).flat_map(|r| (0..4).map(move |c| (r, c))).map(|(r, c)| (r, c, value(r, c))).collect();
    LatticeData { xs, ys, cells }
}

#[test]
fn lattice_split() {
    let data = lattice(|r, c| (r * 4 + c) as f64);
    let (train, test) = split_lattice(&data, 8, Some(5), 2).unwrap();
    assert_eq!((train.len(), test.len()), (8, 5));
    assert!(train.iter().all(|t| !test.contains(t)));
    assert!(train.iter().chain(&test).all(|c| c.value == (c.row * 4 + c.col) as f64));
    assert_eq!(split_lattice(&data, 8, Some(5), 2).unwrap(), (train, test));
    assert_eq!(split_lattice(&data, 8, None, 2).unwrap().1.len(), 12);
    assert!(split_lattice(&data, 0, None, 2).is_err());
    assert!(split_lattice(&data, 20, None, 2).is_err());
}

#[test]
fn benchmark_beats_the_zero_predictor_on_a_plane() {
    let data = lattice(|r, c| 0.5 * (r as f64 - 2.0) + 0.3 * (c as f64 - 1.5));
    let sampler = SamplerConfig { chains: 2, iterations: 400, warmup: 200, seed: 4, ..Default::default() };
    let method = MethodSpec::new(PriorKind::StandardBSplines, Some(3)).unwrap();
    let out = run_benchmark(&data, &[method], 14, None, 2, &sampler, 1).unwrap();
    let (_, test) = split_lattice(&data, 14, None, 1).unwrap();
    let zero = test.iter().map(|c| c.value * c.value).sum::<f64>() / test.len() as f64;
    assert_eq!(out.len(), 1);
    assert!(out[0].mse < 0.5 * zero, "{} vs {zero}", out[0].mse);
}

#[test]
fn synthetic_mortality_reports_are_consistent() {
    let grid = AgeGrid::with_band_starts(8, &[0, 18, 50, 80]).unwrap();
    let truth = MortalityTruth::smooth(grid, 40.0, 0.3);
    let sim = simulate_mortality(&truth, &[4], 2).unwrap();
    assert_eq!(sim, simulate_mortality(&truth, &[4], 2).unwrap());
    assert_eq!(sim.weekly.dim(), (4, 8));
    for (b, reports) in sim.reports.iter().enumerate() {
        assert_eq!(reports.len(), 9);
        assert_eq!(reports[3], CumulativeValue::Missing);
        let mut cum = truth.baseline[b];
        for (i, r) in reports.iter().enumerate() {
            if i > 0 {
                cum += sim.weekly[[b, i - 1]];
            }
            match r {
                CumulativeValue::Observed(v) => assert_eq!(*v, cum),
                CumulativeValue::Censored => assert!((1..=9).contains(&cum)),
                CumulativeValue::Missing => assert_eq!(i, 3),
            }
        }
    }
    assert_eq!(sim.series().unwrap().len(), 4);
    assert_eq!(sim.totals().iter().sum::<u64>(), sim.weekly.sum());
    assert!(simulate_mortality(&truth, &[0], 2).is_err());
    assert!(simulate_mortality(&truth, &[10], 2).is_err());
    let first = chrono::NaiveDate::from_ymd_opt(2020, 3, 7).unwrap();
    assert_eq!(sim.cdc_records("XX", first).len(), 4 * 8);
}

#[test]
fn synthetic_meta_design() {
    let t = MetaTruth::spread(6, 4, -2.0, 1);
    assert_eq!(t, MetaTruth::spread(6, 4, -2.0, 1));
    assert!(t.vaccination.iter().all(|v| (0.05..0.95).contains(&v[0]) && (0.3..0.95).contains(&v[1])));
    let d = t.simulate(2).unwrap();
    assert_eq!(d.observations.len(), 6 * 2 * 4);
    assert!(d.observations.iter().all(|o| o.r > 0.0));
    assert_eq!(d.states[5], "S06");
}
