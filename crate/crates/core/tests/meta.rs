use bsgp_core::data::AgeClass;
use bsgp_core::meta::*;
use bsgp_core::mortality::PredictiveDraws;
use bsgp_core::synthetic::MetaTruth;
use bsgp_hmc::{LogDensity, PosteriorDraws};
use ndarray::{array, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Continuous, Gamma};

fn small_data() -> MetaData {
    MetaTruth::spread(4, 5, -2.0, 3).simulate(4).unwrap()
}

fn draws_from(model: &MetaModel, raws: &[Vec<f64>]) -> PosteriorDraws {
    let dim = model.dim();
    let raw = Array3::from_shape_fn((1, raws.len(), dim), |(_, i, j)| raws[i][j]);
    let names = model.param_names();
    let q: Vec<Vec<f64>> = raws.iter().map(|x| model.constrain(x)).collect();
    let quantities = Array3::from_shape_fn((1, raws.len(), names.len()), |(_, i, j)| q[i][j]);
    PosteriorDraws { names, quantities, raw, divergences: vec![0], step_sizes: vec![0.1], mean_accept: vec![0.8], leapfrog_steps: vec![0] }
}

#[test]
fn relative_deaths_examples() {
    let flat = vec![vec![3.0; 6]];
    let r = relative_deaths(&flat, AgeClass::Adults, 3).unwrap();
    assert_eq!(r.mean, vec![1.0; 3]);

    let toy = vec![vec![1.0, 4.0, 2.0, 6.0]];
    let r = relative_deaths(&toy, AgeClass::Elderly, 3).unwrap();
    assert_eq!(r.max_pre, 4.0);
    assert_eq!(r.mean, vec![1.5]);

    let doubled = vec![vec![2.0, 8.0, 4.0, 12.0]];
    assert_eq!(relative_deaths(&doubled, AgeClass::Elderly, 3).unwrap().mean, r.mean);

    let zeros = vec![vec![0.0, 0.0, 5.0]];
    assert!(relative_deaths(&zeros, AgeClass::Adults, 2).is_err());
    assert!(relative_deaths(&toy, AgeClass::Adults, 0).is_err());
}

#[test]
fn relative_deaths_use_the_mean_trajectory_maximum() {
    let t = vec![vec![2.0, 6.0, 9.0], vec![4.0, 2.0, 3.0]];
    let r = relative_deaths(&t, AgeClass::Adults, 2).unwrap();
    assert_eq!(r.max_pre, 4.0);
    assert_eq!(r.mean, vec![1.5]);
    assert_eq!(r.draws, vec![vec![2.25], vec![0.75]]);
}

#[test]
fn class_trajectories_sum_ages() {
    let mut d = ndarray::Array2::<u64>::zeros((106, 2));
    d[[20, 0]] = 3;
    d[[64, 1]] = 2;
    d[[65, 1]] = 7;
    d[[10, 0]] = 100;
    let p = PredictiveDraws { draws: vec![d] };
    assert_eq!(class_trajectories(&p, AgeClass::Adults).unwrap(), vec![vec![3.0, 2.0]]);
    assert_eq!(class_trajectories(&p, AgeClass::Elderly).unwrap(), vec![vec![0.0, 7.0]]);
    let short = PredictiveDraws { draws: vec![array![[1u64]]] };
    assert!(class_trajectories(&short, AgeClass::Adults).is_err());
}

#[test]
fn unit_shape_density() {
    let data = MetaData {
        states: vec!["A".into()],
        vaccination: vec![[0.0, 0.0]],
        observations: vec![MetaObservation { state: 0, class: 0, offset: 0, r: 1.0 }],
        max_pre: vec![[1.0, 1.0]],
    };
    let model = MetaModel::new(data, GammaConvention::ShapeRate).unwrap();
    let kappa: f64 = 1.3;
    let mut x = vec![0.0; model.dim()];
    x[12] = kappa.ln();
    let mut g = vec![0.0; x.len()];
    let full = model.meta_loglik(&x, &mut g).unwrap();

    let empty = MetaData { observations: vec![], ..model.data().clone() };
    let prior_only = MetaModel::new(empty, GammaConvention::ShapeRate).unwrap().meta_loglik(&x, &mut g).unwrap();
    let expect = Gamma::new(1.0, kappa * kappa).unwrap().ln_pdf(1.0);
    assert!((full - prior_only - expect).abs() < 1e-12);
    let p = model.params(&x).unwrap();
    assert!((model.expected_relative(&p, 0, 0, 0, [0.0, 0.0]) - 1.0 / (kappa * kappa)).abs() < 1e-12);
}

#[test]
fn gradients_match_finite_differences() {
    for convention in [GammaConvention::ShapeRate, GammaConvention::ShapeScale] {
        let model = MetaModel::new(small_data(), convention).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let x: Vec<f64> = (0..model.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut g = vec![0.0; x.len()];
            model.meta_loglik(&x, &mut g).unwrap();
            let mut scratch = vec![0.0; x.len()];
            for i in 0..x.len() {
                let h = 1e-4;
                let mut at = |d: f64| {
                    let mut y = x.clone();
                    y[i] += d;
                    model.meta_loglik(&y, &mut scratch).unwrap()
                };
                let fd = (-at(2.0 * h) + 8.0 * at(h) - 8.0 * at(-h) + at(-2.0 * h)) / (12.0 * h);
                assert!((fd - g[i]).abs() / g[i].abs().max(1.0) < 1e-5, "{convention:?} {i}: {} vs {fd}", g[i]);
            }
        }
    }
}

#[test]
fn permuting_states_permutes_effects() {
    let data = small_data();
    let model = MetaModel::new(data.clone(), GammaConvention::ShapeRate).unwrap();
    let perm = [2usize, 0, 3, 1];
    let mut pdata = data.clone();
    pdata.states = perm.iter().map(|&p| data.states[p].clone()).collect();
    pdata.vaccination = perm.iter().map(|&p| data.vaccination[p]).collect();
    pdata.max_pre = perm.iter().map(|&p| data.max_pre[p]).collect();
    let inv: Vec<usize> = (0..4).map(|m| perm.iter().position(|&p| p == m).unwrap()).collect();
    for o in &mut pdata.observations {
        o.state = inv[o.state];
    }
    let pmodel = MetaModel::new(pdata, GammaConvention::ShapeRate).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x: Vec<f64> = (0..model.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut y = x.clone();
    for (new, &old) in perm.iter().enumerate() {
        y[12 + new] = x[12 + old];
        y[16 + 2 * new] = x[16 + 2 * old];
        y[16 + 2 * new + 1] = x[16 + 2 * old + 1];
    }
    let mut g = vec![0.0; x.len()];
    let a = model.meta_loglik(&x, &mut g).unwrap();
    let b = pmodel.meta_loglik(&y, &mut g).unwrap();
    assert!((a - b).abs() < 1e-9 * a.abs().max(1.0));
}

#[test]
fn rejects_bad_inputs() {
    let mut data = small_data();
    data.observations[0].r = 0.0;
    assert!(MetaModel::new(data, GammaConvention::ShapeRate).is_err());
    let mut data = small_data();
    data.vaccination[0][0] = 1.2;
    assert!(MetaModel::new(data, GammaConvention::ShapeRate).is_err());
    assert!(GammaConvention::parse("mean").is_err());
    assert_eq!(GammaConvention::parse("shape-scale").unwrap(), GammaConvention::ShapeScale);
}

#[test]
fn counterfactual_properties() {
    let data = small_data();
    let model = MetaModel::new(data.clone(), GammaConvention::ShapeRate).unwrap();
    let mut x = vec![0.0; model.dim()];
    x[0] = 0.5;
    x[1] = 0.2;
    x[2] = -1.5;
    x[7] = -0.3;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let raws: Vec<Vec<f64>> = (0..40).map(|_| x.iter().map(|v| v + rng.random_range(-0.05..0.05)).collect()).collect();
    let draws = draws_from(&model, &raws);

    let own = data.vaccination[0][0];
    let same = counterfactual_project(&model, &draws, own).unwrap();
    let s0 = same.iter().find(|s| s.state == data.states[0] && s.class == AgeClass::Adults).unwrap();
    assert!(s0.avoided_draws.iter().all(|a| a.abs() < 1e-9));

    let mut last = f64::NEG_INFINITY;
    for rate in [0.3, 0.5, 0.7, 0.9, 1.0] {
        let out = counterfactual_project(&model, &draws, rate).unwrap();
        let a = out.iter().find(|s| s.state == data.states[1] && s.class == AgeClass::Adults).unwrap().avoided.median;
        assert!(a >= last - 1e-9);
        last = a;
    }
    assert!(counterfactual_project(&model, &draws, 1.5).is_err());
}

#[test]
fn counterfactual_arithmetic() {
    let data = MetaData {
        states: vec!["A".into()],
        vaccination: vec![[0.2, 0.8]],
        observations: (0..3).flat_map(|k| (0..2).map(move |c| MetaObservation { state: 0, class: c, offset: k, r: 1.0 })).collect(),
        max_pre: vec![[10.0, 20.0]],
    };
    let model = MetaModel::new(data, GammaConvention::ShapeRate).unwrap();
    let mut x = vec![0.0; model.dim()];
    x[2] = -1.0;
    x[7] = -0.5;
    let draws = draws_from(&model, &[x.clone()]);
    let out = counterfactual_project(&model, &draws, 0.6).unwrap();
    let obs: f64 = (0..3).map(|k| 10.0 * (-0.2 - 0.5 * 0.2 * k as f64).exp()).sum();
    let alt: f64 = (0..3).map(|k| 10.0 * (-0.6 - 0.5 * 0.6 * k as f64).exp()).sum();
    assert!((out[0].avoided.median - (obs - alt)).abs() < 1e-9);
    assert!((out[0].pct.median - 100.0 * (obs - alt) / obs).abs() < 1e-9);
    assert!(out[1].avoided.median.abs() < 1e-12);
}
