use bsgp_core::kernels::{kron, projected_kernel, vec_columns};
use bsgp_core::priors::{gmrf_pairwise_logdensity, penalty_decomposition, GmrfGraph, PriorKind, SurfacePrior};
use bsgp_core::splines::{eval_basis, KnotVector};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};

fn basis(n: usize, knots: usize) -> bsgp_core::splines::BasisMatrix {
    let grid: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
    eval_basis(&KnotVector::equispaced(0.0, 1.0, knots, 3).unwrap(), &grid).unwrap()
}

fn all_priors() -> Vec<SurfacePrior> {
    let grid_r: Vec<f64> = (0..5).map(|i| i as f64 / 4.0).collect();
    let grid_c: Vec<f64> = (0..4).map(|i| i as f64 / 3.0).collect();
    vec![
        SurfacePrior::gp2d(grid_r, grid_c).unwrap(),
        SurfacePrior::bsplines(basis(5, 3), basis(4, 2)),
        SurfacePrior::psplines(basis(5, 3), basis(4, 2)),
        SurfacePrior::projected_gp(basis(5, 3), basis(4, 2)),
    ]
}

fn objective(prior: &SurfacePrior, w: &Array2<f64>, raw: &[f64]) -> f64 {
    let (lp, f) = prior.logprior_and_surface(raw).unwrap();
    lp + (&f * w).sum()
}

#[test]
fn gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for prior in all_priors() {
        let (n, m) = prior.surface_shape();
        for _ in 0..5 {
            let w = Array2::from_shape_fn((n, m), |_| rng.random_range(-1.0..1.0));
            let raw: Vec<f64> = (0..prior.dim()).map(|_| rng.random_range(-0.8..0.8)).collect();
            let fwd = prior.forward(&raw).unwrap();
            let mut grad = vec![0.0; prior.dim()];
            prior.backward(&fwd, w.view(), &mut grad).unwrap();
            for k in 0..prior.dim() {
                let h = 1e-5;
                let mut up = raw.clone();
                let mut dn = raw.clone();
                up[k] += h;
                dn[k] -= h;
                let fd = (objective(&prior, &w, &up) - objective(&prior, &w, &dn)) / (2.0 * h);
                let tol = 1e-6 * fd.abs().max(1.0);
                assert!((fd - grad[k]).abs() < tol, "{:?} coord {k}: fd {fd} vs {}", prior.kind(), grad[k]);
            }
        }
    }
}

#[test]
fn declared_hyperparameters() {
    let names: Vec<_> = all_priors().iter().map(|p| p.hyper_names().to_vec()).collect();
    assert_eq!(names[0], vec!["zeta", "gamma1", "gamma2"]);
    assert!(names[1].is_empty());
    assert_eq!(names[2], vec!["tau"]);
    assert_eq!(names[3], vec!["zeta", "gamma1", "gamma2"]);
    for p in all_priors() {
        assert_eq!(p.param_names().len(), p.dim());
        assert!(p.logprior_and_surface(&vec![0.0; p.dim() + 1]).is_err());
    }
}

#[test]
fn projected_gp_zero_latent_gives_flat_surface() {
    let p = SurfacePrior::projected_gp(basis(6, 4), basis(5, 3));
    let raw = vec![0.0; p.dim()];
    let (lp, f) = p.logprior_and_surface(&raw).unwrap();
    assert!(f.iter().all(|v| *v == 0.0));
    let mut raw2 = raw.clone();
    raw2[5] = 0.3;
    assert!(p.logprior_and_surface(&raw2).unwrap().0 < lp);
}

#[test]
fn bsplines_prior_is_iid_standard_normal() {
    let p = SurfacePrior::bsplines(basis(5, 3), basis(4, 2));
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let raw: Vec<f64> = (0..p.dim()).map(|_| rng.sample(StandardNormal)).collect();
    let normal = Normal::standard();
    let expected: f64 = raw.iter().map(|b| statrs::distribution::Continuous::ln_pdf(&normal, *b)).sum();
    let (lp, _) = p.logprior_and_surface(&raw).unwrap();
    assert!((lp - expected).abs() < 1e-12);
}

#[test]
fn psplines_constant_coefficients_have_no_difference_penalty() {
    let g = GmrfGraph::lattice(4, 3);
    assert_eq!(gmrf_pairwise_logdensity(&g, &[2.5; 12], 0.7), 0.0);
    let p = SurfacePrior::psplines(basis(5, 3), basis(4, 2));
    let mut raw = vec![0.0; p.dim()];
    let (flat, _) = p.logprior_and_surface(&raw).unwrap();
    raw[1..].iter_mut().for_each(|v| *v = 0.01);
    let (shifted, _) = p.logprior_and_surface(&raw).unwrap();
    // only the sum-to-zero term moves
    assert!((flat - shifted - 0.5 * (0.01f64 / 0.001).powi(2)).abs() < 1e-9);
}

#[test]
fn lattice_degrees() {
    let g = GmrfGraph::lattice(3, 3);
    assert_eq!(g.edges.len(), 12);
    assert_eq!(g.degree, vec![2, 3, 2, 3, 4, 3, 2, 3, 2]);
    let q = g.structure_matrix();
    assert_eq!(q, q.t());
}

#[test]
fn pairwise_form_matches_conditional_specification() {
    // The joint implied by beta_u | rest ~ N(mean of neighbours, tau^2 / deg_u)
    // is exp(-beta^T (D - A) beta / (2 tau^2)); compare log-density differences.
    let g = GmrfGraph::lattice(3, 3);
    let q = g.structure_matrix();
    let tau = 0.8;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a: Vec<f64> = (0..9).map(|_| rng.sample(StandardNormal)).collect();
    let b: Vec<f64> = (0..9).map(|_| rng.sample(StandardNormal)).collect();
    let joint = |x: &[f64]| {
        let v = ndarray::arr1(x);
        -v.dot(&q.dot(&v)) / (2.0 * tau * tau)
    };
    let lhs = gmrf_pairwise_logdensity(&g, &a, tau) - gmrf_pairwise_logdensity(&g, &b, tau);
    assert!((lhs - (joint(&a) - joint(&b))).abs() < 1e-12);
    // conditional means from the structure matrix are neighbour averages
    for u in 0..9 {
        let mean: f64 = -(0..9).filter(|&v| v != u).map(|v| q[[u, v]] * a[v]).sum::<f64>() / q[[u, u]];
        let nb: Vec<f64> = g
            .edges
            .iter()
            .filter_map(|&(x, y)| if x == u { Some(a[y]) } else if y == u { Some(a[x]) } else { None })
            .collect();
        assert!((mean - nb.iter().sum::<f64>() / nb.len() as f64).abs() < 1e-12);
    }
}

#[test]
fn projected_gp_marginals_match_dense_covariance() {
    let rows = basis(3, 2);
    let cols = basis(3, 2);
    let p = SurfacePrior::projected_gp(rows.clone(), cols.clone());
    let hyper = [0.2f64, 0.5f64.ln(), 1.5f64.ln()];
    let cov = p.coefficient_covariance(&[&hyper[..], &vec![0.0; 16][..]].concat()).unwrap().unwrap();
    let dense = projected_kernel(&rows, &cols, kron(cov.k2.view(), cov.k1.view()).view()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let draws = 10_000;
    let mut samples: Vec<Vec<f64>> = (0..9).map(|_| Vec::with_capacity(draws)).collect();
    for _ in 0..draws {
        let z: Vec<f64> = (0..16).map(|_| rng.sample(StandardNormal)).collect();
        let (_, f) = p.logprior_and_surface(&[&hyper[..], &z[..]].concat()).unwrap();
        for (k, v) in vec_columns(f.view()).into_iter().enumerate() {
            samples[k].push(v);
        }
    }
    for (k, s) in samples.iter_mut().enumerate() {
        let normal = Normal::new(0.0, dense[[k, k]].sqrt()).unwrap();
        s.sort_by(|a, b| a.total_cmp(b));
        let n = s.len() as f64;
        let d = s
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let c = normal.cdf(x);
                (c - i as f64 / n).abs().max(((i + 1) as f64 / n - c).abs())
            })
            .fold(0.0, f64::max);
        assert!(d < 1.628 / n.sqrt(), "cell {k}: KS {d}");
    }
}

#[test]
fn penalty_decomposition_identities() {
    let rows = basis(8, 3);
    let cols = basis(7, 2);
    let p = SurfacePrior::projected_gp(rows.clone(), cols.clone());
    let m = 20;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let beta = Array2::from_shape_fn((5, 4), |_| rng.sample::<f64, _>(StandardNormal));
    let f = rows.values.t().dot(&beta).dot(&cols.values);
    let eye = Array2::<f64>::eye(m);
    let t = penalty_decomposition(&p, f.view(), eye.view()).unwrap();
    assert!(t.penalty.abs() < 1e-12);
    let v = vec_columns(beta.view());
    assert!((t.data_fit - v.iter().map(|x| x * x).sum::<f64>()).abs() < 1e-8);
    let scaled = penalty_decomposition(&p, f.view(), (eye.clone() * 3.0).view()).unwrap();
    assert!((scaled.penalty - m as f64 * 3f64.ln()).abs() < 1e-10);

    // random SPD K_beta against a dense Gauss-Jordan inverse
    let a = Array2::from_shape_fn((m, m), |_| rng.sample::<f64, _>(StandardNormal));
    let k = a.dot(&a.t()) + &(eye * 0.5);
    let inv = gauss_jordan_inverse(&k);
    let vv = ndarray::arr1(&v);
    let direct = vv.dot(&inv.dot(&vv));
    let t = penalty_decomposition(&p, f.view(), k.view()).unwrap();
    assert!((t.data_fit - direct).abs() < 1e-8 * direct.abs());

    let singular = Array2::<f64>::zeros((m, m));
    assert!(penalty_decomposition(&p, f.view(), singular.view()).is_err());
    let other = SurfacePrior::bsplines(rows, cols);
    assert_eq!(other.kind(), PriorKind::StandardBSplines);
    assert!(penalty_decomposition(&other, f.view(), k.view()).is_err());
}

fn gauss_jordan_inverse(a: &Array2<f64>) -> Array2<f64> {
    let n = a.nrows();
    let mut m = a.clone();
    let mut inv = Array2::<f64>::eye(n);
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| m[[i, c]].abs().total_cmp(&m[[j, c]].abs())).unwrap();
        for j in 0..n {
            m.swap([c, j], [p, j]);
            inv.swap([c, j], [p, j]);
        }
        let d = m[[c, c]];
        for j in 0..n {
            m[[c, j]] /= d;
            inv[[c, j]] /= d;
        }
        for i in 0..n {
            if i != c {
                let f = m[[i, c]];
                for j in 0..n {
                    m[[i, j]] -= f * m[[c, j]];
                    inv[[i, j]] -= f * inv[[c, j]];
                }
            }
        }
    }
    inv
}
