use bsgp_core::splines::{eval_basis, extend_knots, tensor_surface, KnotVector};
use ndarray::Array2;
use proptest::prelude::*;

fn knots_strategy() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05f64..1.0, 2..8).prop_map(|gaps| {
        let mut acc = -0.3;
        gaps.iter()
            .map(|g| {
                acc += g;
                acc
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn nonnegative_partition_of_unity(knots in knots_strategy(), degree in 0usize..4, u in prop::collection::vec(0.0f64..=1.0, 1..30)) {
        let k = extend_knots(&knots, degree).unwrap();
        let (lo, hi) = (k.lower(), k.upper());
        let mut grid: Vec<f64> = u.iter().map(|t| lo + t * (hi - lo)).collect();
        grid.push(lo);
        grid.push(hi);
        grid.sort_by(|a, b| a.total_cmp(b));
        let b = eval_basis(&k, &grid).unwrap();
        prop_assert_eq!(b.basis_count(), knots.len() + degree - 1);
        prop_assert!(b.values.iter().all(|v| *v >= 0.0));
        for col in b.values.columns() {
            prop_assert!((col.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn local_support(knots in knots_strategy(), degree in 0usize..4, u in prop::collection::vec(0.0f64..1.0, 1..30)) {
        let k = extend_knots(&knots, degree).unwrap();
        let t = k.extended();
        let grid: Vec<f64> = u.iter().map(|s| k.lower() + s * (k.upper() - k.lower())).collect();
        let b = eval_basis(&k, &grid).unwrap();
        for i in 0..b.basis_count() {
            for (c, &x) in grid.iter().enumerate() {
                if x < t[i] || x > t[i + degree + 1] {
                    prop_assert_eq!(b.values[[i, c]], 0.0);
                }
            }
        }
    }

    #[test]
    fn tensor_surface_equals_double_sum(seed in prop::collection::vec(-2.0f64..2.0, 16), n in 2usize..6, m in 2usize..6) {
        let rows = eval_basis(&KnotVector::equispaced(0.0, 1.0, 2, 3).unwrap(), &grid(n)).unwrap();
        let cols = eval_basis(&KnotVector::equispaced(0.0, 1.0, 2, 3).unwrap(), &grid(m)).unwrap();
        let beta = Array2::from_shape_vec((4, 4), seed).unwrap();
        let s = tensor_surface(beta.view(), &rows, &cols).unwrap();
        for a in 0..n {
            for w in 0..m {
                let mut direct = 0.0;
                for i in 0..4 {
                    for j in 0..4 {
                        direct += beta[[i, j]] * rows.values[[i, a]] * cols.values[[j, w]];
                    }
                }
                prop_assert!((s[[a, w]] - direct).abs() < 1e-12);
            }
        }
    }
}

fn grid(n: usize) -> Vec<f64> {
    (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
}

#[test]
fn zero_and_constant_coefficients() {
    let b = eval_basis(&KnotVector::equispaced(0.0, 1.0, 5, 3).unwrap(), &grid(9)).unwrap();
    let zero = tensor_surface(Array2::zeros((7, 7)).view(), &b, &b).unwrap();
    assert!(zero.iter().all(|v| *v == 0.0));
    let c = tensor_surface(Array2::from_elem((7, 7), -1.7).view(), &b, &b).unwrap();
    assert!(c.iter().all(|v| (v + 1.7).abs() < 1e-12));
}

/// Jump of the one-sided second derivative of a cubic B-spline across each
/// interior knot, estimated with step `h`.
fn max_second_derivative_jump(h: f64) -> f64 {
    let k = KnotVector::equispaced(0.0, 1.0, 5, 3).unwrap();
    let mut worst: f64 = 0.0;
    for &knot in &k.interior()[1..4] {
        let pts: Vec<f64> = (-3..=3).map(|s| knot + s as f64 * h).collect();
        let b = eval_basis(&k, &pts).unwrap();
        for i in 0..b.basis_count() {
            let v = b.values.row(i);
            let left = (v[0] - 2.0 * v[1] + v[2]) / (h * h);
            let right = (v[4] - 2.0 * v[5] + v[6]) / (h * h);
            worst = worst.max((left - right).abs());
        }
    }
    worst
}

#[test]
fn cubic_second_derivative_is_continuous_at_knots() {
    let coarse = max_second_derivative_jump(1e-2);
    let fine = max_second_derivative_jump(5e-3);
    let finer = max_second_derivative_jump(2.5e-3);
    assert!(fine < 0.6 * coarse, "{coarse} -> {fine}");
    assert!(finer < 0.6 * fine, "{fine} -> {finer}");
}
