//! Small dense linear-algebra kernels: Cholesky factorisation, its reverse-mode
//! derivative and triangular solves.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

/// Lower Cholesky factor of a symmetric positive definite matrix.
///
/// On breakdown the error reports the failing pivot, which is an upper bound
/// on the smallest eigenvalue of the input.
pub fn cholesky(a: ArrayView2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Validation(format!("cholesky needs a square matrix, got {}x{}", n, a.ncols())));
    }
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::Numerical(format!(
                "Cholesky failed at pivot {j} of {n}; minimum eigenvalue estimate <= {d:.3e}"
            )));
        }
        let djj = d.sqrt();
        l[[j, j]] = djj;
        for i in (j + 1)..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / djj;
        }
    }
    Ok(l)
}

/// Inverse of a lower-triangular matrix.
pub fn lower_inverse(l: ArrayView2<f64>) -> Array2<f64> {
    let n = l.nrows();
    let mut inv = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        inv[[j, j]] = 1.0 / l[[j, j]];
        for i in (j + 1)..n {
            let mut s = 0.0;
            for k in j..i {
                s += l[[i, k]] * inv[[k, j]];
            }
            inv[[i, j]] = -s / l[[i, i]];
        }
    }
    inv
}

/// Solves `L x = b` for lower-triangular `L`.
pub fn solve_lower(l: ArrayView2<f64>, b: &[f64]) -> Vec<f64> {
    let n = l.nrows();
    let mut x = b.to_vec();
    for i in 0..n {
        let mut s = x[i];
        for k in 0..i {
            s -= l[[i, k]] * x[k];
        }
        x[i] = s / l[[i, i]];
    }
    x
}

/// `log|A|` from the Cholesky factor of `A`.
pub fn log_det_from_cholesky(l: ArrayView2<f64>) -> f64 {
    2.0 * l.diag().iter().map(|v| v.ln()).sum::<f64>()
}

/// Reverse-mode derivative of `L = chol(A)`.
///
/// Given the adjoint `l_bar` of the factor, returns the symmetric adjoint of
/// `A` such that `dLoss = sum(A_bar * dA)` for any symmetric perturbation.
pub fn cholesky_backward(l: ArrayView2<f64>, l_bar: ArrayView2<f64>) -> Array2<f64> {
    let n = l.nrows();
    let x = l.t().dot(&l_bar);
    let mut s = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        s[[i, i]] = 0.5 * x[[i, i]];
        for j in 0..i {
            s[[i, j]] = 0.5 * x[[i, j]];
            s[[j, i]] = 0.5 * x[[i, j]];
        }
    }
    let linv = lower_inverse(l);
    linv.t().dot(&s).dot(&linv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn spd() -> Array2<f64> {
        array![[4.0, 1.2, 0.4], [1.2, 3.0, -0.5], [0.4, -0.5, 2.0]]
    }

    #[test]
    fn round_trip() {
        let a = spd();
        let l = cholesky(a.view()).unwrap();
        let back = l.dot(&l.t());
        for (x, y) in back.iter().zip(a.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!((log_det_from_cholesky(l.view()) - 19.16_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn indefinite_reports_pivot() {
        let a = array![[1.0, 2.0], [2.0, 1.0]];
        let err = cholesky(a.view()).unwrap_err();
        assert!(err.to_string().contains("minimum eigenvalue estimate <= -3.000e0"));
    }

    #[test]
    fn inverse_and_solve() {
        let l = cholesky(spd().view()).unwrap();
        let inv = lower_inverse(l.view());
        let eye = l.dot(&inv);
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((eye[[i, j]] - e).abs() < 1e-12);
            }
        }
        let x = solve_lower(l.view(), &[1.0, 2.0, 3.0]);
        let b = l.dot(&ndarray::arr1(&x));
        assert!((b[2] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let a = spd();
        let w = array![[0.3, 0.0, 0.0], [-1.1, 0.7, 0.0], [0.5, 0.2, -0.4]];
        let loss = |a: &Array2<f64>| (cholesky(a.view()).unwrap() * &w).sum();
        let abar = cholesky_backward(cholesky(a.view()).unwrap().view(), w.view());
        let h = 1e-6;
        for i in 0..3 {
            for j in 0..=i {
                let mut ap = a.clone();
                let mut am = a.clone();
                ap[[i, j]] += h;
                am[[i, j]] -= h;
                if i != j {
                    ap[[j, i]] += h;
                    am[[j, i]] -= h;
                }
                let fd = (loss(&ap) - loss(&am)) / (2.0 * h);
                let an = if i == j { abar[[i, i]] } else { abar[[i, j]] + abar[[j, i]] };
                assert!((fd - an).abs() < 1e-7, "({i},{j}) fd {fd} an {an}");
            }
        }
    }
}
