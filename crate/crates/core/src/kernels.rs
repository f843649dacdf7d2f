//! Squared-exponential kernels and Kronecker-structured covariance algebra.

use std::cell::Cell;

use ndarray::{Array2, ArrayView2};

use crate::error::{validation, Result};
use crate::linalg::cholesky;
use crate::splines::BasisMatrix;

/// Diagonal inflation added before every factorisation.
pub const JITTER: f64 = 1e-9;

thread_local! {
    static KERNEL_EVALS: Cell<u64> = const { Cell::new(0) };
}

/// Number of scalar kernel evaluations performed on this thread.
pub fn kernel_evaluations() -> u64 {
    KERNEL_EVALS.with(|c| c.get())
}

pub fn reset_kernel_evaluations() {
    KERNEL_EVALS.with(|c| c.set(0));
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SqExpKernel {
    variance: f64,
    lengthscale: f64,
}

impl SqExpKernel {
    /// `variance` is the squared scale `zeta^2`.
    pub fn new(variance: f64, lengthscale: f64) -> Result<Self> {
        if !(variance > 0.0 && variance.is_finite()) {
            return validation(format!("kernel variance must be positive, got {variance}"));
        }
        if !(lengthscale > 0.0 && lengthscale.is_finite()) {
            return validation(format!("kernel lengthscale must be positive, got {lengthscale}"));
        }
        Ok(Self { variance, lengthscale })
    }

    pub fn from_scale(zeta: f64, lengthscale: f64) -> Result<Self> {
        Self::new(zeta * zeta, lengthscale)
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn lengthscale(&self) -> f64 {
        self.lengthscale
    }

    pub fn eval(&self, a: f64, b: f64) -> f64 {
        let r = (a - b) / self.lengthscale;
        self.variance * (-0.5 * r * r).exp()
    }
}

/// Cross-covariance matrix `k(a_i, b_j)`.
pub fn sqexp(a: &[f64], b: &[f64], kernel: &SqExpKernel) -> Array2<f64> {
    KERNEL_EVALS.with(|c| c.set(c.get() + (a.len() * b.len()) as u64));
    Array2::from_shape_fn((a.len(), b.len()), |(i, j)| kernel.eval(a[i], b[j]))
}

/// `sqexp(x, x)` plus [`JITTER`] on the diagonal.
pub fn sqexp_jittered(x: &[f64], kernel: &SqExpKernel) -> Array2<f64> {
    let mut k = sqexp(x, x, kernel);
    k.diag_mut().iter_mut().for_each(|v| *v += JITTER);
    k
}

/// Computes `(A ⊗ B) vec(V)` reshaped to `r x p`, i.e. `B V A^T`.
pub fn kron_mvprod(a: ArrayView2<f64>, b: ArrayView2<f64>, v: ArrayView2<f64>) -> Result<Array2<f64>> {
    if b.ncols() != v.nrows() || a.ncols() != v.ncols() {
        return validation(format!(
            "kron_mvprod shapes do not conform: A {:?}, B {:?}, V {:?}",
            a.dim(),
            b.dim(),
            v.dim()
        ));
    }
    Ok(a.dot(&b.dot(&v).t()).reversed_axes())
}

/// Dense Kronecker product; only for small matrices and tests.
pub fn kron(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Array2<f64> {
    let (p, q) = a.dim();
    let (r, s) = b.dim();
    Array2::from_shape_fn((p * r, q * s), |(i, j)| a[[i / r, j / s]] * b[[i % r, j % s]])
}

/// Column-stacked vectorisation.
pub fn vec_columns(m: ArrayView2<f64>) -> Vec<f64> {
    m.t().iter().copied().collect()
}

/// Inverse of [`vec_columns`].
pub fn unvec_columns(v: &[f64], rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |(i, j)| v[j * rows + i])
}

/// Dense covariance `(B2 ⊗ B1)^T K_beta (B2 ⊗ B1)` of the projected surface.
pub fn projected_kernel(rows: &BasisMatrix, cols: &BasisMatrix, k_beta: ArrayView2<f64>) -> Result<Array2<f64>> {
    let m = rows.basis_count() * cols.basis_count();
    if k_beta.dim() != (m, m) {
        return validation(format!("K_beta is {:?}, expected {m} x {m}", k_beta.dim()));
    }
    let p = kron(cols.values.view(), rows.values.view());
    Ok(p.t().dot(&k_beta).dot(&p))
}

/// Non-centred draw `L1 Z L2^T`, whose column-stacked covariance is `K2 ⊗ K1`.
pub fn sample_grid_gp(l1: ArrayView2<f64>, l2: ArrayView2<f64>, z: ArrayView2<f64>) -> Result<Array2<f64>> {
    if z.dim() != (l1.nrows(), l2.nrows()) {
        return validation(format!(
            "latent matrix is {:?}, factors need {} x {}",
            z.dim(),
            l1.nrows(),
            l2.nrows()
        ));
    }
    kron_mvprod(l2, l1, z)
}

/// Separable covariance `K2 ⊗ K1` kept in factored form.
#[derive(Debug, Clone)]
pub struct KroneckerCov {
    pub k1: Array2<f64>,
    pub k2: Array2<f64>,
    pub l1: Array2<f64>,
    pub l2: Array2<f64>,
}

impl KroneckerCov {
    /// Builds both factors from 1-D coordinates; `O(n^2 + m^2)` kernel evaluations.
    pub fn from_axes(rows: &[f64], cols: &[f64], k_rows: &SqExpKernel, k_cols: &SqExpKernel) -> Result<Self> {
        Self::new(sqexp_jittered(rows, k_rows), sqexp_jittered(cols, k_cols))
    }

    pub fn new(k1: Array2<f64>, k2: Array2<f64>) -> Result<Self> {
        let l1 = cholesky(k1.view())?;
        let l2 = cholesky(k2.view())?;
        Ok(Self { k1, k2, l1, l2 })
    }

    pub fn sample(&self, z: ArrayView2<f64>) -> Result<Array2<f64>> {
        sample_grid_gp(self.l1.view(), self.l2.view(), z)
    }

    pub fn dense(&self) -> Array2<f64> {
        kron(self.k2.view(), self.k1.view())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn unit_distance_value() {
        let k = SqExpKernel::from_scale(1.0, 1.0).unwrap();
        let m = sqexp(&[0.0, 1.0], &[0.0], &k);
        assert_eq!(m[[0, 0]], 1.0);
        assert!((m[[1, 0]] - 0.606_530_659_712_633_4).abs() < 1e-15);
        assert!(sqexp(&[0.0], &[1e3], &k)[[0, 0]] < 1e-300);
    }

    #[test]
    fn rejects_non_positive() {
        assert!(SqExpKernel::new(0.0, 1.0).is_err());
        assert!(SqExpKernel::new(1.0, -1.0).is_err());
    }

    #[test]
    fn identity_factors() {
        let v = array![[1.0, 2.0], [3.0, 4.0]];
        let eye = Array2::<f64>::eye(2);
        assert_eq!(kron_mvprod(eye.view(), eye.view(), v.view()).unwrap(), v);
    }

    #[test]
    fn vec_round_trip() {
        let m = array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]];
        let v = vec_columns(m.view());
        assert_eq!(v, vec![1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
        assert_eq!(unvec_columns(&v, 2, 3), m);
    }

    #[test]
    fn shape_mismatch() {
        let a = Array2::<f64>::zeros((2, 3));
        let b = Array2::<f64>::zeros((2, 2));
        let v = Array2::<f64>::zeros((2, 2));
        assert!(kron_mvprod(a.view(), b.view(), v.view()).is_err());
    }

    #[test]
    fn counter_tracks_factored_construction() {
        reset_kernel_evaluations();
        let rows: Vec<f64> = (0..7).map(f64::from).collect();
        let cols: Vec<f64> = (0..5).map(f64::from).collect();
        let k = SqExpKernel::from_scale(1.0, 2.0).unwrap();
        KroneckerCov::from_axes(&rows, &cols, &k, &k).unwrap();
        assert_eq!(kernel_evaluations(), 49 + 25);
    }
}
