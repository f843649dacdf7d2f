use crate::DensityError;

/// A differentiable log density over an unconstrained real vector.
///
/// Implementations must be deterministic: the same input always yields the
/// same value and gradient. `Sync` is required because chains share the
/// target across worker threads.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;

    /// Returns the log density at `x` and writes its gradient into `grad`.
    fn logp_and_grad(&self, x: &[f64], grad: &mut [f64]) -> Result<f64, DensityError>;

    /// Names of the constrained-scale quantities reported by [`constrain`](Self::constrain).
    fn param_names(&self) -> Vec<String> {
        (0..self.dim()).map(|i| format!("x[{i}]")).collect()
    }

    /// Maps an unconstrained draw to the quantities that diagnostics are computed on.
    fn constrain(&self, x: &[f64]) -> Vec<f64> {
        x.to_vec()
    }
}
