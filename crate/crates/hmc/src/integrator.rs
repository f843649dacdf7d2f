//! Leapfrog integration under a diagonal Euclidean metric.

use crate::{DensityError, LogDensity};

/// Position, momentum and cached gradient of one point in phase space.
#[derive(Debug, Clone)]
pub struct PhasePoint {
    pub position: Vec<f64>,
    pub momentum: Vec<f64>,
    pub grad: Vec<f64>,
    pub logp: f64,
}

impl PhasePoint {
    /// Evaluates the target at `position`; momentum starts at zero.
    pub fn new<T: LogDensity + ?Sized>(target: &T, position: Vec<f64>) -> Result<Self, DensityError> {
        let mut grad = vec![0.0; position.len()];
        let logp = target.logp_and_grad(&position, &mut grad)?;
        let momentum = vec![0.0; position.len()];
        Ok(Self {
            position,
            momentum,
            grad,
            logp,
        })
    }

    pub fn kinetic_energy(&self, inv_mass: &[f64]) -> f64 {
        0.5 * self
            .momentum
            .iter()
            .zip(inv_mass)
            .map(|(p, m)| p * p * m)
            .sum::<f64>()
    }

    /// Total energy `-log p(x) + p' M^{-1} p / 2`.
    pub fn hamiltonian(&self, inv_mass: &[f64]) -> f64 {
        -self.logp + self.kinetic_energy(inv_mass)
    }

    pub fn is_finite(&self) -> bool {
        self.logp.is_finite() && self.grad.iter().all(|g| g.is_finite())
    }

    pub fn negate_momentum(&mut self) {
        self.momentum.iter_mut().for_each(|p| *p = -*p);
    }
}

/// Advances `point` by one leapfrog step of size `step`.
pub fn leapfrog<T: LogDensity + ?Sized>(
    target: &T,
    point: &mut PhasePoint,
    step: f64,
    inv_mass: &[f64],
) -> Result<(), DensityError> {
    let half = 0.5 * step;
    for (p, g) in point.momentum.iter_mut().zip(&point.grad) {
        *p += half * g;
    }
    for ((x, p), m) in point.position.iter_mut().zip(&point.momentum).zip(inv_mass) {
        *x += step * p * m;
    }
    point.logp = target.logp_and_grad(&point.position, &mut point.grad)?;
    for (p, g) in point.momentum.iter_mut().zip(&point.grad) {
        *p += half * g;
    }
    Ok(())
}

/// Runs `n_steps` leapfrog steps, stopping early if the trajectory leaves
/// the region where the density is finite.
pub fn integrate<T: LogDensity + ?Sized>(
    target: &T,
    point: &mut PhasePoint,
    step: f64,
    n_steps: usize,
    inv_mass: &[f64],
) -> Result<(), DensityError> {
    for _ in 0..n_steps {
        leapfrog(target, point, step, inv_mass)?;
        if !point.is_finite() {
            return Err(DensityError::Numerical("non-finite density along trajectory".into()));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Gaussian2 {
        precision: [[f64; 2]; 2],
    }

    impl LogDensity for Gaussian2 {
        fn dim(&self) -> usize {
            2
        }
        fn logp_and_grad(&self, x: &[f64], grad: &mut [f64]) -> Result<f64, DensityError> {
            let q = self.precision;
            let g0 = q[0][0] * x[0] + q[0][1] * x[1];
            let g1 = q[1][0] * x[0] + q[1][1] * x[1];
            grad[0] = -g0;
            grad[1] = -g1;
            Ok(-0.5 * (x[0] * g0 + x[1] * g1))
        }
    }

    fn target() -> Gaussian2 {
        Gaussian2 {
            precision: [[2.0, 0.6], [0.6, 1.0]],
        }
    }

    #[test]
    fn reversible_under_momentum_flip() {
        let t = target();
        let inv_mass = [1.0, 0.7];
        let mut point = PhasePoint::new(&t, vec![0.3, -1.2]).unwrap();
        point.momentum = vec![0.9, 0.4];
        let start = point.clone();
        integrate(&t, &mut point, 0.1, 25, &inv_mass).unwrap();
        point.negate_momentum();
        integrate(&t, &mut point, 0.1, 25, &inv_mass).unwrap();
        for (a, b) in point.position.iter().zip(&start.position) {
            assert!((a - b).abs() < 1e-8);
        }
        for (a, b) in point.momentum.iter().zip(&start.momentum) {
            assert!((a + b).abs() < 1e-8);
        }
    }

    #[test]
    fn energy_error_is_second_order() {
        let t = target();
        let inv_mass = [1.0, 1.0];
        let drift = |step: f64| {
            let mut total = 0.0;
            for k in 0..20 {
                let a = k as f64 * 0.31;
                let mut point = PhasePoint::new(&t, vec![a.cos(), a.sin()]).unwrap();
                point.momentum = vec![(1.7 * a).sin(), (0.4 * a).cos()];
                let h0 = point.hamiltonian(&inv_mass);
                let n = (1.0 / step).round() as usize;
                integrate(&t, &mut point, step, n, &inv_mass).unwrap();
                total += (point.hamiltonian(&inv_mass) - h0).abs();
            }
            total / 20.0
        };
        let coarse = drift(0.2);
        let fine = drift(0.1);
        assert!(coarse / fine >= 3.0, "ratio {}", coarse / fine);
    }
}
