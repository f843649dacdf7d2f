//! B-spline bases built with the Cox–de Boor recursion and tensor-product surfaces.

use ndarray::{Array2, ArrayView2};

use crate::error::{validation, Result};

/// Interior knots plus the boundary-padded sequence used by the recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct KnotVector {
    interior: Vec<f64>,
    degree: usize,
    extended: Vec<f64>,
}

impl KnotVector {
    pub fn interior(&self) -> &[f64] {
        &self.interior
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// The padded sequence of length `2 * degree + K`.
    pub fn extended(&self) -> &[f64] {
        &self.extended
    }

    pub fn basis_count(&self) -> usize {
        self.interior.len() + self.degree - 1
    }

    pub fn lower(&self) -> f64 {
        self.interior[0]
    }

    pub fn upper(&self) -> f64 {
        self.interior[self.interior.len() - 1]
    }

    /// `count` equally spaced knots covering `[lower, upper]` inclusive.
    pub fn equispaced(lower: f64, upper: f64, count: usize, degree: usize) -> Result<Self> {
        if count < 2 {
            return validation(format!("need at least 2 knots, got {count}"));
        }
        if !(upper > lower) {
            return validation(format!("knot span [{lower}, {upper}] is empty"));
        }
        let step = (upper - lower) / (count - 1) as f64;
        let mut interior: Vec<f64> = (0..count).map(|i| lower + step * i as f64).collect();
        interior[count - 1] = upper;
        extend_knots(&interior, degree)
    }
}

/// Pads `interior` with `degree` copies of its minimum and maximum.
pub fn extend_knots(interior: &[f64], degree: usize) -> Result<KnotVector> {
    if interior.len() < 2 {
        return validation(format!("need at least 2 interior knots, got {}", interior.len()));
    }
    if interior.iter().any(|k| !k.is_finite()) {
        return validation("knots must be finite");
    }
    if let Some(w) = interior.windows(2).position(|w| w[1] <= w[0]) {
        return validation(format!(
            "interior knots must be strictly increasing; knot {} ({}) follows {}",
            w + 1,
            interior[w + 1],
            interior[w]
        ));
    }
    let lo = interior[0];
    let hi = interior[interior.len() - 1];
    let mut extended = Vec::with_capacity(interior.len() + 2 * degree);
    extended.extend(std::iter::repeat_n(lo, degree));
    extended.extend_from_slice(interior);
    extended.extend(std::iter::repeat_n(hi, degree));
    Ok(KnotVector { interior: interior.to_vec(), degree, extended })
}

/// Basis functions evaluated on a grid, one row per basis function.
#[derive(Debug, Clone)]
pub struct BasisMatrix {
    pub values: Array2<f64>,
    pub grid: Vec<f64>,
    pub knots: KnotVector,
}

impl BasisMatrix {
    pub fn basis_count(&self) -> usize {
        self.values.nrows()
    }

    pub fn grid_size(&self) -> usize {
        self.values.ncols()
    }
}

/// Evaluates every degree-`d` B-spline of `knots` at each grid point.
///
/// Intervals are half-open, so at the right end of the domain the recursion
/// yields zero everywhere; the last basis function is set to one there.
pub fn eval_basis(knots: &KnotVector, grid: &[f64]) -> Result<BasisMatrix> {
    let (lo, hi) = (knots.lower(), knots.upper());
    if let Some(x) = grid.iter().find(|x| !(**x >= lo && **x <= hi)) {
        return validation(format!("grid point {x} outside knot span [{lo}, {hi}]"));
    }
    let t = knots.extended();
    let d = knots.degree();
    let count = knots.basis_count();
    let mut values = Array2::<f64>::zeros((count, grid.len()));
    let mut work = vec![0.0; t.len()];
    for (col, &x) in grid.iter().enumerate() {
        let pieces = t.len() - 1;
        for (k, w) in work.iter_mut().enumerate().take(pieces) {
            *w = if t[k] <= x && x < t[k + 1] { 1.0 } else { 0.0 };
        }
        for order in 2..=(d + 1) {
            for k in 0..(t.len() - order) {
                let mut b = 0.0;
                let span1 = t[k + order - 1] - t[k];
                if span1 != 0.0 {
                    b += (x - t[k]) / span1 * work[k];
                }
                let span2 = t[k + order] - t[k + 1];
                if span2 != 0.0 {
                    b += (1.0 - (x - t[k + 1]) / span2) * work[k + 1];
                }
                work[k] = b;
            }
        }
        for i in 0..count {
            values[[i, col]] = work[i];
        }
        if x == hi {
            values[[count - 1, col]] = 1.0;
        }
    }
    Ok(BasisMatrix { values, grid: grid.to_vec(), knots: knots.clone() })
}

/// `B1^T beta B2`: the tensor-product surface over `rows.grid x cols.grid`.
pub fn tensor_surface(beta: ArrayView2<f64>, rows: &BasisMatrix, cols: &BasisMatrix) -> Result<Array2<f64>> {
    if beta.dim() != (rows.basis_count(), cols.basis_count()) {
        return validation(format!(
            "coefficient matrix is {:?} but bases have {} x {} functions",
            beta.dim(),
            rows.basis_count(),
            cols.basis_count()
        ));
    }
    Ok(rows.values.t().dot(&beta).dot(&cols.values))
}
