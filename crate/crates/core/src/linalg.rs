//! Dense linear-algebra helpers shared by the model and discovery code.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column statistics used to standardize a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardization {
    /// Population mean and standard deviation of every column.
    pub fn fit(data: &DMatrix<f64>) -> Result<Self> {
        let n = data.nrows();
        if n == 0 {
            return Err(Error::EmptyData);
        }
        let mut mean = Vec::with_capacity(data.ncols());
        let mut std = Vec::with_capacity(data.ncols());
        for (j, col) in data.column_iter().enumerate() {
            let m = col.sum() / n as f64;
            let v = col.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n as f64;
            if !(v > 0.0) {
                return Err(Error::DegenerateColumn(j));
            }
            mean.push(m);
            std.push(v.sqrt());
        }
        Ok(Self { mean, std })
    }

    pub fn apply(&self, data: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = data.clone();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            let (m, s) = (self.mean[j], self.std[j]);
            col.apply(|x| *x = (*x - m) / s);
        }
        out
    }

    pub fn invert(&self, data: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = data.clone();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            let (m, s) = (self.mean[j], self.std[j]);
            col.apply(|x| *x = *x * s + m);
        }
        out
    }
}

/// Standardizes every column to zero mean and unit (population) variance.
pub fn standardize(data: &DMatrix<f64>) -> Result<(DMatrix<f64>, Standardization)> {
    let stats = Standardization::fit(data)?;
    Ok((stats.apply(data), stats))
}

/// Inverse of a unit upper-triangular matrix by back-substitution.
pub fn invert_unit_upper(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut inv = DMatrix::<f64>::identity(n, n);
    // Column j of the inverse solves A x = e_j.
    for j in 0..n {
        for i in (0..j).rev() {
            let mut acc = 0.0;
            for k in (i + 1)..=j {
                acc += a[(i, k)] * inv[(k, j)];
            }
            inv[(i, j)] = -acc;
        }
    }
    inv
}

/// `P W P^T` for the permutation listing old indices in new position order.
pub fn permute_square(w: &DMatrix<f64>, order: &[usize]) -> DMatrix<f64> {
    let n = order.len();
    DMatrix::from_fn(n, n, |i, j| w[(order[i], order[j])])
}

pub fn permute_rows(m: &DMatrix<f64>, order: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(order.len(), m.ncols(), |i, j| m[(order[i], j)])
}

pub fn permute_cols(m: &DMatrix<f64>, order: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), order.len(), |i, j| m[(i, order[j])])
}

/// Inverse permutation: `inv[order[i]] = i`.
pub fn invert_permutation(order: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; order.len()];
    for (i, &o) in order.iter().enumerate() {
        inv[o] = i;
    }
    inv
}

/// Minimum-norm least-squares solution of `x * b = y` (via SVD).
pub fn lstsq(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.nrows() != y.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "design has {} rows, targets have {}",
            x.nrows(),
            y.nrows()
        )));
    }
    let svd = x.clone().svd(true, true);
    let eps = f64::EPSILON * (x.nrows().max(x.ncols()) as f64) * svd.singular_values.max();
    svd.solve(y, eps)
        .map_err(|e| Error::InvalidConfig(format!("least squares failed: {e}")))
}

/// Solves the normal equations `C_pp beta = c_pt` for a symmetric positive
/// (semi)definite `C_pp`. Falls back to a ridge of `ridge` on the diagonal when
/// the Cholesky factorization fails; the flag reports the fallback.
pub fn solve_normal_equations(
    gram: &DMatrix<f64>,
    rhs: &DVector<f64>,
    ridge: f64,
) -> (DVector<f64>, bool) {
    if gram.nrows() == 0 {
        return (DVector::zeros(0), false);
    }
    if let Some(chol) = gram.clone().cholesky() {
        let sol = chol.solve(rhs);
        if sol.iter().all(|v| v.is_finite()) {
            return (sol, false);
        }
    }
    let mut g = gram.clone();
    let mut lambda = ridge;
    loop {
        for i in 0..g.nrows() {
            g[(i, i)] = gram[(i, i)] + lambda;
        }
        if let Some(chol) = g.clone().cholesky() {
            return (chol.solve(rhs), true);
        }
        lambda *= 10.0;
    }
}
