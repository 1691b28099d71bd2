//! Small dense linear-algebra helpers shared by the density code.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Relative tolerance used when checking a matrix for symmetry.
const SYMMETRY_TOL: f64 = 1e-9;

pub(crate) fn cholesky(matrix: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    if !matrix.is_square() {
        return Err(Error::Param(format!("{what} must be square")));
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::Param(format!("{what} has non-finite entries")));
    }
    let scale = matrix.amax().max(1.0);
    let n = matrix.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (matrix[(i, j)] - matrix[(j, i)]).abs() > SYMMETRY_TOL * scale {
                return Err(Error::Param(format!("{what} is not symmetric")));
            }
        }
    }
    Cholesky::new(matrix.clone())
        .ok_or_else(|| Error::Param(format!("{what} is not positive-definite")))
}

/// `log det A` from the Cholesky factor of `A`.
pub(crate) fn chol_log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

/// `(x - mean)ᵀ A⁻¹ (x - mean)` given the Cholesky factor of `A`.
pub(crate) fn mahalanobis_sq(chol: &Cholesky<f64, Dyn>, x: &[f64], mean: &DVector<f64>) -> f64 {
    let diff = DVector::from_iterator(x.len(), x.iter().zip(mean.iter()).map(|(a, b)| a - b));
    let l = chol.l_dirty();
    let z = l
        .solve_lower_triangular(&diff)
        .expect("Cholesky factor has a positive diagonal");
    z.norm_squared()
}

/// Largest eigenvalue of a symmetric matrix.
pub(crate) fn spectral_norm_sym(matrix: &DMatrix<f64>) -> f64 {
    matrix
        .clone()
        .symmetric_eigenvalues()
        .iter()
        .fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub(crate) fn symmetrize(matrix: &mut DMatrix<f64>) {
    let n = matrix.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (matrix[(i, j)] + matrix[(j, i)]);
            matrix[(i, j)] = avg;
            matrix[(j, i)] = avg;
        }
    }
}

/// Sample covariance (maximum-likelihood, divisor `n`) of a set of rows.
pub(crate) fn mean_and_covariance<'a, I>(dim: usize, points: I) -> (usize, DVector<f64>, DMatrix<f64>)
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut count = 0usize;
    let mut sum = DVector::zeros(dim);
    let mut scatter = DMatrix::zeros(dim, dim);
    for p in points {
        let v = DVector::from_column_slice(p);
        scatter.ger(1.0, &v, &v, 1.0);
        sum += v;
        count += 1;
    }
    if count == 0 {
        return (0, sum, scatter);
    }
    let n = count as f64;
    let mean = sum / n;
    let mut cov = scatter / n - &mean * mean.transpose();
    symmetrize(&mut cov);
    (count, mean, cov)
}
