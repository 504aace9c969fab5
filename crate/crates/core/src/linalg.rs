//! Small dense linear-algebra helpers shared by the fitting routines.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Singular values below this fraction of the largest are treated as zero.
pub const RANK_TOLERANCE: f64 = 1e-10;

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation with the `n - 1` denominator.
pub fn sample_std(values: &[f64]) -> f64 {
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (values.len() as f64 - 1.0)).sqrt()
}

pub fn rows_to_matrix(rows: &[Vec<f64>], cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j])
}

/// Design matrix with a leading column of ones.
pub fn design_with_intercept(rows: &[Vec<f64>], cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols + 1, |i, j| if j == 0 { 1.0 } else { rows[i][j - 1] })
}

/// Number of singular values above `RANK_TOLERANCE` times the largest.
pub fn effective_rank(singular_values: &DVector<f64>) -> usize {
    let max = singular_values.iter().cloned().fold(0.0_f64, f64::max);
    if max == 0.0 {
        return 0;
    }
    singular_values
        .iter()
        .filter(|&&s| s > RANK_TOLERANCE * max)
        .count()
}

/// Least-squares solution of `design * beta = y` through a thin SVD.
///
/// Fails with `SingularDesign` when the design does not have full column rank.
pub fn least_squares(design: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let cols = design.ncols();
    if design.nrows() < cols {
        return Err(Error::SingularDesign);
    }
    let svd = design.clone().svd(true, true);
    if effective_rank(&svd.singular_values) < cols {
        return Err(Error::SingularDesign);
    }
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let uty = u.transpose() * y;
    let scaled = DVector::from_iterator(
        cols,
        uty.iter().zip(svd.singular_values.iter()).map(|(c, s)| c / s),
    );
    Ok(v_t.transpose() * scaled)
}

/// Solve a symmetric positive-definite system, `None` when Cholesky fails.
pub fn solve_spd(a: DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    a.cholesky().map(|c| c.solve(b))
}
