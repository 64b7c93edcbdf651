//! Dense matrices, SVD and truncated reconstruction.

mod io;
mod matrix;
mod svd;

pub use io::{read_matrix, read_matrix_file, write_matrix, write_matrix_file};
pub use matrix::DenseMatrix;
pub use svd::{svd, truncate, SvdFactors, MAX_SWEEPS, SVD_TOLERANCE};

use crate::error::Result;

pub fn frobenius_sq(a: &DenseMatrix) -> f64 {
    a.frobenius_sq()
}

pub fn column(a: &DenseMatrix, j: usize) -> Result<Vec<f64>> {
    a.column(j)
}

pub fn column_inner(a: &DenseMatrix, b: &DenseMatrix, j: usize) -> Result<f64> {
    a.column_inner(b, j)
}

pub fn column_norm(a: &DenseMatrix, j: usize) -> Result<f64> {
    a.column_norm(j)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
