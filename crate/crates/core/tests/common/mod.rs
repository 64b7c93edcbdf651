#![allow(dead_code)]

use rand::Rng as _;
use rand_distr::StandardNormal;
use refactor_core::rng::rng_from_seed;
use refactor_core::DenseMatrix;

pub fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    let mut rng = rng_from_seed(seed);
    DenseMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Product of two Gaussian factors, so rank exactly `rank` almost surely.
pub fn random_rank(rows: usize, cols: usize, rank: usize, seed: u64) -> DenseMatrix {
    let left = gaussian_matrix(rows, rank, seed);
    let right = gaussian_matrix(rank, cols, seed.wrapping_add(0x9e37));
    left.matmul(&right).unwrap()
}

/// Straight-line `sum_{i,j} (a_ij - b_ij)^2`.
pub fn loop_sq_dist(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    let mut total = 0.0;
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            let d = a.get(i, j) - b.get(i, j);
            total += d * d;
        }
    }
    total
}

pub fn max_abs_diff(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// `sum_i y_i u_i v_i^T` over the first `rank` triplets, by explicit loops.
pub fn reconstruct(f: &refactor_core::SvdFactors, rank: usize) -> DenseMatrix {
    DenseMatrix::from_fn(f.rows(), f.cols(), |i, j| {
        (0..rank)
            .map(|k| f.singular_values()[k] * f.left(k)[i] * f.right(k)[j])
            .sum()
    })
}
