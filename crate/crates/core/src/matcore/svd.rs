use crate::error::{invalid_argument, Error, Result};

use super::DenseMatrix;

/// Relative size below which a bidiagonal off-diagonal entry counts as zero.
pub const SVD_TOLERANCE: f64 = 1e-12;

/// Sweep budget per singular value; the total implicit-shift iteration cap is
/// `10 * min(m, n) * MAX_SWEEPS`.
pub const MAX_SWEEPS: usize = 30;

/// Thin SVD `A = sum_i s_i u_i v_i^T` with singular values in non-increasing order.
///
/// Within each triplet the entry of `u_i` with the largest magnitude is
/// non-negative (first such index on ties), which makes the factors a
/// deterministic function of the input matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SvdFactors {
    rows: usize,
    cols: usize,
    singular_values: Vec<f64>,
    left_vectors: Vec<Vec<f64>>,
    right_vectors: Vec<Vec<f64>>,
}

impl SvdFactors {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Number of triplets, `min(m, n)`.
    pub fn len(&self) -> usize {
        self.singular_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.singular_values.is_empty()
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    pub fn left_vectors(&self) -> &[Vec<f64>] {
        &self.left_vectors
    }

    pub fn right_vectors(&self) -> &[Vec<f64>] {
        &self.right_vectors
    }

    pub fn left(&self, i: usize) -> &[f64] {
        &self.left_vectors[i]
    }

    pub fn right(&self, i: usize) -> &[f64] {
        &self.right_vectors[i]
    }

    /// Rank-`rank` truncation `sum_{i <= rank} s_i u_i v_i^T`.
    pub fn truncate(&self, rank: usize) -> Result<DenseMatrix> {
        if rank == 0 || rank > self.len() {
            return Err(invalid_argument(format!(
                "truncation rank {rank} outside 1..={}",
                self.len()
            )));
        }
        let mut data = vec![0.0; self.rows * self.cols];
        for i in 0..rank {
            let s = self.singular_values[i];
            let v = &self.right_vectors[i];
            for (row, &u) in data.chunks_exact_mut(self.cols).zip(&self.left_vectors[i]) {
                let su = s * u;
                for (out, &vj) in row.iter_mut().zip(v) {
                    *out += su * vj;
                }
            }
        }
        DenseMatrix::new(self.rows, self.cols, data)
    }
}

/// Free-function form of [`SvdFactors::truncate`].
pub fn truncate(factors: &SvdFactors, rank: usize) -> Result<DenseMatrix> {
    factors.truncate(rank)
}

/// Computes the thin SVD of `a` by Householder bidiagonalization followed by
/// implicit-shift QR (delegated to `nalgebra`), then sorts and sign-normalizes.
///
/// All-zero columns are set aside before decomposing: the QR sweeps can
/// break down on them, and they only contribute zero singular values.
pub fn svd(a: &DenseMatrix) -> Result<SvdFactors> {
    if a.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("SVD input contains non-finite entries".into()));
    }
    let (m, n) = a.shape();
    let nonzero: Vec<usize> = (0..n).filter(|&j| (0..m).any(|i| a.get(i, j) != 0.0)).collect();
    if nonzero.len() == n {
        return decompose(a);
    }

    let k = m.min(n);
    let mut singular_values = Vec::with_capacity(k);
    let mut left_vectors = Vec::with_capacity(k);
    let mut right_vectors = Vec::with_capacity(k);
    if !nonzero.is_empty() {
        let compact = DenseMatrix::from_fn(m, nonzero.len(), |i, c| a.get(i, nonzero[c]));
        let f = decompose(&compact)?;
        for i in 0..f.len() {
            let mut right = vec![0.0; n];
            for (&j, &x) in nonzero.iter().zip(f.right(i)) {
                right[j] = x;
            }
            singular_values.push(f.singular_values[i]);
            left_vectors.push(f.left_vectors[i].clone());
            right_vectors.push(right);
        }
    }

    // Pad with zero singular values: unit vectors on the zero columns, and
    // for u the column of the residual projector I - U U^T with the largest
    // norm, with the projector updated after each pick.
    let mut zero_columns = (0..n).filter(|j| nonzero.binary_search(j).is_err());
    let mut residual = vec![vec![0.0; m]; m];
    if singular_values.len() < k {
        for (i, col) in residual.iter_mut().enumerate() {
            col[i] = 1.0;
            for u in &left_vectors {
                let ui = u[i];
                col.iter_mut().zip(u).for_each(|(x, y)| *x -= ui * y);
            }
        }
    }
    while singular_values.len() < k {
        let j = zero_columns.next().expect("enough zero columns to complete the basis");
        let pick = (0..m)
            .max_by(|&p, &q| super::norm(&residual[p]).total_cmp(&super::norm(&residual[q])).then(q.cmp(&p)))
            .expect("at least one row");
        let mut left = residual[pick].clone();
        // One re-orthogonalization pass against the accepted vectors.
        for u in &left_vectors {
            let proj = super::dot(&left, u);
            left.iter_mut().zip(u).for_each(|(x, y)| *x -= proj * y);
        }
        let norm = super::norm(&left);
        left.iter_mut().for_each(|x| *x /= norm);
        for col in residual.iter_mut() {
            let proj = super::dot(col, &left);
            col.iter_mut().zip(&left).for_each(|(x, y)| *x -= proj * y);
        }
        let mut right = vec![0.0; n];
        right[j] = 1.0;
        if dominant_entry(&left) < 0.0 {
            left.iter_mut().for_each(|x| *x = -*x);
            right[j] = -1.0;
        }
        singular_values.push(0.0);
        left_vectors.push(left);
        right_vectors.push(right);
    }

    Ok(SvdFactors {
        rows: m,
        cols: n,
        singular_values,
        left_vectors,
        right_vectors,
    })
}

fn decompose(a: &DenseMatrix) -> Result<SvdFactors> {
    let (m, n) = a.shape();
    let k = m.min(n);
    let cap = 10 * k * MAX_SWEEPS;
    let decomposition =
        nalgebra::SVD::try_new_unordered(a.to_nalgebra(), true, true, SVD_TOLERANCE, cap)
            .ok_or_else(|| {
                Error::NumericalFailure(format!(
                    "SVD of {m}x{n} matrix did not converge within {cap} iterations"
                ))
            })?;
    let u = decomposition.u.expect("left vectors requested");
    let v_t = decomposition.v_t.expect("right vectors requested");
    let values = decomposition.singular_values;

    let mut order: Vec<usize> = (0..k).collect();
    // Stable sort keeps the decomposition's own order among exact ties.
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]));

    let mut singular_values = Vec::with_capacity(k);
    let mut left_vectors = Vec::with_capacity(k);
    let mut right_vectors = Vec::with_capacity(k);
    for &idx in &order {
        let mut left: Vec<f64> = u.column(idx).iter().copied().collect();
        let mut right: Vec<f64> = v_t.row(idx).iter().copied().collect();
        if dominant_entry(&left) < 0.0 {
            left.iter_mut().for_each(|x| *x = -*x);
            right.iter_mut().for_each(|x| *x = -*x);
        }
        singular_values.push(values[idx].max(0.0));
        left_vectors.push(left);
        right_vectors.push(right);
    }

    if singular_values.iter().any(|s| !s.is_finite())
        || left_vectors.iter().chain(&right_vectors).flatten().any(|x| !x.is_finite())
    {
        return Err(Error::NumericalFailure("SVD produced non-finite factors".into()));
    }

    Ok(SvdFactors {
        rows: m,
        cols: n,
        singular_values,
        left_vectors,
        right_vectors,
    })
}

/// Entry with the largest magnitude, lowest index on ties.
fn dominant_entry(v: &[f64]) -> f64 {
    let mut best = 0.0f64;
    for &x in v {
        if x.abs() > best.abs() {
            best = x;
        }
    }
    best
}
