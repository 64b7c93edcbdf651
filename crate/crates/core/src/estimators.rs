//! Truncated-SVD denoising and its column-selecting refinements.
//!
//! Every selecting estimator scores each column, keeps the `t` columns with
//! the largest absolute score, and then either masks the rank-`r` truncation
//! (`Refactor`, `RefactorPlus`, `Jl`) or recomputes the truncation from the
//! data restricted to the kept columns (`RefactorStar`, `JlStar`).

use std::fmt;
use std::str::FromStr;

use crate::error::{invalid_argument, Result};
use crate::matcore::{svd, DenseMatrix, SvdFactors};

/// Column norms below this are treated as zero by the correlation statistic.
pub const ZERO_NORM: f64 = 1e-300;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    Tsvd,
    Refactor,
    RefactorPlus,
    RefactorStar,
    Jl,
    JlStar,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Refactor,
        Variant::Tsvd,
        Variant::Jl,
        Variant::RefactorStar,
        Variant::RefactorPlus,
        Variant::JlStar,
    ];

    /// Short command-line name.
    pub fn name(self) -> &'static str {
        match self {
            Variant::Tsvd => "tsvd",
            Variant::Refactor => "refactor",
            Variant::RefactorPlus => "refactor-plus",
            Variant::RefactorStar => "refactor-star",
            Variant::Jl => "jl",
            Variant::JlStar => "jl-star",
        }
    }

    /// Name of the mean-MSE column in simulation tables; the error column
    /// appends `_std`.
    pub fn mse_column(self) -> &'static str {
        match self {
            Variant::Tsvd => "tsvd_mse",
            Variant::Refactor => "refactor_mse",
            Variant::RefactorPlus => "refactor_mse_corr",
            Variant::RefactorStar => "refactor_mse_full",
            Variant::Jl => "JL_mse",
            Variant::JlStar => "JL_mse_full",
        }
    }

    /// Whether the variant keeps only a subset of columns.
    pub fn selects_columns(self) -> bool {
        self != Variant::Tsvd
    }

    /// Whether the variant recomputes the SVD on the column-masked data.
    pub fn refits(self) -> bool {
        matches!(self, Variant::RefactorStar | Variant::JlStar)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        let v = match s.to_ascii_lowercase().as_str() {
            "tsvd" => Variant::Tsvd,
            "refactor" | "rf" => Variant::Refactor,
            "refactor-plus" | "refactor+" | "refactorplus" => Variant::RefactorPlus,
            "refactor-star" | "refactor*" | "refactorstar" => Variant::RefactorStar,
            "jl" => Variant::Jl,
            "jl-star" | "jl*" | "jlstar" => Variant::JlStar,
            _ => return Err(invalid_argument(format!("unknown estimator {s:?}"))),
        };
        Ok(v)
    }
}

/// Which first-pass statistic `RefactorStar` uses to choose columns.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum StarStatistic {
    #[default]
    Inner,
    Correlation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EstimatorConfig {
    pub variant: Variant,
    pub rank: usize,
    /// Number of retained columns; ignored by `Tsvd`.
    pub keep: usize,
    pub star_statistic: StarStatistic,
}

impl EstimatorConfig {
    pub fn new(variant: Variant, rank: usize, keep: usize) -> Self {
        Self {
            variant,
            rank,
            keep,
            star_statistic: StarStatistic::Inner,
        }
    }

    pub fn with_star_statistic(mut self, statistic: StarStatistic) -> Self {
        self.star_statistic = statistic;
        self
    }

    fn validate(&self, rows: usize, cols: usize) -> Result<()> {
        check_rank(self.rank, rows, cols)?;
        if self.variant.selects_columns() {
            check_keep(self.keep, cols)?;
            if self.variant.refits() && self.keep == 0 {
                return Err(invalid_argument(
                    "re-fitting estimators need at least one retained column",
                ));
            }
        }
        Ok(())
    }
}

fn check_rank(rank: usize, rows: usize, cols: usize) -> Result<()> {
    if rank == 0 || rank > rows.min(cols) {
        return Err(invalid_argument(format!(
            "rank {rank} outside 1..={} for a {rows}x{cols} matrix",
            rows.min(cols)
        )));
    }
    Ok(())
}

fn check_keep(keep: usize, cols: usize) -> Result<()> {
    if keep > cols {
        return Err(invalid_argument(format!(
            "cannot retain {keep} of {cols} columns"
        )));
    }
    Ok(())
}

/// Per-column scores, their ordering, and the retained columns.
#[derive(Clone, Debug, PartialEq)]
pub struct SelectionResult {
    statistic: Vec<f64>,
    permutation: Vec<usize>,
    retained: usize,
}

impl SelectionResult {
    pub fn statistic(&self) -> &[f64] {
        &self.statistic
    }

    /// Column indices (0-based) ordered by descending |statistic|, ascending
    /// index on ties.
    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }

    /// Retained columns in selection order.
    pub fn retained(&self) -> &[usize] {
        &self.permutation[..self.retained]
    }

    /// Retained columns in ascending index order.
    pub fn retained_sorted(&self) -> Vec<usize> {
        let mut out = self.retained().to_vec();
        out.sort_unstable();
        out
    }

    pub fn retained_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.statistic.len()];
        for &j in self.retained() {
            mask[j] = true;
        }
        mask
    }

    pub fn n_columns(&self) -> usize {
        self.statistic.len()
    }
}

#[derive(Clone, Debug)]
pub struct DenoiseResult {
    pub estimate: DenseMatrix,
    /// Absent for plain TSVD.
    pub selection: Option<SelectionResult>,
    /// Factors the estimate was truncated from (those of the masked data for
    /// re-fitting variants).
    pub factors: SvdFactors,
}

/// `c_j = <[xhat]_j, [y]_j>`.
pub fn refactor_statistics(y: &DenseMatrix, xhat: &DenseMatrix) -> Result<Vec<f64>> {
    y.check_same_shape(xhat)?;
    let cols = y.cols();
    let mut out = vec![0.0; cols];
    for (yr, xr) in y.as_slice().chunks_exact(cols).zip(xhat.as_slice().chunks_exact(cols)) {
        for ((acc, a), b) in out.iter_mut().zip(yr).zip(xr) {
            *acc += a * b;
        }
    }
    Ok(out)
}

/// Column correlation `c_j / (||[xhat]_j|| ||[y]_j||)`, zero for a column
/// whose norm in either argument is below [`ZERO_NORM`].
pub fn refactor_plus_statistics(y: &DenseMatrix, xhat: &DenseMatrix) -> Result<Vec<f64>> {
    let inner = refactor_statistics(y, xhat)?;
    let y_norms = y.column_norms_sq();
    let x_norms = xhat.column_norms_sq();
    Ok(inner
        .into_iter()
        .zip(y_norms.into_iter().zip(x_norms))
        .map(|(c, (ny, nx))| {
            let (ny, nx) = (ny.sqrt(), nx.sqrt());
            if ny < ZERO_NORM || nx < ZERO_NORM {
                0.0
            } else {
                c / ny / nx
            }
        })
        .collect())
}

/// Johnstone–Lu screening statistic: squared column norms of the data.
pub fn jl_statistics(y: &DenseMatrix) -> Vec<f64> {
    y.column_norms_sq()
}

/// Orders columns by descending |statistic| and keeps the first `keep`.
pub fn select_columns(statistic: &[f64], keep: usize) -> Result<SelectionResult> {
    check_keep(keep, statistic.len())?;
    if statistic.iter().any(|s| !s.is_finite()) {
        return Err(crate::Error::InvalidInput("non-finite column statistic".into()));
    }
    let mut permutation: Vec<usize> = (0..statistic.len()).collect();
    permutation.sort_by(|&a, &b| {
        statistic[b]
            .abs()
            .total_cmp(&statistic[a].abs())
            .then(a.cmp(&b))
    });
    Ok(SelectionResult {
        statistic: statistic.to_vec(),
        permutation,
        retained: keep,
    })
}

pub fn estimate_tsvd(y: &DenseMatrix, rank: usize) -> Result<DenoiseResult> {
    denoise(y, &EstimatorConfig::new(Variant::Tsvd, rank, 0))
}

/// Masking estimators: `Refactor`, `RefactorPlus`, or `Jl`.
pub fn estimate_refactor(
    y: &DenseMatrix,
    rank: usize,
    keep: usize,
    variant: Variant,
) -> Result<DenoiseResult> {
    if !matches!(variant, Variant::Refactor | Variant::RefactorPlus | Variant::Jl) {
        return Err(invalid_argument(format!("{variant} is not a masking estimator")));
    }
    denoise(y, &EstimatorConfig::new(variant, rank, keep))
}

/// Re-fitting estimators: `RefactorStar` or `JlStar`.
pub fn estimate_star(
    y: &DenseMatrix,
    rank: usize,
    keep: usize,
    variant: Variant,
) -> Result<DenoiseResult> {
    if !variant.refits() {
        return Err(invalid_argument(format!("{variant} is not a re-fitting estimator")));
    }
    denoise(y, &EstimatorConfig::new(variant, rank, keep))
}

pub fn denoise(y: &DenseMatrix, config: &EstimatorConfig) -> Result<DenoiseResult> {
    config.validate(y.rows(), y.cols())?;
    let factors = svd(y)?;
    denoise_with_factors(y, &factors, config)
}

/// Same as [`denoise`] but reuses an already computed SVD of `y`, so several
/// estimators can share one decomposition.
pub fn denoise_with_factors(
    y: &DenseMatrix,
    factors: &SvdFactors,
    config: &EstimatorConfig,
) -> Result<DenoiseResult> {
    config.validate(y.rows(), y.cols())?;
    if (factors.rows(), factors.cols()) != y.shape() {
        return Err(invalid_argument("factors do not belong to a matrix of this shape"));
    }
    let truncated = factors.truncate(config.rank)?;

    let statistic = match config.variant {
        Variant::Tsvd => {
            return Ok(DenoiseResult {
                estimate: truncated,
                selection: None,
                factors: factors.clone(),
            })
        }
        Variant::Refactor => refactor_statistics(y, &truncated)?,
        Variant::RefactorPlus => refactor_plus_statistics(y, &truncated)?,
        Variant::RefactorStar => match config.star_statistic {
            StarStatistic::Inner => refactor_statistics(y, &truncated)?,
            StarStatistic::Correlation => refactor_plus_statistics(y, &truncated)?,
        },
        Variant::Jl | Variant::JlStar => jl_statistics(y),
    };
    let selection = select_columns(&statistic, config.keep)?;
    let mask = selection.retained_mask();

    if config.variant.refits() {
        let masked = y.mask_columns(&mask)?;
        let refit = svd(&masked)?;
        let estimate = refit.truncate(config.rank)?.mask_columns(&mask)?;
        Ok(DenoiseResult {
            estimate,
            selection: Some(selection),
            factors: refit,
        })
    } else {
        Ok(DenoiseResult {
            estimate: truncated.mask_columns(&mask)?,
            selection: Some(selection),
            factors: factors.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn select_by_absolute_value() {
        let s = select_columns(&[1.0, -3.0, 2.0], 2).unwrap();
        assert_eq!(s.retained(), &[1, 2]);
        assert_eq!(s.retained_sorted(), vec![1, 2]);
        assert_eq!(s.permutation(), &[1, 2, 0]);
    }

    #[test]
    fn select_nothing() {
        let s = select_columns(&[1.0, 2.0], 0).unwrap();
        assert!(s.retained().is_empty());
        assert_eq!(s.retained_mask(), vec![false, false]);
    }

    #[test]
    fn ties_go_to_lower_index() {
        let s = select_columns(&[-2.0, 1.0, 2.0, 2.0], 2).unwrap();
        assert_eq!(s.retained(), &[0, 2]);
        assert_eq!(s.permutation(), &[0, 2, 3, 1]);
    }

    #[test]
    fn select_too_many_is_an_error() {
        assert!(matches!(
            select_columns(&[1.0], 2),
            Err(crate::Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn jl_statistic_basic() {
        let y = DenseMatrix::from_rows(&[vec![3.0, 0.0], vec![4.0, 0.0]]).unwrap();
        assert_eq!(jl_statistics(&y), vec![25.0, 0.0]);
    }

    #[test]
    fn zero_truncation_gives_zero_statistics() {
        let y = DenseMatrix::from_fn(3, 4, |i, j| (i + 2 * j) as f64);
        let zero = DenseMatrix::zeros(3, 4);
        assert!(refactor_statistics(&y, &zero).unwrap().iter().all(|&c| c == 0.0));
        assert!(refactor_plus_statistics(&y, &zero).unwrap().iter().all(|&c| c == 0.0));
        assert!(refactor_statistics(&y, &DenseMatrix::zeros(3, 3)).is_err());
    }

    #[test]
    fn correlation_of_parallel_columns_is_one() {
        let y = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, -1.0]]).unwrap();
        let x = y.scale(0.25);
        for c in refactor_plus_statistics(&y, &x).unwrap() {
            assert!((c - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert!("pca".parse::<Variant>().is_err());
    }

    #[test]
    fn config_validation() {
        let y = DenseMatrix::from_fn(4, 5, |i, j| ((i * 5 + j) as f64).sin());
        assert!(denoise(&y, &EstimatorConfig::new(Variant::Tsvd, 0, 0)).is_err());
        assert!(denoise(&y, &EstimatorConfig::new(Variant::Tsvd, 5, 0)).is_err());
        assert!(denoise(&y, &EstimatorConfig::new(Variant::Refactor, 1, 6)).is_err());
        assert!(matches!(
            estimate_star(&y, 1, 0, Variant::RefactorStar),
            Err(crate::Error::InvalidArgument(_))
        ));
        assert!(estimate_star(&y, 1, 1, Variant::Refactor).is_err());
        assert!(estimate_refactor(&y, 1, 1, Variant::JlStar).is_err());
        // t is ignored by TSVD
        assert!(denoise(&y, &EstimatorConfig::new(Variant::Tsvd, 2, 99)).is_ok());
    }
}
