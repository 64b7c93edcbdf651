//! Ground-truth column-sparse low-rank signals and noisy observations.
//!
//! The signal is `X = sum_i x_i a_i b_i^T` with orthonormal `a_i` and
//! orthonormal `b_i` sharing one support of `t` columns. Observations are
//! `Y = X + (sigma / sqrt(n)) Z` with i.i.d. entries in `Z`.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal, StudentT};

use crate::error::{invalid_argument, Error, Result};
use crate::matcore::{dot, norm, DenseMatrix};
use crate::rng::{derive_seed, rng_from_seed, Rng, STREAM_NOISE, STREAM_SIGNAL};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SupportStyle {
    /// Standard normal entries on the support, then orthonormalized.
    #[default]
    GaussianOrthonormalized,
    /// `b_1` has entry `1/sqrt(t)` on every active column; any further
    /// vectors are Gaussian on the support, orthonormalized against `b_1`.
    Flat,
}

impl FromStr for SupportStyle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "gaussian_orthonormalized" | "gaussian-orthonormalized" => {
                Ok(SupportStyle::GaussianOrthonormalized)
            }
            "flat" => Ok(SupportStyle::Flat),
            _ => Err(invalid_argument(format!("unknown support style {s:?}"))),
        }
    }
}

impl fmt::Display for SupportStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SupportStyle::GaussianOrthonormalized => "gaussian",
            SupportStyle::Flat => "flat",
        })
    }
}

/// Where the active columns sit.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ActivePlacement {
    /// Columns `0..t`.
    #[default]
    Leading,
    /// A uniformly random `t`-subset.
    Random,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SignalSpec {
    pub rows: usize,
    pub cols: usize,
    pub active: usize,
    pub singular_values: Vec<f64>,
    pub support_style: SupportStyle,
    pub placement: ActivePlacement,
}

impl SignalSpec {
    pub fn new(rows: usize, cols: usize, active: usize, singular_values: Vec<f64>) -> Self {
        Self {
            rows,
            cols,
            active,
            singular_values,
            support_style: SupportStyle::default(),
            placement: ActivePlacement::default(),
        }
    }

    /// Rank-`rank` signal with every singular value equal to `strength`.
    pub fn uniform(rows: usize, cols: usize, rank: usize, active: usize, strength: f64) -> Self {
        Self::new(rows, cols, active, vec![strength; rank])
    }

    pub fn with_support_style(mut self, style: SupportStyle) -> Self {
        self.support_style = style;
        self
    }

    pub fn with_placement(mut self, placement: ActivePlacement) -> Self {
        self.placement = placement;
        self
    }

    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    fn validate(&self) -> Result<()> {
        let r = self.rank();
        if self.rows == 0 || self.cols == 0 {
            return Err(invalid_argument("signal dimensions must be positive"));
        }
        if self.active > self.cols {
            return Err(invalid_argument(format!(
                "{} active columns exceed {} columns",
                self.active, self.cols
            )));
        }
        if r == 0 || r > self.rows.min(self.active) {
            return Err(invalid_argument(format!(
                "rank {r} must lie in 1..=min(m={}, t={})",
                self.rows, self.active
            )));
        }
        if self.singular_values.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(invalid_argument("singular values must be positive and finite"));
        }
        if self.singular_values.windows(2).any(|w| w[1] > w[0]) {
            return Err(invalid_argument("singular values must be non-increasing"));
        }
        Ok(())
    }
}

/// Ground truth `X = sum_i x_i a_i b_i^T`.
#[derive(Clone, Debug, PartialEq)]
pub struct SignalModel {
    rows: usize,
    cols: usize,
    singular_values: Vec<f64>,
    left_vectors: Vec<Vec<f64>>,
    right_vectors: Vec<Vec<f64>>,
    active_set: Vec<usize>,
    support_style: SupportStyle,
}

impl SignalModel {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn rank(&self) -> usize {
        self.singular_values.len()
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

    /// Active column indices, ascending.
    pub fn active_set(&self) -> &[usize] {
        &self.active_set
    }

    pub fn active_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.cols];
        for &j in &self.active_set {
            mask[j] = true;
        }
        mask
    }

    pub fn support_style(&self) -> SupportStyle {
        self.support_style
    }

    pub fn signal_matrix(&self) -> DenseMatrix {
        let mut data = vec![0.0; self.rows * self.cols];
        for ((x, a), b) in self.singular_values.iter().zip(&self.left_vectors).zip(&self.right_vectors) {
            for (row, &ap) in data.chunks_exact_mut(self.cols).zip(a) {
                let xa = x * ap;
                for &j in &self.active_set {
                    row[j] += xa * b[j];
                }
            }
        }
        DenseMatrix::new(self.rows, self.cols, data).expect("signal entries are finite")
    }

    /// `||X||_F^2 = sum_i x_i^2`.
    pub fn signal_norm_sq(&self) -> f64 {
        self.singular_values.iter().map(|x| x * x).sum()
    }
}

fn gaussian_vector(rng: &mut Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

/// Gram–Schmidt with one re-orthogonalization pass; `v` must not lie in the
/// span of `basis`.
fn orthonormalize_against(mut v: Vec<f64>, basis: &[Vec<f64>]) -> Result<Vec<f64>> {
    let original = norm(&v);
    for _ in 0..2 {
        for q in basis {
            let proj = dot(&v, q);
            v.iter_mut().zip(q).for_each(|(x, qi)| *x -= proj * qi);
        }
    }
    let len = norm(&v);
    if !(len > 1e-8 * original) {
        return Err(Error::NumericalFailure(
            "random draw was (numerically) linearly dependent".into(),
        ));
    }
    v.iter_mut().for_each(|x| *x /= len);
    Ok(v)
}

pub fn make_signal(spec: &SignalSpec, seed: u64) -> Result<SignalModel> {
    spec.validate()?;
    let mut rng = rng_from_seed(derive_seed(seed, &[STREAM_SIGNAL]));
    let (m, n, t, r) = (spec.rows, spec.cols, spec.active, spec.rank());

    let active_set = match spec.placement {
        ActivePlacement::Leading => (0..t).collect(),
        ActivePlacement::Random => {
            let mut set = index::sample(&mut rng, n, t).into_vec();
            set.sort_unstable();
            set
        }
    };

    let mut left_vectors: Vec<Vec<f64>> = Vec::with_capacity(r);
    for _ in 0..r {
        let draw = gaussian_vector(&mut rng, m);
        let a = orthonormalize_against(draw, &left_vectors)?;
        left_vectors.push(a);
    }

    // Build b-vectors on the compressed support, then scatter.
    let mut compact: Vec<Vec<f64>> = Vec::with_capacity(r);
    for i in 0..r {
        let draw = if i == 0 && spec.support_style == SupportStyle::Flat {
            vec![1.0 / (t as f64).sqrt(); t]
        } else {
            gaussian_vector(&mut rng, t)
        };
        let b = if i == 0 && spec.support_style == SupportStyle::Flat {
            draw
        } else {
            orthonormalize_against(draw, &compact)?
        };
        compact.push(b);
    }
    let right_vectors = compact
        .into_iter()
        .map(|b| {
            let mut full = vec![0.0; n];
            for (&j, v) in active_set.iter().zip(b) {
                full[j] = v;
            }
            full
        })
        .collect();

    Ok(SignalModel {
        rows: m,
        cols: n,
        singular_values: spec.singular_values.clone(),
        left_vectors,
        right_vectors,
        active_set,
        support_style: spec.support_style,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NoiseDistribution {
    Gaussian,
    StudentT { df: f64 },
}

impl FromStr for NoiseDistribution {
    type Err = Error;

    /// Accepts `gaussian`/`normal`, `t6`, `t:6`, `student-t:6` or `student-t6`.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        if lower == "gaussian" || lower == "normal" {
            return Ok(NoiseDistribution::Gaussian);
        }
        let rest = lower
            .strip_prefix("student-t")
            .or_else(|| lower.strip_prefix('t'))
            .ok_or_else(|| invalid_argument(format!("unknown noise distribution {s:?}")))?;
        let df: f64 = rest
            .trim_start_matches(':')
            .parse()
            .map_err(|_| invalid_argument(format!("bad degrees of freedom in {s:?}")))?;
        if !(df > 0.0 && df.is_finite()) {
            return Err(invalid_argument("degrees of freedom must be positive"));
        }
        Ok(NoiseDistribution::StudentT { df })
    }
}

impl fmt::Display for NoiseDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseDistribution::Gaussian => f.write_str("gaussian"),
            NoiseDistribution::StudentT { df } => write!(f, "student-t{df}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec {
    pub distribution: NoiseDistribution,
    pub sigma: f64,
    /// Rescale heavy-tailed draws to unit variance.
    pub standardize: bool,
}

impl NoiseSpec {
    pub fn gaussian(sigma: f64) -> Self {
        Self {
            distribution: NoiseDistribution::Gaussian,
            sigma,
            standardize: true,
        }
    }

    pub fn student_t(df: f64, sigma: f64) -> Self {
        Self {
            distribution: NoiseDistribution::StudentT { df },
            sigma,
            standardize: true,
        }
    }

    pub fn with_standardize(mut self, standardize: bool) -> Self {
        self.standardize = standardize;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(invalid_argument("noise level must be finite and non-negative"));
        }
        if let NoiseDistribution::StudentT { df } = self.distribution {
            if !(df > 0.0) {
                return Err(invalid_argument("degrees of freedom must be positive"));
            }
            if self.standardize && df <= 2.0 {
                return Err(invalid_argument(
                    "standardized Student-t noise needs df > 2 (finite variance)",
                ));
            }
        }
        Ok(())
    }
}

/// Returns `(sigma / sqrt(n)) Z` for an `m x n` matrix `Z` of i.i.d. draws.
pub fn make_noise(rows: usize, cols: usize, spec: &NoiseSpec, seed: u64) -> Result<DenseMatrix> {
    spec.validate()?;
    if rows == 0 || cols == 0 {
        return Err(invalid_argument("noise dimensions must be positive"));
    }
    if spec.sigma == 0.0 {
        return Ok(DenseMatrix::zeros(rows, cols));
    }
    let mut rng = rng_from_seed(derive_seed(seed, &[STREAM_NOISE]));
    let scale = spec.sigma / (cols as f64).sqrt();
    let len = rows * cols;
    let data: Vec<f64> = match spec.distribution {
        NoiseDistribution::Gaussian => (0..len)
            .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
            .collect(),
        NoiseDistribution::StudentT { df } => {
            let dist = StudentT::new(df)
                .map_err(|e| invalid_argument(format!("Student-t with df={df}: {e}")))?;
            let unit = if spec.standardize {
                ((df - 2.0) / df).sqrt()
            } else {
                1.0
            };
            (0..len).map(|_| scale * unit * dist.sample(&mut rng)).collect()
        }
    };
    DenseMatrix::new(rows, cols, data)
}

/// Noisy observation of a model and the matrix it was generated from.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub y: DenseMatrix,
    pub x: DenseMatrix,
}

pub fn observe(model: &SignalModel, spec: &NoiseSpec, seed: u64) -> Result<Observation> {
    let x = model.signal_matrix();
    let noise = make_noise(model.rows(), model.cols(), spec, seed)?;
    let y = x.add(&noise)?;
    Ok(Observation { y, x })
}
