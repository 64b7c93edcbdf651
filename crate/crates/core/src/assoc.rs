//! Confounder deflation followed by per-column logistic association tests.
//!
//! The confounder direction is taken as the leading left singular vector of
//! a rank-one estimate of the signal. It is projected out of every column of
//! the data, and each adjusted column is tested against a binary phenotype by
//! a logistic-regression Wald test.

use std::io::Write;

use rand::Rng as _;
use rayon::prelude::*;
use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{invalid_argument, Error, Result};
use crate::estimators::{denoise, EstimatorConfig};
use crate::matcore::{dot, norm, DenseMatrix};
use crate::rng::{derive_seed, rng_from_seed, STREAM_PHENOTYPE};
use crate::stats::median;
use crate::synth::{make_signal, observe, NoiseSpec, SignalModel, SignalSpec};

/// Maximum IRLS iterations.
pub const MAX_IRLS_ITERATIONS: usize = 50;
/// Relative change in log-likelihood that counts as converged.
pub const IRLS_TOLERANCE: f64 = 1e-10;
/// Slope magnitude, per standard deviation of the predictor, taken as a sign
/// of separation.
pub const SEPARATION_LIMIT: f64 = 20.0;

/// Binary outcome, one label per row of the data matrix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Phenotype(Vec<bool>);

impl Phenotype {
    pub fn new(labels: Vec<bool>) -> Result<Self> {
        if !labels.iter().any(|&l| l) || labels.iter().all(|&l| l) {
            return Err(Error::InvalidInput("phenotype must contain both classes".into()));
        }
        Ok(Self(labels))
    }

    pub fn from_01(labels: &[u8]) -> Result<Self> {
        labels
            .iter()
            .map(|&l| match l {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(Error::InvalidInput(format!("phenotype label {other} is not 0/1"))),
            })
            .collect::<Result<Vec<_>>>()
            .and_then(Self::new)
    }

    pub fn labels(&self) -> &[bool] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Removes from every column its projection onto the unit vector `direction`.
pub fn deflate(y: &DenseMatrix, direction: &[f64]) -> Result<DenseMatrix> {
    if direction.len() != y.rows() {
        return Err(invalid_argument(format!(
            "direction has length {} but the matrix has {} rows",
            direction.len(),
            y.rows()
        )));
    }
    let len = norm(direction);
    if (len - 1.0).abs() > 1e-8 {
        return Err(invalid_argument(format!("direction must have unit norm, got {len}")));
    }
    let cols = y.cols();
    let mut proj = vec![0.0; cols];
    for (row, &d) in y.as_slice().chunks_exact(cols).zip(direction) {
        for (p, &v) in proj.iter_mut().zip(row) {
            *p += v * d;
        }
    }
    let mut data = y.as_slice().to_vec();
    for (row, &d) in data.chunks_exact_mut(cols).zip(direction) {
        for (v, &p) in row.iter_mut().zip(&proj) {
            *v -= p * d;
        }
    }
    DenseMatrix::new(y.rows(), cols, data)
}

/// Intercept-plus-slope logistic fit with its Wald test on the slope.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WaldFit {
    pub intercept: f64,
    pub coefficient: f64,
    pub std_error: f64,
    pub z: f64,
    pub p_value: f64,
    pub iterations: usize,
}

impl WaldFit {
    pub fn chi_square(&self) -> f64 {
        self.z * self.z
    }
}

fn log1p_exp(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn log_likelihood(z: &[f64], labels: &[bool], b0: f64, b1: f64) -> f64 {
    z.iter()
        .zip(labels)
        .map(|(&zi, &yi)| {
            let eta = b0 + b1 * zi;
            if yi {
                -log1p_exp(-eta)
            } else {
                -log1p_exp(eta)
            }
        })
        .sum()
}

/// Fisher information `[[s00, s01], [s01, s11]]` at `(b0, b1)`.
fn information(z: &[f64], b0: f64, b1: f64) -> (f64, f64, f64) {
    let mut s = (0.0, 0.0, 0.0);
    for &zi in z {
        let p = sigmoid(b0 + b1 * zi);
        let w = p * (1.0 - p);
        s.0 += w;
        s.1 += w * zi;
        s.2 += w * zi * zi;
    }
    s
}

/// Logistic regression of `phenotype` on `column` by iteratively reweighted
/// least squares, with a two-sided Wald p-value for the slope.
///
/// The fit runs on the standardized column and is mapped back, so the
/// reported coefficient and standard error are in the column's own units
/// while `z` and the p-value are scale-free.
pub fn logistic_wald(column: &[f64], phenotype: &Phenotype) -> Result<WaldFit> {
    let m = column.len();
    if m != phenotype.len() {
        return Err(invalid_argument(format!(
            "column has {m} entries but phenotype has {}",
            phenotype.len()
        )));
    }
    if column.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("column contains non-finite values".into()));
    }
    let mean = column.iter().sum::<f64>() / m as f64;
    let sd = (column.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m as f64).sqrt();
    let scale = column.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if !(sd > 1e-12 * scale.max(f64::MIN_POSITIVE)) {
        return Err(Error::InvalidInput("degenerate predictor: column is constant".into()));
    }
    let z: Vec<f64> = column.iter().map(|v| (v - mean) / sd).collect();
    let labels = phenotype.labels();

    let (mut b0, mut b1) = (0.0, 0.0);
    let mut ll = log_likelihood(&z, labels, b0, b1);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_IRLS_ITERATIONS {
        iterations += 1;
        let (mut g0, mut g1) = (0.0, 0.0);
        for (&zi, &yi) in z.iter().zip(labels) {
            let r = f64::from(u8::from(yi)) - sigmoid(b0 + b1 * zi);
            g0 += r;
            g1 += r * zi;
        }
        let (h00, h01, h11) = information(&z, b0, b1);
        let det = h00 * h11 - h01 * h01;
        if !(det > 0.0) {
            return Err(Error::NumericalFailure("singular information matrix in IRLS".into()));
        }
        let d0 = (h11 * g0 - h01 * g1) / det;
        let d1 = (h00 * g1 - h01 * g0) / det;

        // Newton step with halving; the log-likelihood is concave.
        let mut step = 1.0;
        let (mut nb0, mut nb1, mut nll);
        loop {
            nb0 = b0 + step * d0;
            nb1 = b1 + step * d1;
            nll = log_likelihood(&z, labels, nb0, nb1);
            if nll >= ll || step < 1e-8 {
                break;
            }
            step *= 0.5;
        }
        let change = (nll - ll).abs() / ll.abs().max(f64::MIN_POSITIVE);
        b0 = nb0;
        b1 = nb1;
        ll = nll;
        if b1.abs() > SEPARATION_LIMIT {
            return Err(Error::Separation {
                coefficient: b1,
                limit: SEPARATION_LIMIT,
            });
        }
        if change < IRLS_TOLERANCE {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NumericalFailure(format!(
            "IRLS did not converge in {MAX_IRLS_ITERATIONS} iterations"
        )));
    }

    let (h00, h01, h11) = information(&z, b0, b1);
    let det = h00 * h11 - h01 * h01;
    if !(det > 0.0) {
        return Err(Error::NumericalFailure("singular information matrix at optimum".into()));
    }
    let se_std = (h00 / det).sqrt();
    let wald = b1 / se_std;
    let p_value = erfc(wald.abs() / std::f64::consts::SQRT_2).clamp(f64::MIN_POSITIVE, 1.0);
    Ok(WaldFit {
        intercept: b0 - b1 * mean / sd,
        coefficient: b1 / sd,
        std_error: se_std / sd,
        z: wald,
        p_value,
        iterations,
    })
}

/// Median of the chi-square distribution with one degree of freedom.
pub fn chi2_1_median() -> f64 {
    let q = erfc_inv(0.5);
    2.0 * q * q
}

/// Quantile-quantile pairs of `-log10(p)`, both in ascending order.
#[derive(Clone, Debug, PartialEq)]
pub struct QqData {
    pub expected: Vec<f64>,
    pub observed: Vec<f64>,
}

/// Expected quantiles `-log10((i - 0.5) / n)` for ranks `i = n, n-1, ..., 1`
/// (ascending).
pub fn expected_quantiles(n: usize) -> Vec<f64> {
    (1..=n).rev().map(|i| -((i as f64 - 0.5) / n as f64).log10()).collect()
}

pub fn qq_data(p_values: &[f64]) -> QqData {
    let mut observed: Vec<f64> = p_values.iter().map(|p| -p.log10()).collect();
    observed.sort_by(f64::total_cmp);
    QqData {
        expected: expected_quantiles(p_values.len()),
        observed,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AssociationResult {
    /// One fit per column, in column order.
    pub tests: Vec<WaldFit>,
    pub qq: QqData,
}

impl AssociationResult {
    fn from_tests(tests: Vec<WaldFit>) -> Self {
        let p: Vec<f64> = tests.iter().map(|t| t.p_value).collect();
        let qq = qq_data(&p);
        Self { tests, qq }
    }

    pub fn p_values(&self) -> Vec<f64> {
        self.tests.iter().map(|t| t.p_value).collect()
    }

    /// Median observed chi-square over the median of chi-square(1).
    pub fn inflation(&self) -> f64 {
        let chi: Vec<f64> = self.tests.iter().map(WaldFit::chi_square).collect();
        median(&chi) / chi2_1_median()
    }
}

/// Tests every column of `y` against the phenotype without any adjustment.
pub fn test_columns(y: &DenseMatrix, phenotype: &Phenotype) -> Result<AssociationResult> {
    if y.rows() != phenotype.len() {
        return Err(invalid_argument(format!(
            "matrix has {} rows but phenotype has {} labels",
            y.rows(),
            phenotype.len()
        )));
    }
    let t = y.transpose();
    let tests = (0..t.rows())
        .into_par_iter()
        .map(|j| logistic_wald(t.row(j), phenotype))
        .collect::<Result<Vec<_>>>()?;
    Ok(AssociationResult::from_tests(tests))
}

/// Leading left singular vector of the rank-one estimate chosen by `config`.
pub fn confounder_direction(y: &DenseMatrix, config: &EstimatorConfig) -> Result<Vec<f64>> {
    if config.rank != 1 {
        return Err(invalid_argument(format!(
            "the association pipeline assumes a rank-one confounder, got rank {}",
            config.rank
        )));
    }
    let result = denoise(y, config)?;
    Ok(result.factors.left(0).to_vec())
}

/// Estimates the confounder direction, deflates, and tests every column.
pub fn run_pipeline(y: &DenseMatrix, phenotype: &Phenotype, config: &EstimatorConfig) -> Result<AssociationResult> {
    let direction = confounder_direction(y, config)?;
    test_columns(&deflate(y, &direction)?, phenotype)
}

/// Writes the `exp refactor tsvd jl` QQ table; all three results must cover
/// the same number of columns.
pub fn write_qq_table<W: Write>(
    mut out: W,
    refactor: &AssociationResult,
    tsvd: &AssociationResult,
    jl: &AssociationResult,
) -> Result<()> {
    let n = refactor.tests.len();
    if tsvd.tests.len() != n || jl.tests.len() != n {
        return Err(invalid_argument("QQ columns have different lengths"));
    }
    writeln!(out, "exp refactor tsvd jl")?;
    for i in 0..n {
        writeln!(
            out,
            "{} {} {} {}",
            refactor.qq.expected[i], refactor.qq.observed[i], tsvd.qq.observed[i], jl.qq.observed[i]
        )?;
    }
    out.flush()?;
    Ok(())
}

/// Synthetic stand-in for a methylation study: a rank-one confounder loads on
/// `active` of `sites` columns, and the phenotype of each subject depends on
/// the subject's confounder loading.
///
/// The default is a weak confounder on a small share of the sites, close
/// enough to the detection threshold that the choice of direction estimate
/// matters.
#[derive(Clone, Debug, PartialEq)]
pub struct AssocScenario {
    pub subjects: usize,
    pub sites: usize,
    pub active: usize,
    pub strength: f64,
    pub noise: NoiseSpec,
    /// Log-odds slope of the phenotype per standard deviation of the
    /// confounder loading; zero gives a phenotype independent of everything.
    pub link: f64,
}

impl Default for AssocScenario {
    fn default() -> Self {
        Self {
            subjects: 200,
            sites: 4000,
            active: 200,
            strength: 0.6,
            noise: NoiseSpec::gaussian(1.0),
            link: 2.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct AssocData {
    pub y: DenseMatrix,
    pub phenotype: Phenotype,
    pub model: SignalModel,
}

impl AssocScenario {
    /// A strong confounder loading on most sites with a weaker phenotype
    /// link, so that unadjusted tests are heavily inflated while a good
    /// direction estimate brings them back near one.
    pub fn dense_confounder() -> Self {
        Self {
            subjects: 200,
            sites: 2000,
            active: 1200,
            strength: 8.0,
            noise: NoiseSpec::gaussian(1.0),
            link: 0.7,
        }
    }

    pub fn null(mut self) -> Self {
        self.link = 0.0;
        self
    }

    pub fn generate(&self, seed: u64) -> Result<AssocData> {
        let spec = SignalSpec::uniform(self.subjects, self.sites, 1, self.active, self.strength);
        let model = make_signal(&spec, seed)?;
        let obs = observe(&model, &self.noise, seed)?;
        let loading = &model.left_vectors()[0];
        let root_m = (self.subjects as f64).sqrt();
        let mut rng = rng_from_seed(derive_seed(seed, &[STREAM_PHENOTYPE]));
        // Redraw in the (unlikely) event of a single-class phenotype.
        for _ in 0..100 {
            let labels: Vec<bool> = loading
                .iter()
                .map(|&a| rng.random::<f64>() < sigmoid(self.link * root_m * a))
                .collect();
            if let Ok(phenotype) = Phenotype::new(labels) {
                return Ok(AssocData {
                    y: obs.y,
                    phenotype,
                    model,
                });
            }
        }
        Err(Error::NumericalFailure("could not draw a two-class phenotype".into()))
    }
}

/// Alignment `|<u_hat, a>|` of an estimated direction with the true loading.
pub fn direction_alignment(direction: &[f64], model: &SignalModel) -> f64 {
    dot(direction, &model.left_vectors()[0]).abs()
}
