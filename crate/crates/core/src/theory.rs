//! Loss metrics and Monte Carlo checks of the rank-one guarantees.
//!
//! The guarantees are asymptotic ("with high probability" as `n` grows); at
//! desk scale they are checked as empirical success frequencies over seeded
//! replicates, compared against a configurable threshold (0.95 by default).

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{invalid_argument, Error, Result};
use crate::estimators::{denoise_with_factors, EstimatorConfig, SelectionResult, Variant};
use crate::matcore::{dot, svd, DenseMatrix, SvdFactors};
use crate::rng::derive_seed;
use crate::stats::compensated_sum;
use crate::synth::{make_signal, observe, NoiseSpec, SignalModel, SignalSpec, SupportStyle};

/// Squared Frobenius distance.
pub fn mse(estimate: &DenseMatrix, truth: &DenseMatrix) -> Result<f64> {
    estimate.check_same_shape(truth)?;
    Ok(estimate
        .as_slice()
        .iter()
        .zip(truth.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum())
}

/// `(mse_tsvd - mse_rf) / ||X||_F^2`; negative when the selecting estimator
/// is worse.
pub fn relative_improvement(mse_tsvd: f64, mse_rf: f64, signal_norm_sq: f64) -> Result<f64> {
    if !(signal_norm_sq > 0.0) {
        return Err(invalid_argument("relative improvement needs a non-zero signal"));
    }
    Ok((mse_tsvd - mse_rf) / signal_norm_sq)
}

/// Decomposition `v = c b + s w` of the leading empirical right singular
/// vector against the true one, with the sign of `v` chosen so that `c >= 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlignmentStats {
    pub cosine: f64,
    pub sine: f64,
    pub y_lead: f64,
    pub x_lead: f64,
}

pub fn alignment(factors: &SvdFactors, model: &SignalModel) -> Result<AlignmentStats> {
    if model.rank() != 1 {
        return Err(invalid_argument(format!(
            "alignment is defined for rank-one signals, got rank {}",
            model.rank()
        )));
    }
    if factors.cols() != model.cols() || factors.rows() != model.rows() {
        return Err(invalid_argument("factors and model have different shapes"));
    }
    let cosine = dot(factors.right(0), &model.right_vectors()[0]).abs().min(1.0);
    Ok(AlignmentStats {
        cosine,
        sine: (1.0 - cosine * cosine).max(0.0).sqrt(),
        y_lead: factors.singular_values()[0],
        x_lead: model.singular_values()[0],
    })
}

/// Column-detection counts against the model's active set.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SupportConfusion {
    pub true_pos: usize,
    pub false_neg: usize,
    pub false_pos: usize,
    pub true_neg: usize,
}

impl SupportConfusion {
    pub fn selected(&self) -> usize {
        self.true_pos + self.false_pos
    }

    pub fn is_perfect(&self) -> bool {
        self.false_pos == 0 && self.false_neg == 0
    }
}

pub fn confusion(selection: &SelectionResult, model: &SignalModel) -> Result<SupportConfusion> {
    if selection.n_columns() != model.cols() {
        return Err(invalid_argument("selection and model cover different column counts"));
    }
    let active = model.active_mask();
    let chosen = selection.retained_mask();
    let mut out = SupportConfusion::default();
    for (a, c) in active.into_iter().zip(chosen) {
        match (a, c) {
            (true, true) => out.true_pos += 1,
            (true, false) => out.false_neg += 1,
            (false, true) => out.false_pos += 1,
            (false, false) => out.true_neg += 1,
        }
    }
    Ok(out)
}

/// Constants left unspecified by the asymptotic statements.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TheoryConstants {
    /// Active entries must satisfy `b_j^2 > c * ln n / n`.
    pub c: f64,
    /// Sparsity must satisfy `t <= c0 * n / ln n`.
    pub c0: f64,
    /// Deviation multiplier in the detection threshold `s^2 alpha^2 ln n / n`.
    pub alpha: f64,
}

impl Default for TheoryConstants {
    fn default() -> Self {
        Self {
            c: 64.0,
            c0: 0.05,
            alpha: 4.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThresholdReport {
    /// Aspect ratio `m / n`.
    pub beta: f64,
    /// `sqrt(1 + 2 sqrt(beta))`.
    pub weak_signal_threshold: f64,
    /// `beta^(-1/4)`, the Gaussian-noise BBP transition.
    pub bbp_threshold: f64,
    pub signal_strength: f64,
    pub signal_above_threshold: bool,
    /// `c ln n / n`.
    pub support_bound: f64,
    /// Smallest squared active entry of `b`.
    pub min_active_b_sq: f64,
    pub support_condition: bool,
    /// `c0 n / ln n`.
    pub sparsity_bound: f64,
    pub sparsity_condition: bool,
}

/// Evaluates the threshold quantities for an `m x n` problem with signal
/// strength `x` (in units of the noise level) and `t` active columns whose
/// right-vector entries are `active_b`.
pub fn thresholds(
    rows: usize,
    cols: usize,
    strength: f64,
    active: usize,
    active_b: &[f64],
    constants: &TheoryConstants,
) -> ThresholdReport {
    let beta = rows as f64 / cols as f64;
    let weak = (1.0 + 2.0 * beta.sqrt()).sqrt();
    let ln_n = (cols as f64).ln();
    let support_bound = constants.c * ln_n / cols as f64;
    let min_active_b_sq = active_b
        .iter()
        .map(|b| b * b)
        .fold(f64::INFINITY, f64::min);
    let sparsity_bound = if ln_n > 0.0 {
        constants.c0 * cols as f64 / ln_n
    } else {
        f64::INFINITY
    };
    ThresholdReport {
        beta,
        weak_signal_threshold: weak,
        bbp_threshold: beta.powf(-0.25),
        signal_strength: strength,
        signal_above_threshold: strength > weak,
        support_bound,
        min_active_b_sq,
        support_condition: min_active_b_sq > support_bound,
        sparsity_bound,
        sparsity_condition: active as f64 <= sparsity_bound,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Theorem {
    /// Selection never hurts when active entries are not too small.
    T1,
    /// Relative improvement lower bound (reported, never asserted).
    T2,
    /// Selection never hurts under mild sparsity.
    T3,
    /// Inactive entries of `v` stay below the detection threshold.
    LInactive,
    /// Active entries of `v` exceed the detection threshold.
    LActive,
    /// `c^2 >= 1/2`.
    LCosine,
    /// Leading data singular value exceeds the signal's.
    LSinval,
}

impl Theorem {
    pub const ALL: [Theorem; 7] = [
        Theorem::T1,
        Theorem::T2,
        Theorem::T3,
        Theorem::LInactive,
        Theorem::LActive,
        Theorem::LCosine,
        Theorem::LSinval,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Theorem::T1 => "T1",
            Theorem::T2 => "T2",
            Theorem::T3 => "T3",
            Theorem::LInactive => "L_inactive",
            Theorem::LActive => "L_active",
            Theorem::LCosine => "L_cosine",
            Theorem::LSinval => "L_sinval",
        }
    }

    /// Whether the verifier fails when the success frequency is too low.
    pub fn is_asserted(self) -> bool {
        self != Theorem::T2
    }
}

impl fmt::Display for Theorem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Theorem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Theorem::ALL
            .into_iter()
            .find(|t| t.id().eq_ignore_ascii_case(s))
            .ok_or_else(|| invalid_argument(format!("unknown theorem id {s:?}")))
    }
}

/// How strictly hypotheses are enforced before running replicates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PreconditionPolicy {
    /// Enforce only the constant-free hypotheses (the signal-strength bound
    /// and `alpha > 1`); constant-dependent ones are reported.
    #[default]
    Explicit,
    /// Also enforce the `b_j^2` and sparsity bounds under the supplied constants.
    Strict,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerifyParams {
    pub rows: usize,
    pub cols: usize,
    pub strength: f64,
    pub active: usize,
    pub noise: NoiseSpec,
    pub support_style: SupportStyle,
    /// `Refactor` or `RefactorPlus`.
    pub variant: Variant,
    pub constants: TheoryConstants,
    /// Slack in the relative-improvement bound.
    pub epsilon: f64,
    pub policy: PreconditionPolicy,
    pub pass_threshold: f64,
    pub master_seed: u64,
}

impl Default for VerifyParams {
    fn default() -> Self {
        Self {
            rows: 200,
            cols: 200,
            strength: 4.0,
            active: 50,
            noise: NoiseSpec::gaussian(1.0),
            support_style: SupportStyle::Flat,
            variant: Variant::Refactor,
            constants: TheoryConstants::default(),
            epsilon: 0.1,
            policy: PreconditionPolicy::Explicit,
            pass_threshold: 0.95,
            master_seed: 0,
        }
    }
}

impl VerifyParams {
    /// Signal strength in units of the noise level.
    fn effective_strength(&self) -> f64 {
        if self.noise.sigma > 0.0 {
            self.strength / self.noise.sigma
        } else {
            f64::INFINITY
        }
    }

    fn signal_spec(&self) -> SignalSpec {
        SignalSpec::uniform(self.rows, self.cols, 1, self.active, self.strength)
            .with_support_style(self.support_style)
    }

    /// `1 - (t + ln n) / n * (1 + epsilon)`.
    pub fn improvement_bound(&self) -> f64 {
        let n = self.cols as f64;
        1.0 - (self.active as f64 + n.ln()) / n * (1.0 + self.epsilon)
    }
}

/// Per-replicate quantities; every theorem's margin is derived from these.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeedOutcome {
    pub seed: u64,
    pub cosine_sq: f64,
    pub sine_sq: f64,
    pub y_lead: f64,
    pub x_lead: f64,
    pub mse_tsvd: f64,
    pub mse_refactor: f64,
    pub relative_improvement: f64,
    pub max_inactive_v_sq: f64,
    pub min_active_v_sq: f64,
    /// `s^2 alpha^2 ln n / n`.
    pub detection_threshold: f64,
    pub margin: f64,
    pub pass: bool,
}

impl SeedOutcome {
    /// Every active entry of `v` beats every inactive one.
    pub fn separated(&self) -> bool {
        self.min_active_v_sq > self.max_inactive_v_sq
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerificationReport {
    pub theorem: Theorem,
    pub params: VerifyParams,
    pub thresholds: ThresholdReport,
    pub outcomes: Vec<SeedOutcome>,
}

impl VerificationReport {
    pub fn successes(&self) -> usize {
        self.outcomes.iter().filter(|o| o.pass).count()
    }

    pub fn frequency(&self) -> f64 {
        self.successes() as f64 / self.outcomes.len() as f64
    }

    pub fn mean_margin(&self) -> f64 {
        compensated_sum(self.outcomes.iter().map(|o| o.margin)) / self.outcomes.len() as f64
    }

    /// True unless the theorem is asserted and its frequency is below the
    /// configured threshold.
    pub fn holds(&self) -> bool {
        !self.theorem.is_asserted() || self.frequency() >= self.params.pass_threshold
    }

    pub fn summary(&self) -> String {
        format!(
            "{}: {}/{} replicates satisfied the conclusion (frequency {:.3}, threshold {:.2}{}), mean margin {:.6e}",
            self.theorem,
            self.successes(),
            self.outcomes.len(),
            self.frequency(),
            self.params.pass_threshold,
            if self.theorem.is_asserted() { "" } else { ", reported only" },
            self.mean_margin()
        )
    }

    /// Whitespace-delimited table, one row per replicate.
    pub fn write_table<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "seed c2 s2 y_lead x_lead mse_tsvd mse_rf rel_improvement max_inactive_v2 min_active_v2 tau margin pass"
        )?;
        for o in &self.outcomes {
            writeln!(
                out,
                "{} {} {} {} {} {} {} {} {} {} {} {} {}",
                o.seed,
                o.cosine_sq,
                o.sine_sq,
                o.y_lead,
                o.x_lead,
                o.mse_tsvd,
                o.mse_refactor,
                o.relative_improvement,
                o.max_inactive_v_sq,
                o.min_active_v_sq,
                o.detection_threshold,
                o.margin,
                u8::from(o.pass)
            )?;
        }
        out.flush()?;
        Ok(())
    }
}

fn check_preconditions(theorem: Theorem, params: &VerifyParams, report: &ThresholdReport) -> Result<()> {
    if !matches!(params.variant, Variant::Refactor | Variant::RefactorPlus) {
        return Err(invalid_argument(format!(
            "verification runs ReFACTor or ReFACTor+, not {}",
            params.variant
        )));
    }
    let needs_strength = matches!(theorem, Theorem::T1 | Theorem::T2 | Theorem::T3 | Theorem::LCosine);
    if needs_strength && !report.signal_above_threshold {
        return Err(Error::Precondition(format!(
            "{theorem} requires x > sqrt(1 + 2 sqrt(beta)) = {:.4} (beta = {}), got x = {}",
            report.weak_signal_threshold, report.beta, report.signal_strength
        )));
    }
    if matches!(theorem, Theorem::LInactive | Theorem::LActive) && !(params.constants.alpha > 1.0) {
        return Err(Error::Precondition(format!(
            "{theorem} requires alpha > 1, got {}",
            params.constants.alpha
        )));
    }
    if params.policy == PreconditionPolicy::Strict {
        let needs_support = matches!(theorem, Theorem::T1 | Theorem::T2 | Theorem::LActive);
        if needs_support && !report.support_condition {
            return Err(Error::Precondition(format!(
                "{theorem} requires b_j^2 > C ln n / n = {:.4} on active columns (C = {}), smallest is {:.4}",
                report.support_bound, params.constants.c, report.min_active_b_sq
            )));
        }
        if theorem == Theorem::T3 && !report.sparsity_condition {
            return Err(Error::Precondition(format!(
                "T3 requires t <= C0 n / ln n = {:.3} (C0 = {}), got t = {}",
                report.sparsity_bound, params.constants.c0, params.active
            )));
        }
    }
    Ok(())
}

fn active_b_entries(model: &SignalModel) -> Vec<f64> {
    let b = &model.right_vectors()[0];
    model.active_set().iter().map(|&j| b[j]).collect()
}

fn run_replicate(theorem: Theorem, params: &VerifyParams, seed: u64) -> Result<SeedOutcome> {
    let model = make_signal(&params.signal_spec(), seed)?;
    if params.policy == PreconditionPolicy::Strict {
        let report = thresholds(
            params.rows,
            params.cols,
            params.effective_strength(),
            params.active,
            &active_b_entries(&model),
            &params.constants,
        );
        check_preconditions(theorem, params, &report)?;
    }
    let obs = observe(&model, &params.noise, seed)?;
    let factors = svd(&obs.y)?;
    let tsvd = factors.truncate(1)?;
    let selected = denoise_with_factors(
        &obs.y,
        &factors,
        &EstimatorConfig::new(params.variant, 1, params.active),
    )?;
    let mse_tsvd = mse(&tsvd, &obs.x)?;
    let mse_refactor = mse(&selected.estimate, &obs.x)?;
    let improvement = relative_improvement(mse_tsvd, mse_refactor, model.signal_norm_sq())?;
    let align = alignment(&factors, &model)?;

    let v = factors.right(0);
    let active = model.active_mask();
    let mut max_inactive = 0.0f64;
    let mut min_active = f64::INFINITY;
    for (&vj, &is_active) in v.iter().zip(&active) {
        let sq = vj * vj;
        if is_active {
            min_active = min_active.min(sq);
        } else {
            max_inactive = max_inactive.max(sq);
        }
    }
    let n = params.cols as f64;
    let sine_sq = align.sine * align.sine;
    let tau = sine_sq * params.constants.alpha.powi(2) * n.ln() / n;

    let (margin, pass) = match theorem {
        Theorem::T1 | Theorem::T3 => {
            let m = mse_tsvd - mse_refactor;
            (m, m >= 0.0)
        }
        Theorem::T2 => {
            let m = improvement - params.improvement_bound();
            (m, m >= 0.0)
        }
        Theorem::LInactive => {
            let m = tau - max_inactive;
            (m, m >= 0.0)
        }
        Theorem::LActive => {
            let m = min_active - tau;
            (m, m >= 0.0)
        }
        Theorem::LCosine => {
            let m = align.cosine * align.cosine - 0.5;
            (m, m >= 0.0)
        }
        Theorem::LSinval => {
            let m = align.y_lead - align.x_lead;
            (m, m > 0.0)
        }
    };

    Ok(SeedOutcome {
        seed,
        cosine_sq: align.cosine * align.cosine,
        sine_sq,
        y_lead: align.y_lead,
        x_lead: align.x_lead,
        mse_tsvd,
        mse_refactor,
        relative_improvement: improvement,
        max_inactive_v_sq: max_inactive,
        min_active_v_sq: min_active,
        detection_threshold: tau,
        margin,
        pass,
    })
}

/// Runs `n_seeds` independent rank-one replicates and evaluates the chosen
/// conclusion on each. Replicates run on the current rayon pool; the result
/// does not depend on the number of threads.
pub fn verify_theorem(theorem: Theorem, params: &VerifyParams, n_seeds: usize) -> Result<VerificationReport> {
    if n_seeds == 0 {
        return Err(invalid_argument("need at least one replicate"));
    }
    let first_model = make_signal(&params.signal_spec(), derive_seed(params.master_seed, &[0]))?;
    let report = thresholds(
        params.rows,
        params.cols,
        params.effective_strength(),
        params.active,
        &active_b_entries(&first_model),
        &params.constants,
    );
    check_preconditions(theorem, params, &report)?;

    let outcomes = (0..n_seeds as u64)
        .into_par_iter()
        .map(|i| run_replicate(theorem, params, derive_seed(params.master_seed, &[i])))
        .collect::<Result<Vec<_>>>()?;

    Ok(VerificationReport {
        theorem,
        params: params.clone(),
        thresholds: report,
        outcomes,
    })
}

/// One cell of the relative-improvement grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImprovementCell {
    pub cols: usize,
    pub active: usize,
    pub strength: f64,
    pub bound: f64,
    pub mean_improvement: f64,
    pub mean_margin: f64,
    pub min_margin: f64,
    pub frequency: f64,
}

/// Reports observed relative improvement against its lower bound over a grid
/// of `(n, t, x)` cells; `m` is scaled with `n` to keep the base aspect ratio.
pub fn improvement_grid(
    base: &VerifyParams,
    grid: &[(usize, usize, f64)],
    n_seeds: usize,
) -> Result<Vec<ImprovementCell>> {
    let beta = base.rows as f64 / base.cols as f64;
    grid.iter()
        .enumerate()
        .map(|(idx, &(cols, active, strength))| {
            let params = VerifyParams {
                rows: ((cols as f64 * beta).round() as usize).max(1),
                cols,
                active,
                strength,
                master_seed: derive_seed(base.master_seed, &[idx as u64]),
                ..base.clone()
            };
            let report = verify_theorem(Theorem::T2, &params, n_seeds)?;
            let improvements: Vec<f64> = report.outcomes.iter().map(|o| o.relative_improvement).collect();
            Ok(ImprovementCell {
                cols,
                active,
                strength,
                bound: params.improvement_bound(),
                mean_improvement: compensated_sum(improvements.iter().copied()) / n_seeds as f64,
                mean_margin: report.mean_margin(),
                min_margin: report.outcomes.iter().map(|o| o.margin).fold(f64::INFINITY, f64::min),
                frequency: report.frequency(),
            })
        })
        .collect()
}

pub fn write_improvement_table<W: Write>(mut out: W, cells: &[ImprovementCell]) -> Result<()> {
    writeln!(out, "n t x bound mean_improvement mean_margin min_margin frequency")?;
    for c in cells {
        writeln!(
            out,
            "{} {} {} {} {} {} {} {}",
            c.cols, c.active, c.strength, c.bound, c.mean_improvement, c.mean_margin, c.min_margin, c.frequency
        )?;
    }
    out.flush()?;
    Ok(())
}
