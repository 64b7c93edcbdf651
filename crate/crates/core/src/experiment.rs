//! Monte Carlo scans comparing estimators over a one-dimensional parameter
//! grid.
//!
//! Each `(scan index, replicate index)` cell owns a seed derived from the
//! master seed, so any cell can be reproduced on its own and results do not
//! depend on how cells are scheduled across threads.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{invalid_argument, Error, Result};
use crate::estimators::{denoise_with_factors, EstimatorConfig, Variant};
use crate::matcore::svd;
use crate::rng::derive_seed;
use crate::stats::mean_and_standard_error;
use crate::synth::{make_signal, observe, NoiseSpec, SignalSpec, SupportStyle};
use crate::theory::mse;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScanVariable {
    /// Number of active columns.
    T,
    /// Common signal singular value.
    X,
    /// Number of columns, rows held fixed.
    N,
}

impl ScanVariable {
    pub fn name(self) -> &'static str {
        match self {
            ScanVariable::T => "t",
            ScanVariable::X => "x",
            ScanVariable::N => "n",
        }
    }
}

impl fmt::Display for ScanVariable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScanVariable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "t" | "T" => Ok(ScanVariable::T),
            "x" | "X" => Ok(ScanVariable::X),
            "n" | "N" => Ok(ScanVariable::N),
            _ => Err(invalid_argument(format!("cannot scan over {s:?}; expected t, x or n"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub scan: ScanVariable,
    pub scan_values: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
    pub rank: usize,
    pub active: usize,
    pub strength: f64,
    pub noise: NoiseSpec,
    pub support_style: SupportStyle,
    pub replicates: usize,
    pub estimators: Vec<Variant>,
    pub master_seed: u64,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            scan: ScanVariable::T,
            scan_values: vec![20.0, 60.0, 100.0, 140.0, 180.0],
            rows: 200,
            cols: 200,
            rank: 5,
            active: 100,
            strength: 4.0,
            noise: NoiseSpec::gaussian(1.0),
            support_style: SupportStyle::GaussianOrthonormalized,
            replicates: 50,
            estimators: vec![Variant::Refactor, Variant::Tsvd, Variant::Jl],
            master_seed: 0,
        }
    }
}

/// Concrete problem dimensions for one scan value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellParams {
    pub rows: usize,
    pub cols: usize,
    pub active: usize,
    pub strength: f64,
}

fn as_count(value: f64, what: &str) -> Result<usize> {
    if value >= 1.0 && value.fract() == 0.0 && value <= u32::MAX as f64 {
        Ok(value as usize)
    } else {
        Err(invalid_argument(format!("{what} must be a positive integer, got {value}")))
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.scan_values.is_empty() {
            return Err(invalid_argument("scan values must not be empty"));
        }
        if self.scan_values.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid_argument("scan values must be strictly increasing"));
        }
        if self.replicates == 0 {
            return Err(invalid_argument("need at least one replicate"));
        }
        if self.estimators.is_empty() {
            return Err(invalid_argument("no estimators selected"));
        }
        self.noise.validate()?;
        for idx in 0..self.scan_values.len() {
            let cell = self.cell(idx)?;
            if cell.active > cell.cols {
                return Err(invalid_argument(format!(
                    "t = {} exceeds n = {}",
                    cell.active, cell.cols
                )));
            }
            if self.rank == 0 || self.rank > cell.rows.min(cell.active) {
                return Err(invalid_argument(format!(
                    "rank {} must lie in 1..=min(m, t) = {}",
                    self.rank,
                    cell.rows.min(cell.active)
                )));
            }
            if !(cell.strength > 0.0 && cell.strength.is_finite()) {
                return Err(invalid_argument("signal strength must be positive"));
            }
        }
        Ok(())
    }

    pub fn cell(&self, scan_index: usize) -> Result<CellParams> {
        let value = self.scan_values[scan_index];
        let mut cell = CellParams {
            rows: self.rows,
            cols: self.cols,
            active: self.active,
            strength: self.strength,
        };
        match self.scan {
            ScanVariable::T => cell.active = as_count(value, "t")?,
            ScanVariable::X => cell.strength = value,
            ScanVariable::N => cell.cols = as_count(value, "n")?,
        }
        Ok(cell)
    }

    /// Seed of one replicate in one grid cell.
    pub fn replicate_seed(&self, scan_index: usize, replicate: usize) -> u64 {
        derive_seed(self.master_seed, &[scan_index as u64, replicate as u64])
    }
}

/// MSE of each requested estimator on one replicate, in `spec.estimators` order.
pub fn run_replicate(spec: &ExperimentSpec, scan_index: usize, replicate: usize) -> Result<Vec<f64>> {
    let cell = spec.cell(scan_index)?;
    let seed = spec.replicate_seed(scan_index, replicate);
    let signal = SignalSpec::uniform(cell.rows, cell.cols, spec.rank, cell.active, cell.strength)
        .with_support_style(spec.support_style);
    let model = make_signal(&signal, seed)?;
    let obs = observe(&model, &spec.noise, seed)?;
    let factors = svd(&obs.y)?;
    spec.estimators
        .iter()
        .map(|&variant| {
            let config = EstimatorConfig::new(variant, spec.rank, cell.active);
            let result = denoise_with_factors(&obs.y, &factors, &config)?;
            mse(&result.estimate, &obs.x)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellSummary {
    pub variant: Variant,
    pub mean: f64,
    pub standard_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScanRow {
    pub value: f64,
    pub cells: Vec<CellSummary>,
}

impl ScanRow {
    pub fn get(&self, variant: Variant) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.variant == variant)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentResult {
    pub scan: ScanVariable,
    pub rows: Vec<ScanRow>,
    /// Raw per-replicate MSEs: `raw[scan][replicate][estimator]`.
    pub raw: Vec<Vec<Vec<f64>>>,
}

impl ExperimentResult {
    /// Whitespace-delimited table: `<var>` then `<est>_mse <est>_mse_std`
    /// per estimator, where the `_std` column holds the standard error of
    /// the mean.
    pub fn write_table<W: Write>(&self, mut out: W) -> Result<()> {
        let mut header = vec![self.scan.name().to_string()];
        if let Some(first) = self.rows.first() {
            for c in &first.cells {
                let key = c.variant.mse_column();
                header.push(key.to_string());
                header.push(format!("{key}_std"));
            }
        }
        writeln!(out, "{}", header.join(" "))?;
        for row in &self.rows {
            let mut fields = vec![format!("{}", row.value)];
            for c in &row.cells {
                fields.push(format!("{}", c.mean));
                fields.push(format!("{}", c.standard_error));
            }
            writeln!(out, "{}", fields.join(" "))?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Runs the whole grid on the current rayon pool.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.validate()?;
    let cells: Vec<(usize, usize)> = (0..spec.scan_values.len())
        .flat_map(|s| (0..spec.replicates).map(move |r| (s, r)))
        .collect();
    let flat = cells
        .par_iter()
        .map(|&(s, r)| run_replicate(spec, s, r))
        .collect::<Result<Vec<_>>>()?;

    let raw: Vec<Vec<Vec<f64>>> = flat.chunks(spec.replicates).map(<[_]>::to_vec).collect();
    let rows = raw
        .iter()
        .zip(&spec.scan_values)
        .map(|(reps, &value)| ScanRow {
            value,
            cells: spec
                .estimators
                .iter()
                .enumerate()
                .map(|(k, &variant)| {
                    let values: Vec<f64> = reps.iter().map(|r| r[k]).collect();
                    let (mean, standard_error) = mean_and_standard_error(&values);
                    CellSummary {
                        variant,
                        mean,
                        standard_error,
                    }
                })
                .collect(),
        })
        .collect();
    Ok(ExperimentResult {
        scan: spec.scan,
        rows,
        raw,
    })
}
