//! Denoising of low-rank, column-sparse matrices.
//!
//! The crate provides the truncated-SVD baseline, the ReFACTor family of
//! column-selecting estimators, Johnstone–Lu screening, a generator for
//! synthetic column-sparse signals, Monte Carlo verifiers for the
//! estimators' theoretical guarantees, and a confounder-deflation
//! association pipeline.

// Negated float comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assoc;
pub mod error;
pub mod estimators;
pub mod experiment;
pub mod matcore;
pub mod rng;
pub mod stats;
pub mod synth;
pub mod theory;

pub use error::{Error, Result};
pub use estimators::{
    denoise, denoise_with_factors, DenoiseResult, EstimatorConfig, SelectionResult, StarStatistic,
    Variant,
};
pub use matcore::{svd, DenseMatrix, SvdFactors};
