//! Metrics for evaluation runs: confusion matrices, F1 with bootstrap
//! intervals, McNemar tests, false discovery rate, per-grade sensitivity and
//! Likert summaries.
//!
//! Predictions are `Option<L>`; `None` is an Invalid response and counts as
//! a false negative for the ground-truth class.

mod bootstrap;
mod confusion;
mod f1;
mod likert;
mod mcnemar;
mod rates;
mod report;

use thiserror::Error;

pub use bootstrap::{
    bootstrap_ci, percentile, BootstrapConfig, F1WithCi, Identity, Resampler, ResamplerRegistry,
    WithReplacement,
};
pub use confusion::ConfusionMatrix;
pub use f1::{binary_f1, micro_f1, tally, F1Mode, Tally};
pub use likert::{likert_summary, Criterion, LikertRating, LikertRow};
pub use mcnemar::{
    mcnemar, mcnemar_chi_square, mcnemar_counts, mcnemar_exact, stars, McNemarMethod, McNemarResult,
};
pub use rates::{
    false_discovery_rate, severity_sensitivity, FdrResult, GradeSensitivity, SensitivityTable,
};
pub use report::{compare_runs, evaluate_run, render_text_table, Comparison, RunMetrics};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("empty input")]
    Empty,
    #[error("length mismatch: {predictions} predictions vs {truths} ground-truth labels")]
    LengthMismatch { predictions: usize, truths: usize },
    #[error("label '{0}' is not in the label set")]
    UnknownLabel(String),
    #[error("no predicted positives")]
    NoPredictedPositives,
    #[error("rating {score} is outside 1..=5")]
    InvalidRating { score: u8 },
    #[error("invalid parameter: {0}")]
    BadParameter(String),
}

pub(crate) fn check_aligned<P, T>(predictions: &[P], truths: &[T]) -> Result<(), StatsError> {
    if predictions.len() != truths.len() {
        return Err(StatsError::LengthMismatch {
            predictions: predictions.len(),
            truths: truths.len(),
        });
    }
    if truths.is_empty() {
        return Err(StatsError::Empty);
    }
    Ok(())
}
