//! Statistical kernel: correlation, descriptive summaries and the k-sample
//! Anderson-Darling test with its permutation oracle.

mod anderson;
mod asymptotic;
mod descriptive;
mod permutation;

pub use anderson::{ad_ksample, ad_statistic, AdMethod, AdTestResult, PValueSource, TieMode, Verdict};
pub use asymptotic::{asymptotic_pvalue, critical_values, limit_survival, SIGNIFICANCE_LEVELS};
pub use descriptive::{pearson, summary, Summary};
pub use permutation::{ad_ksample_permutation, ad_permutation_pvalue, MIN_PERMUTATIONS};

pub const DEFAULT_ALPHA: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("LengthMismatch({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },
    #[error("TooShort: need at least 2 observations, got {0}")]
    TooShort(usize),
    #[error("EmptySeries")]
    EmptySeries,
    #[error("TooFewSamples: need k >= 2 samples of size >= 2")]
    TooFewSamples,
    #[error("DegenerateSamples: all observations are identical")]
    DegenerateSamples,
    #[error("NonFinite: series contains NaN or infinity")]
    NonFinite,
    #[error("InvalidAlpha({0}): must lie in (0, 1)")]
    InvalidAlpha(f64),
    #[error("TooFewIterations({0}): need at least {min}", min = MIN_PERMUTATIONS)]
    TooFewIterations(usize),
}
