//! The differential analyses: latency criticality, timing predictability,
//! modification tracking, energy efficiency and slowdown.
//!
//! Every analysis consumes aligned runs and, where segments matter, a
//! reduced control-flow graph. Reports are plain serializable data; see
//! [`render`] for the text, JSON and CSV views.

mod criticality;
mod diff;
mod energy;
mod predictability;
pub mod render;
mod slowdown;

use serde::Serialize;

pub use criticality::{latency_criticality, CriticalityReport, CriticalityRow};
pub use diff::{modification_diff, DiffReport, DiffRow};
pub use energy::{energy_et2, et2, EnergyReport, EnergyRow, ET2_FORMULA};
pub use predictability::{timing_predictability, PredictabilityReport, PredictabilityRow};
pub use slowdown::{slowdown, slowdown_table, SlowdownReport, SlowdownRow, E2E_LABEL};

use crate::cfg::{graph_for_runs, CfgError, CfgOptions, ControlFlowGraph};
use crate::ingest::{AlignedRun, IngestError};
use crate::stats::{
    ad_ksample, ad_ksample_permutation, AdTestResult, StatsError, TieMode, DEFAULT_ALPHA,
};

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error("NoCompletePackets({0}): no packet carries both end-to-end endpoints")]
    NoCompletePackets(String),
    #[error("TooFewPackets({run_id}): {n} complete packets, need at least 2")]
    TooFewPackets { run_id: String, n: usize },
    #[error("VersionMismatch: run {run_id} has version \"{found}\", expected \"{expected}\"")]
    VersionMismatch {
        run_id: String,
        expected: String,
        found: String,
    },
    #[error("InsufficientRuns: need at least {needed} runs, got {got}")]
    InsufficientRuns { needed: usize, got: usize },
    #[error("NoCommonSegments: the runs share no control-flow segment")]
    NoCommonSegments,
    #[error("MissingEnergy({0})")]
    MissingEnergy(String),
    #[error("NoPackets({0}): packet_count is 0")]
    NoPackets(String),
    #[error("ZeroFastDuration({0})")]
    ZeroFastDuration(String),
    #[error("SegmentMissing({0})")]
    SegmentMissing(String),
    #[error(transparent)]
    Cfg(#[from] CfgError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// How p-values of the Anderson-Darling tests are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestMethod {
    Asymptotic,
    /// Permutation p-values; segment `i` uses seed `seed + i`.
    Permutation { iterations: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisOptions {
    pub alpha: f64,
    pub tie_mode: TieMode,
    pub cfg: CfgOptions,
    pub method: TestMethod,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            alpha: DEFAULT_ALPHA,
            tie_mode: TieMode::Midrank,
            cfg: CfgOptions::default(),
            method: TestMethod::Asymptotic,
        }
    }
}

impl AnalysisOptions {
    fn check(&self) -> Result<(), StatsError> {
        if self.alpha > 0.0 && self.alpha < 1.0 {
            Ok(())
        } else {
            Err(StatsError::InvalidAlpha(self.alpha))
        }
    }

    fn test(&self, samples: &[Vec<f64>], index: usize) -> Result<AdTestResult, StatsError> {
        match self.method {
            TestMethod::Asymptotic => ad_ksample(samples, self.alpha, self.tie_mode),
            TestMethod::Permutation { iterations, seed } => ad_ksample_permutation(
                samples,
                self.alpha,
                self.tie_mode,
                iterations,
                seed.wrapping_add(index as u64),
            ),
        }
    }
}

/// Per-packet end-to-end latency in seconds, in packet order.
pub fn e2e_latency(run: &AlignedRun) -> Result<Vec<f64>, AnalysisError> {
    if run.e2e_ns.is_empty() {
        return Err(AnalysisError::NoCompletePackets(run.run_id().to_string()));
    }
    Ok(run.e2e_ns.values().map(|ns| ns / 1e9).collect())
}

/// The reduced graph of one run.
pub fn run_graph(run: &AlignedRun, options: CfgOptions) -> Result<ControlFlowGraph, AnalysisError> {
    Ok(graph_for_runs(&[run], options)?)
}

/// Label and run ids of a group of runs that must share one version.
fn common_version(runs: &[AlignedRun]) -> Result<String, AnalysisError> {
    if runs.len() < 2 {
        return Err(AnalysisError::InsufficientRuns {
            needed: 2,
            got: runs.len(),
        });
    }
    let expected = runs[0].version_label();
    for run in &runs[1..] {
        if run.version_label() != expected {
            return Err(AnalysisError::VersionMismatch {
                run_id: run.run_id().to_string(),
                expected: expected.to_string(),
                found: run.version_label().to_string(),
            });
        }
    }
    Ok(expected.to_string())
}

fn mean(xs: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (s, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRef {
    pub run_id: String,
    pub version_label: String,
}

impl From<&AlignedRun> for RunRef {
    fn from(run: &AlignedRun) -> Self {
        RunRef {
            run_id: run.run_id().to_string(),
            version_label: run.version_label().to_string(),
        }
    }
}


#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;

    #[test]
    fn e2e_in_seconds() {
        let r = run("a", "v", &chain(&[(400_000, 600_000), (100, 200)]));
        assert_eq!(e2e_latency(&r).unwrap(), vec![1e-3, 300e-9]);
    }

    #[test]
    fn lost_packet_is_excluded() {
        let mut rows = chain(&[(10, 10), (20, 20)]);
        rows.push((2, "S", "send", 5_000_000));
        let r = run("a", "v", &rows);
        assert_eq!(e2e_latency(&r).unwrap().len(), 2);
    }

    #[test]
    fn version_check() {
        let a = run("a", "v1", &chain(&[(10, 10), (20, 20)]));
        let b = run("b", "v2", &chain(&[(10, 10), (20, 20)]));
        assert!(matches!(
            common_version(&[a.clone(), b]),
            Err(AnalysisError::VersionMismatch { found, .. }) if found == "v2"
        ));
        assert!(matches!(
            common_version(std::slice::from_ref(&a)),
            Err(AnalysisError::InsufficientRuns { needed: 2, got: 1 })
        ));
    }
}
