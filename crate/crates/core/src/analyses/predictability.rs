use rayon::prelude::*;
use serde::Serialize;

use super::criticality::criticality_rows;
use super::{common_version, mean, run_graph, AnalysisError, AnalysisOptions, RunRef};
use crate::cfg::segments;
use crate::ingest::AlignedRun;
use crate::stats::{AdMethod, AdTestResult, StatsError, TieMode, Verdict};
use crate::trace_model::{Segment, Timelines};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictabilityRow {
    pub segment: Segment,
    /// Samples per run, in run order.
    pub sample_sizes: Vec<usize>,
    pub test: Option<AdTestResult>,
    /// Why no test ran, e.g. identical durations in every run.
    pub skipped: Option<String>,
    /// Mean latency criticality over the runs where it is defined.
    pub criticality: Option<f64>,
}

impl PredictabilityRow {
    pub fn is_different(&self) -> bool {
        self.test.as_ref().is_some_and(|t| t.verdict == Verdict::Different)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictabilityReport {
    pub version_label: String,
    pub runs: Vec<RunRef>,
    pub alpha: f64,
    pub method: AdMethod,
    pub tie_mode: TieMode,
    /// Tests actually run; no multiple-testing correction is applied.
    pub n_tests: usize,
    pub n_different: usize,
    pub rows: Vec<PredictabilityRow>,
}

impl PredictabilityReport {
    pub fn different_segments(&self) -> Vec<Segment> {
        self.rows
            .iter()
            .filter(|r| r.is_different())
            .map(|r| r.segment.clone())
            .collect()
    }
}

pub(super) struct Prepared {
    pub timelines: Timelines,
    pub segments: Vec<Segment>,
    pub criticality: Vec<(Segment, Option<f64>)>,
}

pub(super) fn prepare(runs: &[AlignedRun], options: &AnalysisOptions) -> Result<Vec<Prepared>, AnalysisError> {
    runs.par_iter()
        .map(|run| {
            let graph = run_graph(run, options.cfg)?;
            let timelines = run.timelines()?;
            let criticality = criticality_rows(&timelines, &graph, &run.e2e_ns)
                .into_iter()
                .map(|r| (r.segment, r.criticality))
                .collect();
            Ok(Prepared {
                segments: segments(&graph),
                timelines,
                criticality,
            })
        })
        .collect()
}

/// Outcome of testing one segment; degenerate inputs are skipped, not
/// errors.
pub(super) fn test_or_skip(
    samples: &[Vec<f64>],
    options: &AnalysisOptions,
    index: usize,
) -> Result<(Option<AdTestResult>, Option<String>), AnalysisError> {
    match options.test(samples, index) {
        Ok(t) => Ok((Some(t), None)),
        Err(e @ (StatsError::TooFewSamples | StatsError::DegenerateSamples)) => Ok((None, Some(e.to_string()))),
        Err(e) => Err(e.into()),
    }
}

pub(super) fn method_of(options: &AnalysisOptions) -> AdMethod {
    match options.method {
        super::TestMethod::Asymptotic => AdMethod::Asymptotic,
        super::TestMethod::Permutation { .. } => AdMethod::Permutation,
    }
}

/// Tests, per segment present in every run's graph, whether the runs'
/// duration samples share one distribution.
pub fn timing_predictability(runs: &[AlignedRun], options: &AnalysisOptions) -> Result<PredictabilityReport, AnalysisError> {
    let version_label = common_version(runs)?;
    options.check()?;
    let prepared = prepare(runs, options)?;
    let common: Vec<Segment> = prepared[0]
        .segments
        .iter()
        .filter(|s| prepared[1..].iter().all(|p| p.segments.contains(s)))
        .cloned()
        .collect();
    if common.is_empty() {
        return Err(AnalysisError::NoCommonSegments);
    }

    let rows = common
        .par_iter()
        .enumerate()
        .map(|(i, segment)| {
            let samples: Vec<Vec<f64>> = prepared
                .iter()
                .map(|p| p.timelines.durations(segment).values().map(|&d| d as f64).collect())
                .collect();
            let (test, skipped) = test_or_skip(&samples, options, i)?;
            let criticality = mean(prepared.iter().filter_map(|p| {
                p.criticality
                    .iter()
                    .find(|(s, _)| s == segment)
                    .and_then(|(_, c)| *c)
            }));
            Ok(PredictabilityRow {
                segment: segment.clone(),
                sample_sizes: samples.iter().map(Vec::len).collect(),
                test,
                skipped,
                criticality,
            })
        })
        .collect::<Result<Vec<_>, AnalysisError>>()?;

    Ok(PredictabilityReport {
        version_label,
        runs: runs.iter().map(RunRef::from).collect(),
        alpha: options.alpha,
        method: method_of(options),
        tie_mode: options.tie_mode,
        n_tests: rows.iter().filter(|r| r.test.is_some()).count(),
        n_different: rows.iter().filter(|r| r.is_different()).count(),
        rows,
    })
}
