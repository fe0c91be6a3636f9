use rayon::prelude::*;
use serde::Serialize;

use super::predictability::{method_of, test_or_skip};
use super::{common_version, timing_predictability, AnalysisError, AnalysisOptions, RunRef};
use crate::cfg::{diff_graphs, graph_for_runs, segments, GraphDiff};
use crate::ingest::AlignedRun;
use crate::stats::{AdMethod, AdTestResult, Verdict};
use crate::trace_model::Segment;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiffRow {
    pub segment: Segment,
    pub test: AdTestResult,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiffReport {
    pub old_version: String,
    pub new_version: String,
    pub old_runs: Vec<RunRef>,
    pub new_runs: Vec<RunRef>,
    pub alpha: f64,
    pub method: AdMethod,
    pub graph_diff: GraphDiff,
    /// Segments whose timing changed between the versions.
    pub changed_segments: Vec<DiffRow>,
    /// Segments already non-reproducible among the old runs; never
    /// reported as changed.
    pub baseline_noise: Vec<Segment>,
    /// Old-versus-new tests run.
    pub n_tests: usize,
    pub n_baseline_tests: usize,
    /// Segments present in both versions that could not be tested.
    pub skipped: Vec<Segment>,
}

/// Finds segments whose timing differs between two code versions, after
/// discarding segments that already vary between runs of the old version.
pub fn modification_diff(
    old_runs: &[AlignedRun],
    new_runs: &[AlignedRun],
    options: &AnalysisOptions,
) -> Result<DiffReport, AnalysisError> {
    let old_version = common_version(old_runs)?;
    let new_version = common_version(new_runs)?;
    options.check()?;

    let baseline = timing_predictability(old_runs, options)?;
    let baseline_noise = baseline.different_segments();

    let old_refs: Vec<&AlignedRun> = old_runs.iter().collect();
    let new_refs: Vec<&AlignedRun> = new_runs.iter().collect();
    let old_graph = graph_for_runs(&old_refs, options.cfg)?;
    let new_graph = graph_for_runs(&new_refs, options.cfg)?;
    let new_segments = segments(&new_graph);
    let shared: Vec<Segment> = segments(&old_graph)
        .into_iter()
        .filter(|s| new_segments.contains(s))
        .collect();

    let pooled = |runs: &[AlignedRun], segment: &Segment| -> Result<Vec<f64>, AnalysisError> {
        let mut out = Vec::new();
        for run in runs {
            out.extend(run.timelines()?.durations(segment).values().map(|&d| d as f64));
        }
        Ok(out)
    };
    let tested = shared
        .par_iter()
        .enumerate()
        .map(|(i, segment)| {
            let samples = vec![pooled(old_runs, segment)?, pooled(new_runs, segment)?];
            let (test, _) = test_or_skip(&samples, options, i)?;
            Ok((segment.clone(), test))
        })
        .collect::<Result<Vec<_>, AnalysisError>>()?;

    let n_tests = tested.iter().filter(|(_, t)| t.is_some()).count();
    let mut changed_segments = Vec::new();
    let mut skipped = Vec::new();
    for (segment, test) in tested {
        match test {
            None => skipped.push(segment),
            Some(t) if t.verdict == Verdict::Different && !baseline_noise.contains(&segment) => {
                changed_segments.push(DiffRow { segment, test: t })
            }
            Some(_) => {}
        }
    }

    Ok(DiffReport {
        old_version,
        new_version,
        old_runs: old_runs.iter().map(RunRef::from).collect(),
        new_runs: new_runs.iter().map(RunRef::from).collect(),
        alpha: options.alpha,
        method: method_of(options),
        graph_diff: diff_graphs(&old_graph, &new_graph),
        changed_segments,
        baseline_noise,
        n_tests,
        n_baseline_tests: baseline.n_tests,
        skipped,
    })
}
