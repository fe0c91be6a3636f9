use serde::Serialize;

use super::{mean, AnalysisError};
use crate::cfg::{segments, ControlFlowGraph};
use crate::ingest::AlignedRun;
use crate::trace_model::Segment;

/// Label of the end-to-end pseudo-segment.
pub const E2E_LABEL: &str = "E2E";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlowdownRow {
    pub label: String,
    /// `None` for the end-to-end row.
    pub segment: Option<Segment>,
    pub d_fast_ns: f64,
    pub d_slow_ns: f64,
    /// `d_slow / d_fast`.
    pub s: f64,
    /// `s / s_e2e`.
    pub s_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlowdownReport {
    pub fast_run: String,
    pub slow_run: String,
    pub fast_freq_mhz: Option<u32>,
    pub slow_freq_mhz: Option<u32>,
    pub s_e2e: f64,
    /// The end-to-end row first, then the segments in graph order.
    pub rows: Vec<SlowdownRow>,
}

/// Slowdown rows from mean durations. `means` holds `(segment, d_fast,
/// d_slow)`; `e2e` holds the mean end-to-end latencies `(fast, slow)`.
pub fn slowdown_table(means: &[(Segment, f64, f64)], e2e: (f64, f64)) -> Result<(f64, Vec<SlowdownRow>), AnalysisError> {
    if e2e.0 <= 0.0 {
        return Err(AnalysisError::ZeroFastDuration(E2E_LABEL.to_string()));
    }
    let s_e2e = e2e.1 / e2e.0;
    let mut rows = vec![SlowdownRow {
        label: E2E_LABEL.to_string(),
        segment: None,
        d_fast_ns: e2e.0,
        d_slow_ns: e2e.1,
        s: s_e2e,
        s_norm: s_e2e / s_e2e,
    }];
    for (segment, fast, slow) in means {
        if *fast <= 0.0 {
            return Err(AnalysisError::ZeroFastDuration(segment.label()));
        }
        let s = slow / fast;
        rows.push(SlowdownRow {
            label: segment.label(),
            segment: Some(segment.clone()),
            d_fast_ns: *fast,
            d_slow_ns: *slow,
            s,
            s_norm: s / s_e2e,
        });
    }
    Ok((s_e2e, rows))
}

/// Per-segment slowdown of `slow` relative to `fast`, normalized by the
/// end-to-end slowdown.
pub fn slowdown(fast: &AlignedRun, slow: &AlignedRun, graph: &ControlFlowGraph) -> Result<SlowdownReport, AnalysisError> {
    let (tf, ts) = (fast.timelines()?, slow.timelines()?);
    let mut means = Vec::new();
    for segment in segments(graph) {
        let avg = |tl: &crate::trace_model::Timelines| mean(tl.durations(&segment).values().map(|&d| d as f64));
        match (avg(&tf), avg(&ts)) {
            (Some(f), Some(s)) => means.push((segment, f, s)),
            _ => return Err(AnalysisError::SegmentMissing(segment.label())),
        }
    }
    let e2e = |run: &AlignedRun| {
        mean(run.e2e_ns.values().copied()).ok_or_else(|| AnalysisError::NoCompletePackets(run.run_id().to_string()))
    };
    let (s_e2e, rows) = slowdown_table(&means, (e2e(fast)?, e2e(slow)?))?;
    Ok(SlowdownReport {
        fast_run: fast.run_id().to_string(),
        slow_run: slow.run_id().to_string(),
        fast_freq_mhz: fast.sender.meta.freq_mhz,
        slow_freq_mhz: slow.sender.meta.freq_mhz,
        s_e2e,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::super::test_support::{chain, run};
    use super::*;
    use crate::cfg::{graph_for_runs, CfgOptions, Scope};
    use proptest::prelude::*;

    #[test]
    fn formula_substitution() {
        let (s_e2e, rows) = slowdown_table(&[(Segment::new("A", "B"), 10_000.0, 20_000.0)], (50_000.0, 100_000.0)).unwrap();
        assert_eq!(s_e2e, 2.0);
        assert_eq!(rows[1].s, 2.0);
        assert_eq!(rows[1].s_norm, 1.0);
        assert_eq!(rows[0].label, E2E_LABEL);
        assert_eq!(rows[0].s_norm, 1.0);
    }

    #[test]
    fn zero_fast_duration() {
        let r = slowdown_table(&[(Segment::new("A", "B"), 0.0, 1.0)], (1.0, 1.0));
        assert!(matches!(r, Err(AnalysisError::ZeroFastDuration(l)) if l == "<A,B>"));
    }

    #[test]
    fn identical_runs_and_missing_segment() {
        let gaps: Vec<(i64, i64)> = (0..10).map(|i| (100 + i, 300 + 2 * i)).collect();
        let a = run("a", "v", &chain(&gaps));
        let opts = CfgOptions {
            min_support: 5,
            scope: Scope::CrossHost,
        };
        let g = graph_for_runs(&[&a], opts).unwrap();
        let rep = slowdown(&a, &a.clone(), &g).unwrap();
        assert!(rep.rows.iter().all(|r| (r.s_norm - 1.0).abs() < 1e-9));
        assert_eq!(rep.rows.len(), 3);

        let other = run("b", "v", &[(0, "S", "send", 0), (0, "X", "recv", 5), (1, "S", "send", 9), (1, "X", "recv", 20)]);
        assert!(matches!(slowdown(&a, &other, &g), Err(AnalysisError::SegmentMissing(_))));
    }

    proptest! {
        #[test]
        fn uniform_scaling_normalizes_to_one(
            fast in proptest::collection::vec(1.0f64..1e7, 1..12),
            e2e in 1.0f64..1e8,
            c in 0.01f64..100.0,
        ) {
            let means: Vec<_> = fast
                .iter()
                .enumerate()
                .map(|(i, &f)| (Segment::new(format!("e{i}"), format!("e{}", i + 1)), f, f * c))
                .collect();
            let (_, rows) = slowdown_table(&means, (e2e, e2e * c)).unwrap();
            for r in rows {
                prop_assert!((r.s_norm - 1.0).abs() < 1e-9, "{}", r.s_norm);
            }
        }
    }
}
