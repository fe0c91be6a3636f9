use std::collections::BTreeMap;

use serde::Serialize;

use super::AnalysisError;
use crate::cfg::{segments, ControlFlowGraph};
use crate::ingest::{AlignedRun, Alignment};
use crate::stats::{pearson, summary};
use crate::trace_model::{Segment, Timelines};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalityRow {
    pub segment: Segment,
    /// Pearson correlation with end-to-end latency; `None` when undefined.
    pub criticality: Option<f64>,
    pub mean_duration_ns: Option<f64>,
    pub sd_ns: Option<f64>,
    /// Packets carrying the segment and a complete end-to-end latency.
    pub n: usize,
    pub cross_host: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalityReport {
    pub run_id: String,
    pub alignment: Alignment,
    pub complete_packets: usize,
    pub mean_e2e_ns: f64,
    /// Sorted by `|criticality|` descending, undefined rows last.
    pub rows: Vec<CriticalityRow>,
}

/// Correlates every segment of `graph` with the run's end-to-end latency.
pub fn latency_criticality(run: &AlignedRun, graph: &ControlFlowGraph) -> Result<CriticalityReport, AnalysisError> {
    let n = run.e2e_ns.len();
    if n == 0 {
        return Err(AnalysisError::NoCompletePackets(run.run_id().to_string()));
    }
    if n < 2 {
        return Err(AnalysisError::TooFewPackets {
            run_id: run.run_id().to_string(),
            n,
        });
    }
    let tl = run.timelines()?;
    Ok(CriticalityReport {
        run_id: run.run_id().to_string(),
        alignment: run.alignment.clone(),
        complete_packets: n,
        mean_e2e_ns: run.e2e_ns.values().sum::<f64>() / n as f64,
        rows: criticality_rows(&tl, graph, &run.e2e_ns),
    })
}

pub(super) fn criticality_rows(tl: &Timelines, graph: &ControlFlowGraph, e2e: &BTreeMap<u64, f64>) -> Vec<CriticalityRow> {
    let mut rows: Vec<CriticalityRow> = segments(graph)
        .into_iter()
        .map(|segment| {
            let (x, y): (Vec<f64>, Vec<f64>) = tl
                .durations(&segment)
                .into_iter()
                .filter_map(|(seq, d)| e2e.get(&seq).map(|&e| (d as f64, e)))
                .unzip();
            let criticality = pearson(&x, &y).ok().flatten();
            let s = summary(&x).ok();
            let host = |e: &str| graph.nodes.get(e).map(|n| n.host);
            CriticalityRow {
                cross_host: host(&segment.from) != host(&segment.to),
                segment,
                criticality,
                mean_duration_ns: s.map(|s| s.mean),
                sd_ns: s.map(|s| s.sd),
                n: x.len(),
            }
        })
        .collect();
    let key = |r: &CriticalityRow| r.criticality.map_or(-1.0, f64::abs);
    rows.sort_by(|a, b| key(b).total_cmp(&key(a)));
    rows
}

#[cfg(test)]
mod tests {
    use super::super::test_support::{chain, run};
    use super::*;
    use crate::cfg::{graph_for_runs, CfgOptions, Scope};
    use proptest::prelude::*;

    fn opts() -> CfgOptions {
        CfgOptions {
            min_support: 2,
            scope: Scope::CrossHost,
        }
    }

    #[test]
    fn jittery_segment_ranks_first_and_constant_is_undefined() {
        // S -> R1 varies, R1 -> R2 is constant
        let gaps: Vec<(i64, i64)> = (0..20).map(|i| (1000 + 37 * (i * i % 11), 500)).collect();
        let r = run("a", "v", &chain(&gaps));
        let g = graph_for_runs(&[&r], opts()).unwrap();
        let rep = latency_criticality(&r, &g).unwrap();
        assert_eq!(rep.rows.len(), 2);
        assert_eq!(rep.rows[0].segment, Segment::new("S", "R1"));
        assert!((rep.rows[0].criticality.unwrap() - 1.0).abs() < 1e-12);
        assert!(rep.rows[0].cross_host);
        assert_eq!(rep.rows[1].criticality, None);
        assert_eq!(rep.rows[1].mean_duration_ns, Some(500.0));
        assert_eq!(rep.complete_packets, 20);
    }

    #[test]
    fn one_packet_is_too_few() {
        let r = run("a", "v", &chain(&[(10, 10)]));
        let g = graph_for_runs(&[&r], CfgOptions { min_support: 1, ..opts() }).unwrap();
        assert!(matches!(
            latency_criticality(&r, &g),
            Err(AnalysisError::TooFewPackets { n: 1, .. })
        ));
    }

    proptest! {
        #[test]
        fn bounded_and_shift_invariant(
            gaps in proptest::collection::vec((1i64..10_000, 1i64..10_000), 3..30),
            shift in -1e6f64..1e6,
        ) {
            let r = run("a", "v", &chain(&gaps));
            let g = graph_for_runs(&[&r], CfgOptions { min_support: 1, ..opts() }).unwrap();
            let tl = r.timelines().unwrap();
            let base = criticality_rows(&tl, &g, &r.e2e_ns);
            let shifted: BTreeMap<u64, f64> = r.e2e_ns.iter().map(|(&k, &v)| (k, v + shift)).collect();
            let moved = criticality_rows(&tl, &g, &shifted);
            for row in &base {
                if let Some(c) = row.criticality {
                    prop_assert!((-1.0..=1.0).contains(&c));
                }
                let other = moved.iter().find(|m| m.segment == row.segment).unwrap();
                match (row.criticality, other.criticality) {
                    (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-6, "{a} vs {b}"),
                    (a, b) => prop_assert_eq!(a.is_some(), b.is_some()),
                }
            }
        }
    }
}
