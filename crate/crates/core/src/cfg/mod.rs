//! Control-flow reconstruction from per-packet event orderings.
//!
//! Event `A` happens before `B` when `A` carries the strictly smaller
//! timestamp in every packet that stamped both. Pairs ordered neither way
//! are concurrent; pairs seen together in fewer than `min_support` packets
//! stay unknown. The transitive reduction of the happens-before relation
//! gives the control-flow edges, and every edge is one code segment.

mod dot;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

pub use dot::{export_dot, render_dot};

use crate::ingest::{AlignedRun, IngestError};
use crate::trace_model::{NodeInfo, Segment, Timelines, Trace};

pub const DEFAULT_MIN_SUPPORT: usize = 30;

pub type Pair = (String, String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scope {
    /// Only pairs of events recorded on the same host are related.
    PerHost,
    /// Pairs across hosts are related too; requires an aligned run.
    CrossHost,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CfgOptions {
    pub min_support: usize,
    pub scope: Scope,
}

impl Default for CfgOptions {
    fn default() -> Self {
        CfgOptions {
            min_support: DEFAULT_MIN_SUPPORT,
            scope: Scope::PerHost,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CfgError {
    #[error("CyclicRelation: happens-before contains a cycle through {0}")]
    CyclicRelation(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlFlowGraph {
    pub nodes: BTreeMap<String, NodeInfo>,
    /// `(A, B)` with `A` happening before `B`.
    pub hb_plus: BTreeSet<Pair>,
    /// Happens-directly-before; empty until [`reduce`] ran.
    pub edges: BTreeSet<Pair>,
    /// Unordered pairs, stored with the smaller name first.
    pub concurrent: BTreeSet<Pair>,
    /// Packets observing both events, keyed like `concurrent`.
    pub support: BTreeMap<Pair, usize>,
    pub min_support: usize,
    pub scope: Scope,
}

fn unordered(a: &str, b: &str) -> Pair {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

/// Computes happens-before and concurrency over every packet of `timelines`.
pub fn happens_before(timelines: &Timelines, min_support: usize, scope: Scope) -> ControlFlowGraph {
    let names: Vec<&String> = timelines.nodes.keys().collect();
    let index: BTreeMap<&str, usize> = names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    let hosts: Vec<_> = timelines.nodes.values().map(|n| n.host).collect();
    let n = names.len();

    let mut support = vec![0usize; n * n];
    let mut before = vec![0usize; n * n];
    let mut present: Vec<(usize, i64)> = Vec::with_capacity(n);
    for packet in &timelines.packets {
        present.clear();
        present.extend(
            packet
                .times
                .iter()
                .filter_map(|(name, &t)| index.get(name.as_str()).map(|&i| (i, t))),
        );
        for (x, &(i, ti)) in present.iter().enumerate() {
            for &(j, tj) in &present[x + 1..] {
                if scope == Scope::PerHost && hosts[i] != hosts[j] {
                    continue;
                }
                let (lo, hi) = if i < j { (i, j) } else { (j, i) };
                support[lo * n + hi] += 1;
                if ti < tj {
                    before[i * n + j] += 1;
                } else if tj < ti {
                    before[j * n + i] += 1;
                }
            }
        }
    }

    let mut graph = ControlFlowGraph {
        nodes: timelines.nodes.clone(),
        hb_plus: BTreeSet::new(),
        edges: BTreeSet::new(),
        concurrent: BTreeSet::new(),
        support: BTreeMap::new(),
        min_support,
        scope,
    };
    for i in 0..n {
        for j in i + 1..n {
            let s = support[i * n + j];
            if s == 0 {
                continue;
            }
            graph.support.insert((names[i].clone(), names[j].clone()), s);
            if s < min_support {
                continue;
            }
            if before[i * n + j] == s {
                graph.hb_plus.insert((names[i].clone(), names[j].clone()));
            } else if before[j * n + i] == s {
                graph.hb_plus.insert((names[j].clone(), names[i].clone()));
            } else {
                graph.concurrent.insert((names[i].clone(), names[j].clone()));
            }
        }
    }
    graph
}

/// Fills `edges` with the transitive reduction of `hb_plus`.
pub fn reduce(graph: &ControlFlowGraph) -> Result<ControlFlowGraph, CfgError> {
    topological_order(graph.nodes.keys(), &graph.hb_plus)?;
    let mut succ: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for (a, b) in &graph.hb_plus {
        succ.entry(a).or_default().insert(b);
    }
    let empty = BTreeSet::new();
    let edges = graph
        .hb_plus
        .iter()
        .filter(|(a, b)| {
            let via = succ.get(a.as_str()).unwrap_or(&empty);
            !via.iter().any(|e| {
                succ.get(e)
                    .is_some_and(|next| next.contains(b.as_str()))
            })
        })
        .cloned()
        .collect();
    Ok(ControlFlowGraph {
        edges,
        ..graph.clone()
    })
}

/// Kahn's algorithm; ready nodes are taken in name order.
fn topological_order<'a>(
    nodes: impl Iterator<Item = &'a String>,
    relation: &'a BTreeSet<Pair>,
) -> Result<Vec<&'a str>, CfgError> {
    let mut indegree: BTreeMap<&str, usize> = nodes.map(|n| (n.as_str(), 0)).collect();
    let mut succ: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (a, b) in relation {
        indegree.entry(a).or_insert(0);
        *indegree.entry(b).or_insert(0) += 1;
        succ.entry(a).or_default().push(b);
    }
    let mut ready: BTreeSet<&str> = indegree
        .iter()
        .filter(|(_, &d)| d == 0)
        .map(|(n, _)| *n)
        .collect();
    let mut order = Vec::with_capacity(indegree.len());
    while let Some(next) = ready.pop_first() {
        order.push(next);
        for &s in succ.get(next).map(Vec::as_slice).unwrap_or(&[]) {
            let d = indegree.get_mut(s).expect("successor is a node");
            *d -= 1;
            if *d == 0 {
                ready.insert(s);
            }
        }
    }
    if order.len() < indegree.len() {
        let stuck = indegree
            .iter()
            .find(|(n, &d)| d > 0 && !order.contains(n))
            .map(|(n, _)| n.to_string())
            .unwrap_or_default();
        return Err(CfgError::CyclicRelation(stuck));
    }
    Ok(order)
}

/// One segment per control-flow edge, in topological order with ties broken
/// by name.
pub fn segments(graph: &ControlFlowGraph) -> Vec<Segment> {
    let order = topological_order(graph.nodes.keys(), &graph.edges)
        .expect("edges of a reduced graph are acyclic");
    let rank: BTreeMap<&str, usize> = order.iter().enumerate().map(|(i, n)| (*n, i)).collect();
    let mut out: Vec<Segment> = graph
        .edges
        .iter()
        .map(|(a, b)| Segment::new(a.clone(), b.clone()))
        .collect();
    out.sort_by(|x, y| {
        (rank[x.from.as_str()], rank[x.to.as_str()])
            .cmp(&(rank[y.from.as_str()], rank[y.to.as_str()]))
            .then_with(|| x.cmp(y))
    });
    out
}

/// Reconstructs the reduced graph of a single host's trace.
pub fn graph_for_trace(trace: &Trace, min_support: usize) -> Result<ControlFlowGraph, CfgError> {
    let tl = trace.timelines().map_err(IngestError::from)?;
    reduce(&happens_before(&tl, min_support, Scope::PerHost))
}

/// Reconstructs the reduced graph over any number of aligned runs, pooling
/// their packets.
pub fn graph_for_runs(runs: &[&AlignedRun], options: CfgOptions) -> Result<ControlFlowGraph, CfgError> {
    let mut pooled = Timelines {
        nodes: BTreeMap::new(),
        packets: Vec::new(),
    };
    for run in runs {
        let tl = run.timelines()?;
        pooled.nodes.extend(tl.nodes);
        pooled.packets.extend(tl.packets);
    }
    reduce(&happens_before(&pooled, options.min_support, options.scope))
}

impl ControlFlowGraph {
    pub fn is_concurrent(&self, a: &str, b: &str) -> bool {
        self.concurrent.contains(&unordered(a, b))
    }

    pub fn support_of(&self, a: &str, b: &str) -> usize {
        self.support.get(&unordered(a, b)).copied().unwrap_or(0)
    }

    /// Edges connecting events of different hosts.
    pub fn cross_host_edges(&self) -> Vec<&Pair> {
        self.edges
            .iter()
            .filter(|(a, b)| {
                let ha = self.nodes.get(a).map(|n| n.host);
                let hb = self.nodes.get(b).map(|n| n.host);
                ha != hb
            })
            .collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(GraphDump::from(self)).expect("graph dump serializes")
    }
}

/// JSON form of a [`ControlFlowGraph`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphDump {
    pub scope: Scope,
    pub min_support: usize,
    pub nodes: Vec<NodeDump>,
    pub edges: Vec<Pair>,
    pub hb_plus: Vec<Pair>,
    pub concurrent: Vec<Pair>,
    pub support: Vec<SupportDump>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeDump {
    pub name: String,
    #[serde(flatten)]
    pub info: NodeInfo,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SupportDump {
    pub a: String,
    pub b: String,
    pub count: usize,
}

impl From<&ControlFlowGraph> for GraphDump {
    fn from(g: &ControlFlowGraph) -> Self {
        GraphDump {
            scope: g.scope,
            min_support: g.min_support,
            nodes: g
                .nodes
                .iter()
                .map(|(name, info)| NodeDump {
                    name: name.clone(),
                    info: info.clone(),
                })
                .collect(),
            edges: g.edges.iter().cloned().collect(),
            hb_plus: g.hb_plus.iter().cloned().collect(),
            concurrent: g.concurrent.iter().cloned().collect(),
            support: g
                .support
                .iter()
                .map(|((a, b), &count)| SupportDump {
                    a: a.clone(),
                    b: b.clone(),
                    count,
                })
                .collect(),
        }
    }
}

impl From<GraphDump> for ControlFlowGraph {
    fn from(d: GraphDump) -> Self {
        ControlFlowGraph {
            nodes: d.nodes.into_iter().map(|n| (n.name, n.info)).collect(),
            hb_plus: d.hb_plus.into_iter().collect(),
            edges: d.edges.into_iter().collect(),
            concurrent: d.concurrent.into_iter().collect(),
            support: d
                .support
                .into_iter()
                .map(|s| ((s.a, s.b), s.count))
                .collect(),
            min_support: d.min_support,
            scope: d.scope,
        }
    }
}

/// Set differences between two reduced graphs.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct GraphDiff {
    pub added_nodes: Vec<String>,
    pub removed_nodes: Vec<String>,
    pub added_edges: Vec<Pair>,
    pub removed_edges: Vec<Pair>,
    pub added_concurrent: Vec<Pair>,
    pub removed_concurrent: Vec<Pair>,
}

impl GraphDiff {
    pub fn is_empty(&self) -> bool {
        self.added_nodes.is_empty()
            && self.removed_nodes.is_empty()
            && self.added_edges.is_empty()
            && self.removed_edges.is_empty()
            && self.added_concurrent.is_empty()
            && self.removed_concurrent.is_empty()
    }
}

pub fn diff_graphs(old: &ControlFlowGraph, new: &ControlFlowGraph) -> GraphDiff {
    fn minus<T: Ord + Clone>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> Vec<T> {
        a.difference(b).cloned().collect()
    }
    let old_nodes: BTreeSet<String> = old.nodes.keys().cloned().collect();
    let new_nodes: BTreeSet<String> = new.nodes.keys().cloned().collect();
    GraphDiff {
        added_nodes: minus(&new_nodes, &old_nodes),
        removed_nodes: minus(&old_nodes, &new_nodes),
        added_edges: minus(&new.edges, &old.edges),
        removed_edges: minus(&old.edges, &new.edges),
        added_concurrent: minus(&new.concurrent, &old.concurrent),
        removed_concurrent: minus(&old.concurrent, &new.concurrent),
    }
}
