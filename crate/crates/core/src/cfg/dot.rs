use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::ControlFlowGraph;

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// Renders the graph as DOT. Nodes are clustered by host and thread; edges
/// carry their packet support, and concurrent pairs are dashed and
/// undirected.
pub fn render_dot(graph: &ControlFlowGraph) -> String {
    let mut clusters: BTreeMap<(String, &str), Vec<&str>> = BTreeMap::new();
    for (name, info) in &graph.nodes {
        clusters
            .entry((info.host.to_string(), info.thread.as_str()))
            .or_default()
            .push(name);
    }

    let mut out = String::new();
    out.push_str("digraph cfg {\n  rankdir=TB;\n  node [shape=box];\n");
    for (i, ((host, thread), names)) in clusters.iter().enumerate() {
        let _ = writeln!(out, "  subgraph cluster_{i} {{");
        let _ = writeln!(out, "    label={};", quote(&format!("{host}/{thread}")));
        for n in names {
            let _ = writeln!(out, "    {};", quote(n));
        }
        out.push_str("  }\n");
    }
    for (a, b) in &graph.edges {
        let _ = writeln!(
            out,
            "  {} -> {} [label=\"{}\"];",
            quote(a),
            quote(b),
            graph.support_of(a, b)
        );
    }
    for (a, b) in &graph.concurrent {
        let _ = writeln!(
            out,
            "  {} -> {} [style=dashed, dir=none, constraint=false];",
            quote(a),
            quote(b)
        );
    }
    out.push_str("}\n");
    out
}

pub fn export_dot(graph: &ControlFlowGraph, path: &Path) -> std::io::Result<()> {
    std::fs::write(path, render_dot(graph))
}
