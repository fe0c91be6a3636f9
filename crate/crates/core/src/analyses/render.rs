//! Output views of the reports. Tables and CSV are built from the report
//! fields alone; nothing is recomputed here.

use std::fmt;

use serde::Serialize;

use super::{CriticalityReport, DiffReport, EnergyReport, PredictabilityReport, SlowdownReport};
use crate::cfg::GraphDump;
use crate::stats::AdTestResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Json,
    Table,
    Csv,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(Format::Json),
            "table" => Ok(Format::Table),
            "csv" => Ok(Format::Csv),
            other => Err(format!("unknown format \"{other}\" (json, table, csv)")),
        }
    }
}

/// A text table with left-aligned first column and right-aligned rest.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub notes: Vec<String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(columns: &[&str]) -> Self {
        Table {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            ..Table::default()
        }
    }

    fn note(mut self, line: impl Into<String>) -> Self {
        self.notes.push(line.into());
        self
    }
}

impl fmt::Display for Table {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for n in &self.notes {
            writeln!(f, "# {n}")?;
        }
        let mut widths: Vec<usize> = self.columns.iter().map(|c| c.chars().count()).collect();
        for row in &self.rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let line = |f: &mut fmt::Formatter<'_>, cells: &[String]| -> fmt::Result {
            let mut out = String::new();
            for (i, (cell, w)) in cells.iter().zip(&widths).enumerate() {
                if i > 0 {
                    out.push_str("  ");
                }
                if i == 0 {
                    out.push_str(&format!("{cell:<w$}"));
                } else {
                    out.push_str(&format!("{cell:>w$}"));
                }
            }
            writeln!(f, "{}", out.trim_end())
        };
        line(f, &self.columns)?;
        let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
        line(f, &rule)?;
        for row in &self.rows {
            line(f, row)?;
        }
        Ok(())
    }
}

pub trait Report: Serialize {
    fn table(&self) -> Table;

    /// Plot-ready `(x, y)` points; `None` leaves y empty.
    fn points(&self) -> Vec<(String, Option<f64>)>;

    fn render(&self, format: Format) -> String {
        match format {
            Format::Json => {
                let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
                s.push('\n');
                s
            }
            Format::Table => self.table().to_string(),
            Format::Csv => {
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record(["x", "y"]).expect("in-memory write");
                for (x, y) in self.points() {
                    let y = y.map(|v| v.to_string()).unwrap_or_default();
                    w.write_record([x.as_str(), y.as_str()]).expect("in-memory write");
                }
                String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
            }
        }
    }
}

fn opt(v: Option<f64>, prec: usize) -> String {
    v.map_or_else(|| "undefined".to_string(), |v| format!("{v:.prec$}"))
}

fn verdict(t: &AdTestResult) -> String {
    format!("{:?}", t.verdict).to_lowercase()
}

impl Report for CriticalityReport {
    fn table(&self) -> Table {
        let mut t = Table::new(&["segment", "criticality", "mean_ns", "sd_ns", "n", "cross_host"])
            .note(format!("run {}", self.run_id))
            .note(format!(
                "alignment {}{}; e2e {} -> {}",
                self.alignment.strategy,
                if self.alignment.one_sided { " (one-sided)" } else { "" },
                self.alignment.start_event,
                self.alignment.end_event
            ))
            .note(format!(
                "{} complete packets, mean e2e {:.1} ns",
                self.complete_packets, self.mean_e2e_ns
            ));
        for r in &self.rows {
            t.rows.push(vec![
                r.segment.label(),
                opt(r.criticality, 4),
                opt(r.mean_duration_ns, 1),
                opt(r.sd_ns, 1),
                r.n.to_string(),
                if r.cross_host { "yes" } else { "no" }.to_string(),
            ]);
        }
        t
    }

    fn points(&self) -> Vec<(String, Option<f64>)> {
        self.rows.iter().map(|r| (r.segment.label(), r.criticality)).collect()
    }
}

impl Report for PredictabilityReport {
    fn table(&self) -> Table {
        let mut t = Table::new(&["segment", "verdict", "p_value", "statistic", "criticality", "n"])
            .note(format!("version {} over {} runs", self.version_label, self.runs.len()))
            .note(format!(
                "alpha {}; {} tests, {} different; p-values are not corrected for multiple tests",
                self.alpha, self.n_tests, self.n_different
            ));
        for r in &self.rows {
            let n = r.sample_sizes.iter().map(|n| n.to_string()).collect::<Vec<_>>().join("/");
            match &r.test {
                Some(test) => t.rows.push(vec![
                    r.segment.label(),
                    verdict(test),
                    format!("{:.4}", test.p_value),
                    format!("{:.3}", test.statistic),
                    opt(r.criticality, 4),
                    n,
                ]),
                None => t.rows.push(vec![
                    r.segment.label(),
                    "skipped".into(),
                    "-".into(),
                    "-".into(),
                    opt(r.criticality, 4),
                    n,
                ]),
            }
        }
        t
    }

    fn points(&self) -> Vec<(String, Option<f64>)> {
        self.rows
            .iter()
            .map(|r| (r.segment.label(), r.test.as_ref().map(|t| t.p_value)))
            .collect()
    }
}

impl Report for DiffReport {
    fn table(&self) -> Table {
        let g = &self.graph_diff;
        let pairs = |v: &[(String, String)]| -> String {
            if v.is_empty() {
                "none".into()
            } else {
                v.iter().map(|(a, b)| format!("{a}->{b}")).collect::<Vec<_>>().join(", ")
            }
        };
        let mut t = Table::new(&["segment", "p_value", "statistic"])
            .note(format!("{} -> {}", self.old_version, self.new_version))
            .note(format!(
                "alpha {}; {} tests, {} baseline tests",
                self.alpha, self.n_tests, self.n_baseline_tests
            ))
            .note(format!("added edges: {}", pairs(&g.added_edges)))
            .note(format!("removed edges: {}", pairs(&g.removed_edges)))
            .note(format!(
                "baseline noise: {}",
                if self.baseline_noise.is_empty() {
                    "none".to_string()
                } else {
                    self.baseline_noise.iter().map(|s| s.label()).collect::<Vec<_>>().join(", ")
                }
            ));
        for r in &self.changed_segments {
            t.rows.push(vec![
                r.segment.label(),
                format!("{:.4}", r.test.p_value),
                format!("{:.3}", r.test.statistic),
            ]);
        }
        t
    }

    fn points(&self) -> Vec<(String, Option<f64>)> {
        self.changed_segments
            .iter()
            .map(|r| (r.segment.label(), Some(r.test.p_value)))
            .collect()
    }
}

impl Report for EnergyReport {
    fn table(&self) -> Table {
        let mut t = Table::new(&["config", "freq_mhz", "energy_j", "packets", "j_per_packet", "mean_e2e_s", "et2"])
            .note(self.formula.clone())
            .note("ascending; lower is better");
        for r in &self.rows {
            t.rows.push(vec![
                r.label.clone(),
                r.freq_mhz.map_or_else(|| "-".into(), |f| f.to_string()),
                format!("{:.6}", r.energy_joules),
                r.packet_count.to_string(),
                format!("{:.6e}", r.energy_per_packet_j),
                format!("{:.6e}", r.mean_e2e_s),
                format!("{:.6e}", r.et2),
            ]);
        }
        t
    }

    fn points(&self) -> Vec<(String, Option<f64>)> {
        self.rows.iter().map(|r| (r.label.clone(), Some(r.et2))).collect()
    }
}

impl Report for SlowdownReport {
    fn table(&self) -> Table {
        let mhz = |f: Option<u32>| f.map_or_else(String::new, |f| format!(" @ {f} MHz"));
        let mut t = Table::new(&["segment", "d_fast_ns", "d_slow_ns", "s", "s_norm"])
            .note(format!(
                "fast {}{}, slow {}{}",
                self.fast_run,
                mhz(self.fast_freq_mhz),
                self.slow_run,
                mhz(self.slow_freq_mhz)
            ))
            .note(format!("s = d_slow / d_fast; s_norm = s / s_e2e; s_e2e = {:.6}", self.s_e2e));
        for r in &self.rows {
            t.rows.push(vec![
                r.label.clone(),
                format!("{:.1}", r.d_fast_ns),
                format!("{:.1}", r.d_slow_ns),
                format!("{:.6}", r.s),
                format!("{:.6}", r.s_norm),
            ]);
        }
        t
    }

    fn points(&self) -> Vec<(String, Option<f64>)> {
        self.rows.iter().map(|r| (r.label.clone(), Some(r.s_norm))).collect()
    }
}

impl Report for GraphDump {
    fn table(&self) -> Table {
        let mut t = Table::new(&["from", "to", "support"])
            .note(format!("scope {:?}, min_support {}", self.scope, self.min_support))
            .note(format!(
                "{} nodes, {} edges, {} concurrent pairs",
                self.nodes.len(),
                self.edges.len(),
                self.concurrent.len()
            ));
        let support = |a: &str, b: &str| {
            self.support
                .iter()
                .find(|s| (s.a == a && s.b == b) || (s.a == b && s.b == a))
                .map_or(0, |s| s.count)
        };
        for (a, b) in &self.edges {
            t.rows.push(vec![a.clone(), b.clone(), support(a, b).to_string()]);
        }
        t
    }

    fn points(&self) -> Vec<(String, Option<f64>)> {
        self.edges
            .iter()
            .map(|(a, b)| {
                let n = self
                    .support
                    .iter()
                    .find(|s| (s.a == *a && s.b == *b) || (s.a == *b && s.b == *a))
                    .map_or(0, |s| s.count);
                (format!("<{a},{b}>"), Some(n as f64))
            })
            .collect()
    }
}
