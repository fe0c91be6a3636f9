//! Domain types shared by ingestion, reconstruction and the analyses.
//!
//! A [`Trace`] is everything one host recorded during one experiment run:
//! per-packet cycle-stamps (optionally with wall-clock time), the event
//! definitions, and the calibration anchors used to turn cycles into
//! nanoseconds. All types are plain data and immutable once built.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

/// The host an event was recorded on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Host {
    Sender,
    Receiver,
}

impl Host {
    pub fn as_str(self) -> &'static str {
        match self {
            Host::Sender => "sender",
            Host::Receiver => "receiver",
        }
    }
}

impl fmt::Display for Host {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Host {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sender" => Ok(Host::Sender),
            "receiver" => Ok(Host::Receiver),
            other => Err(format!("unknown host '{other}'")),
        }
    }
}

/// A stamped code location.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventDef {
    pub name: String,
    pub host: Host,
    pub thread: String,
}

/// One raw stamp. `wall_ns` is filled either by the capture itself or by
/// interpolation; `extrapolated` marks stamps that fell outside the anchor
/// range of their thread.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawStamp {
    pub cycles: u64,
    pub wall_ns: Option<i64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub extrapolated: bool,
}

impl RawStamp {
    pub fn cycles(cycles: u64) -> Self {
        RawStamp {
            cycles,
            wall_ns: None,
            extrapolated: false,
        }
    }

    pub fn with_wall(cycles: u64, wall_ns: i64) -> Self {
        RawStamp {
            cycles,
            wall_ns: Some(wall_ns),
            extrapolated: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PacketRecord {
    pub seq: u64,
    pub stamps: BTreeMap<String, RawStamp>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub run_id: String,
    pub host: Host,
    pub version_label: String,
    #[serde(default)]
    pub freq_mhz: Option<u32>,
    #[serde(default)]
    pub energy_joules: Option<f64>,
    pub packet_count: usize,
}

/// A paired (cycles, wall-clock) reading on one thread.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Anchor {
    pub thread: String,
    pub cycles: u64,
    pub wall_ns: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub meta: RunMeta,
    pub events: Vec<EventDef>,
    pub packets: Vec<PacketRecord>,
    pub anchors: Vec<Anchor>,
}

/// A code segment `<from, to>` between two events.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Segment {
    pub from: String,
    pub to: String,
}

impl Segment {
    pub fn new(from: impl Into<String>, to: impl Into<String>) -> Self {
        Segment {
            from: from.into(),
            to: to.into(),
        }
    }

    pub fn label(&self) -> String {
        format!("<{},{}>", self.from, self.to)
    }
}

impl fmt::Display for Segment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{},{}>", self.from, self.to)
    }
}

/// Per-packet durations of one segment in one run, keyed by sequence number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSample {
    pub segment: Segment,
    pub durations_ns: BTreeMap<u64, i64>,
    pub run_id: String,
}

impl SegmentSample {
    pub fn values_f64(&self) -> Vec<f64> {
        self.durations_ns.values().map(|&d| d as f64).collect()
    }
}

/// A broken invariant found by [`validate`].
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind")]
pub enum Violation {
    DuplicateSeq { seq: u64 },
    EmptyPacket { seq: u64 },
    UnknownEvent { seq: u64, event: String },
    DuplicateEventName { name: String },
    EmptyThread { event: String },
    EventHostMismatch { event: String },
    NonMonotoneAnchor { thread: String },
    NonMonotoneCycles { thread: String },
    PacketCountMismatch { declared: usize, actual: usize },
    NegativeEnergy { joules: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateSeq { seq } => write!(f, "DuplicateSeq({seq})"),
            Violation::EmptyPacket { seq } => write!(f, "EmptyPacket({seq})"),
            Violation::UnknownEvent { seq, event } => {
                write!(f, "UnknownEvent(seq={seq}, event=\"{event}\")")
            }
            Violation::DuplicateEventName { name } => write!(f, "DuplicateEventName(\"{name}\")"),
            Violation::EmptyThread { event } => write!(f, "EmptyThread(event=\"{event}\")"),
            Violation::EventHostMismatch { event } => {
                write!(f, "EventHostMismatch(event=\"{event}\")")
            }
            Violation::NonMonotoneAnchor { thread } => {
                write!(f, "NonMonotoneAnchor(thread=\"{thread}\")")
            }
            Violation::NonMonotoneCycles { thread } => {
                write!(f, "NonMonotoneCycles(thread=\"{thread}\")")
            }
            Violation::PacketCountMismatch { declared, actual } => {
                write!(f, "PacketCountMismatch(declared={declared}, actual={actual})")
            }
            Violation::NegativeEnergy { joules } => write!(f, "NegativeEnergy({joules})"),
        }
    }
}

/// Checks every structural invariant of a trace. An empty result means the
/// trace is well-formed.
///
/// Cycle monotonicity is checked against the stamps that carry wall-clock
/// time: on one thread, a later wall-clock reading must never come with a
/// smaller cycle count.
pub fn validate(trace: &Trace) -> Vec<Violation> {
    let mut out = Vec::new();

    let mut names = HashSet::new();
    let mut thread_of: BTreeMap<&str, &str> = BTreeMap::new();
    for ev in &trace.events {
        if !names.insert(ev.name.as_str()) {
            out.push(Violation::DuplicateEventName {
                name: ev.name.clone(),
            });
        }
        if ev.thread.is_empty() {
            out.push(Violation::EmptyThread {
                event: ev.name.clone(),
            });
        }
        if ev.host != trace.meta.host {
            out.push(Violation::EventHostMismatch {
                event: ev.name.clone(),
            });
        }
        thread_of.entry(&ev.name).or_insert(&ev.thread);
    }

    let mut seen = HashSet::new();
    let mut dup_reported = BTreeSet::new();
    for p in &trace.packets {
        if !seen.insert(p.seq) && dup_reported.insert(p.seq) {
            out.push(Violation::DuplicateSeq { seq: p.seq });
        }
        if p.stamps.is_empty() {
            out.push(Violation::EmptyPacket { seq: p.seq });
        }
        for name in p.stamps.keys() {
            if !names.contains(name.as_str()) {
                out.push(Violation::UnknownEvent {
                    seq: p.seq,
                    event: name.clone(),
                });
            }
        }
    }

    let mut anchors_by_thread: BTreeMap<&str, Vec<&Anchor>> = BTreeMap::new();
    for a in &trace.anchors {
        anchors_by_thread.entry(&a.thread).or_default().push(a);
    }
    for (thread, list) in &anchors_by_thread {
        let ok = list
            .windows(2)
            .all(|w| w[1].cycles > w[0].cycles && w[1].wall_ns > w[0].wall_ns);
        if !ok {
            out.push(Violation::NonMonotoneAnchor {
                thread: thread.to_string(),
            });
        }
    }

    let mut walled: BTreeMap<&str, Vec<(i64, u64)>> = BTreeMap::new();
    for p in &trace.packets {
        for (name, stamp) in &p.stamps {
            if let (Some(wall), Some(thread)) = (stamp.wall_ns, thread_of.get(name.as_str())) {
                walled.entry(thread).or_default().push((wall, stamp.cycles));
            }
        }
    }
    for (thread, mut pts) in walled {
        pts.sort_unstable();
        let broken = pts
            .windows(2)
            .any(|w| w[1].0 > w[0].0 && w[1].1 < w[0].1);
        if broken {
            out.push(Violation::NonMonotoneCycles {
                thread: thread.to_string(),
            });
        }
    }

    if trace.meta.packet_count != trace.packets.len() {
        out.push(Violation::PacketCountMismatch {
            declared: trace.meta.packet_count,
            actual: trace.packets.len(),
        });
    }
    if let Some(j) = trace.meta.energy_joules {
        if j < 0.0 || j.is_nan() {
            out.push(Violation::NegativeEnergy { joules: j });
        }
    }

    out
}

/// The per-packet event times of one or two hosts on a single timeline.
///
/// Node names are the event names, qualified as `sender:Name` /
/// `receiver:Name` only when both hosts use the same name.
#[derive(Debug, Clone, PartialEq)]
pub struct Timelines {
    pub nodes: BTreeMap<String, NodeInfo>,
    pub packets: Vec<PacketTimeline>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeInfo {
    pub host: Host,
    pub thread: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PacketTimeline {
    pub seq: u64,
    pub times: BTreeMap<String, i64>,
}

impl Timelines {
    /// Durations of `segment` over every packet that carries both endpoints.
    pub fn durations(&self, segment: &Segment) -> BTreeMap<u64, i64> {
        self.packets
            .iter()
            .filter_map(|p| {
                let a = p.times.get(&segment.from)?;
                let b = p.times.get(&segment.to)?;
                Some((p.seq, b - a))
            })
            .collect()
    }

    /// Mean timestamp of each node over the packets where it appears.
    pub fn mean_times(&self) -> BTreeMap<String, f64> {
        let mut acc: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
        for p in &self.packets {
            for (name, &t) in &p.times {
                let e = acc.entry(name).or_insert((0.0, 0));
                e.0 += t as f64;
                e.1 += 1;
            }
        }
        acc.into_iter()
            .map(|(k, (s, n))| (k.to_string(), s / n as f64))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TimelineError {
    #[error("NotInterpolated: event \"{event}\" of packet {seq} has no wall-clock time")]
    NotInterpolated { seq: u64, event: String },
}

impl Trace {
    pub fn thread_of(&self, event: &str) -> Option<&str> {
        self.events
            .iter()
            .find(|e| e.name == event)
            .map(|e| e.thread.as_str())
    }

    /// The wall-clock timeline of this host alone.
    pub fn timelines(&self) -> Result<Timelines, TimelineError> {
        let nodes = self
            .events
            .iter()
            .map(|e| {
                (
                    e.name.clone(),
                    NodeInfo {
                        host: e.host,
                        thread: e.thread.clone(),
                    },
                )
            })
            .collect();
        let packets = self
            .packets
            .iter()
            .map(|p| {
                let times = p
                    .stamps
                    .iter()
                    .map(|(name, s)| {
                        s.wall_ns.map(|w| (name.clone(), w)).ok_or_else(|| {
                            TimelineError::NotInterpolated {
                                seq: p.seq,
                                event: name.clone(),
                            }
                        })
                    })
                    .collect::<Result<_, _>>()?;
                Ok(PacketTimeline { seq: p.seq, times })
            })
            .collect::<Result<_, _>>()?;
        Ok(Timelines { nodes, packets })
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn trace(host: Host, rows: &[(u64, &str, &str, u64, Option<i64>)]) -> Trace {
        let mut events: Vec<EventDef> = Vec::new();
        let mut packets: BTreeMap<u64, PacketRecord> = BTreeMap::new();
        for &(seq, ev, thread, cycles, wall) in rows {
            if !events.iter().any(|e| e.name == ev) {
                events.push(EventDef {
                    name: ev.into(),
                    host,
                    thread: thread.into(),
                });
            }
            packets
                .entry(seq)
                .or_insert_with(|| PacketRecord {
                    seq,
                    stamps: BTreeMap::new(),
                })
                .stamps
                .insert(
                    ev.into(),
                    RawStamp {
                        cycles,
                        wall_ns: wall,
                        extrapolated: false,
                    },
                );
        }
        let packets: Vec<_> = packets.into_values().collect();
        Trace {
            meta: RunMeta {
                run_id: "r".into(),
                host,
                version_label: "v1".into(),
                freq_mhz: None,
                energy_joules: None,
                packet_count: packets.len(),
            },
            events,
            packets,
            anchors: Vec::new(),
        }
    }
}
