use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::IngestError;
use crate::trace_model::{Host, NodeInfo, PacketTimeline, Timelines, Trace};

/// How the receiver clock is mapped onto the sender clock.
#[derive(Debug, Clone, PartialEq)]
pub enum AlignStrategy {
    /// Receiver clock minus sender clock, in nanoseconds.
    ExplicitOffset(f64),
    /// Picks the offset that makes the minimum forward one-way delay equal to
    /// the minimum reverse one-way delay. Without reverse traffic the minimum
    /// forward delay is pinned to `floor_ns` instead.
    MinSymmetry {
        forward: Option<(String, String)>,
        reverse: Option<(String, String)>,
        floor_ns: Option<f64>,
    },
    /// Both hosts already share one clock.
    PreAligned,
}

impl AlignStrategy {
    pub fn min_symmetry() -> Self {
        AlignStrategy::MinSymmetry {
            forward: None,
            reverse: None,
            floor_ns: Some(0.0),
        }
    }
}

/// Optional names of the events bounding end-to-end latency. Unset
/// endpoints default to the sender event with the smallest mean time and
/// the receiver event with the largest mean time (ties by name).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct E2eEndpoints {
    pub start: Option<String>,
    pub end: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignOptions {
    pub strategy: AlignStrategy,
    pub endpoints: E2eEndpoints,
}

impl Default for AlignOptions {
    fn default() -> Self {
        AlignOptions {
            strategy: AlignStrategy::min_symmetry(),
            endpoints: E2eEndpoints::default(),
        }
    }
}

/// How an [`AlignedRun`] was produced; printed alongside every cross-host
/// result.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Alignment {
    pub strategy: String,
    pub one_sided: bool,
    pub start_event: String,
    pub end_event: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub forward_pair: Option<(String, String)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reverse_pair: Option<(String, String)>,
}

/// A sender and a receiver trace of one experiment on one timeline.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedRun {
    pub sender: Trace,
    pub receiver: Trace,
    /// Receiver clock minus sender clock.
    pub offset_ns: f64,
    pub e2e_ns: BTreeMap<u64, f64>,
    pub alignment: Alignment,
}

impl AlignedRun {
    pub fn run_id(&self) -> &str {
        &self.sender.meta.run_id
    }

    pub fn version_label(&self) -> &str {
        &self.sender.meta.version_label
    }

    /// The offset actually subtracted from receiver stamps.
    pub fn applied_offset_ns(&self) -> i64 {
        self.offset_ns.round() as i64
    }

    /// Both hosts merged on the sender's clock.
    pub fn timelines(&self) -> Result<Timelines, IngestError> {
        merge(
            &self.sender.timelines()?,
            &self.receiver.timelines()?,
            self.applied_offset_ns(),
        )
    }

    pub fn energy_joules(&self) -> Option<f64> {
        match (self.sender.meta.energy_joules, self.receiver.meta.energy_joules) {
            (None, None) => None,
            (a, b) => Some(a.unwrap_or(0.0) + b.unwrap_or(0.0)),
        }
    }
}

fn merge(sender: &Timelines, receiver: &Timelines, offset: i64) -> Result<Timelines, IngestError> {
    let clash: BTreeSet<&String> = sender
        .nodes
        .keys()
        .filter(|k| receiver.nodes.contains_key(*k))
        .collect();
    let qualify = |host: Host, name: &String| -> String {
        if clash.contains(name) {
            format!("{host}:{name}")
        } else {
            name.clone()
        }
    };

    let mut nodes: BTreeMap<String, NodeInfo> = BTreeMap::new();
    for (name, info) in &sender.nodes {
        nodes.insert(qualify(Host::Sender, name), info.clone());
    }
    for (name, info) in &receiver.nodes {
        nodes.insert(qualify(Host::Receiver, name), info.clone());
    }

    let mut packets: BTreeMap<u64, BTreeMap<String, i64>> = BTreeMap::new();
    for p in &sender.packets {
        let times = packets.entry(p.seq).or_default();
        for (name, &t) in &p.times {
            times.insert(qualify(Host::Sender, name), t);
        }
    }
    for p in &receiver.packets {
        let times = packets.entry(p.seq).or_default();
        for (name, &t) in &p.times {
            times.insert(qualify(Host::Receiver, name), t - offset);
        }
    }
    Ok(Timelines {
        nodes,
        packets: packets
            .into_iter()
            .map(|(seq, times)| PacketTimeline { seq, times })
            .collect(),
    })
}

/// Event of `trace` with the extreme mean time; `last` picks the maximum.
fn extreme_event(timelines: &Timelines, thread: Option<&str>, last: bool) -> Option<String> {
    let means = timelines.mean_times();
    let candidates = means.iter().filter(|(name, _)| match thread {
        Some(t) => timelines.nodes.get(*name).map(|n| n.thread.as_str()) == Some(t),
        None => true,
    });
    let mut best: Option<(&String, f64)> = None;
    for (name, &m) in candidates {
        best = match best {
            None => Some((name, m)),
            Some((_, bm)) if (last && m > bm) || (!last && m < bm) => Some((name, m)),
            keep => keep,
        };
    }
    best.map(|(n, _)| n.clone())
}

fn require_event(timelines: &Timelines, name: &str) -> Result<(), IngestError> {
    if timelines.nodes.contains_key(name) {
        Ok(())
    } else {
        Err(IngestError::UnknownEvent(name.to_string()))
    }
}

/// Minimum of `to - from` over packets where `from` is stamped on
/// `from_host` and `to` on the other one; both in their own clocks.
fn min_delay(from: &Timelines, from_ev: &str, to: &Timelines, to_ev: &str) -> Option<i64> {
    let to_by_seq: BTreeMap<u64, i64> = to
        .packets
        .iter()
        .filter_map(|p| p.times.get(to_ev).map(|&t| (p.seq, t)))
        .collect();
    from.packets
        .iter()
        .filter_map(|p| {
            let a = p.times.get(from_ev)?;
            let b = to_by_seq.get(&p.seq)?;
            Some(b - a)
        })
        .min()
}

/// Places the receiver trace on the sender's clock and computes per-packet
/// end-to-end latency. Both traces must already be interpolated.
pub fn align(sender: &Trace, receiver: &Trace, options: &AlignOptions) -> Result<AlignedRun, IngestError> {
    let s_tl = sender.timelines()?;
    let r_tl = receiver.timelines()?;

    let start = match &options.endpoints.start {
        Some(e) => {
            require_event(&s_tl, e)?;
            e.clone()
        }
        None => extreme_event(&s_tl, None, false).ok_or(IngestError::NoCommonPackets)?,
    };
    let end = match &options.endpoints.end {
        Some(e) => {
            require_event(&r_tl, e)?;
            e.clone()
        }
        None => extreme_event(&r_tl, None, true).ok_or(IngestError::NoCommonPackets)?,
    };

    let mut alignment = Alignment {
        strategy: String::new(),
        one_sided: false,
        start_event: start.clone(),
        end_event: end.clone(),
        forward_pair: None,
        reverse_pair: None,
    };

    let offset_ns = match &options.strategy {
        AlignStrategy::ExplicitOffset(x) => {
            alignment.strategy = "explicit-offset".into();
            *x
        }
        AlignStrategy::PreAligned => {
            alignment.strategy = "pre-aligned".into();
            0.0
        }
        AlignStrategy::MinSymmetry {
            forward,
            reverse,
            floor_ns,
        } => {
            alignment.strategy = "min-symmetry".into();
            let forward = match forward {
                Some((a, b)) => {
                    require_event(&s_tl, a)?;
                    require_event(&r_tl, b)?;
                    (a.clone(), b.clone())
                }
                None => {
                    let thread = s_tl.nodes.get(&start).map(|n| n.thread.clone());
                    let a = extreme_event(&s_tl, thread.as_deref(), true)
                        .ok_or(IngestError::NoCommonPackets)?;
                    let b = extreme_event(&r_tl, None, false).ok_or(IngestError::NoCommonPackets)?;
                    (a, b)
                }
            };
            let fwd_min = min_delay(&s_tl, &forward.0, &r_tl, &forward.1)
                .ok_or(IngestError::NoCommonPackets)?;
            alignment.forward_pair = Some(forward);

            let rev_min = match reverse {
                Some((a, b)) => {
                    require_event(&r_tl, a)?;
                    require_event(&s_tl, b)?;
                    alignment.reverse_pair = Some((a.clone(), b.clone()));
                    min_delay(&r_tl, a, &s_tl, b)
                }
                None => None,
            };
            match (rev_min, floor_ns) {
                (Some(rev), _) => (fwd_min - rev) as f64 / 2.0,
                (None, Some(floor)) => {
                    alignment.one_sided = true;
                    fwd_min as f64 - floor
                }
                (None, None) => return Err(IngestError::NoReverseTraffic),
            }
        }
    };

    let applied = offset_ns.round() as i64;
    let ends: BTreeMap<u64, i64> = r_tl
        .packets
        .iter()
        .filter_map(|p| p.times.get(&end).map(|&t| (p.seq, t)))
        .collect();
    let mut e2e_ns = BTreeMap::new();
    for p in &s_tl.packets {
        let (Some(&t0), Some(&t1)) = (p.times.get(&start), ends.get(&p.seq)) else {
            continue;
        };
        let ns = (t1 - applied - t0) as f64;
        if ns < 0.0 {
            return Err(IngestError::NegativeLatency { seq: p.seq, ns });
        }
        e2e_ns.insert(p.seq, ns);
    }
    if e2e_ns.is_empty() {
        return Err(IngestError::NoCommonPackets);
    }

    Ok(AlignedRun {
        sender: sender.clone(),
        receiver: receiver.clone(),
        offset_ns,
        e2e_ns,
        alignment,
    })
}
