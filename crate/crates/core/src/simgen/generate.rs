use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::Serialize;

use super::{invalid, Delay, Modification, PipelineSpec, SimError};
use crate::cfg::Pair;
use crate::trace_model::{Anchor, EventDef, Host, PacketRecord, RawStamp, RunMeta, Segment, Trace};

/// Wall-clock time of the first packet start, so clocks stay positive.
const EPOCH_NS: i64 = 1_000_000_000;

/// What the generated traces are known to contain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroundTruth {
    pub run_id: String,
    pub version_label: String,
    pub seed: u64,
    pub n_packets: usize,
    pub freq_mhz: u32,
    /// Receiver clock minus sender clock.
    pub offset_ns: i64,
    /// Happens-directly-before edges of the pipeline.
    pub edges: Vec<Pair>,
    /// Unordered pairs, smaller name first.
    pub concurrent: Vec<Pair>,
    /// Mean delay leading to each stage event and mean timer duration,
    /// keyed by the later event.
    pub mean_delay_ns: BTreeMap<String, f64>,
    pub sender_energy_joules: Option<f64>,
    pub receiver_energy_joules: Option<f64>,
    pub energy_joules: Option<f64>,
    pub injections: Vec<Modification>,
    pub delivered: usize,
    /// Negative delay draws that were truncated to 0.
    pub truncated_draws: usize,
    pub e2e_start: Option<String>,
    pub e2e_end: Option<String>,
    /// True end-to-end latency of every delivered packet.
    pub e2e_ns: BTreeMap<u64, i64>,
}

impl GroundTruth {
    pub fn segments(&self) -> Vec<Segment> {
        self.edges.iter().map(|(a, b)| Segment::new(a, b)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub sender: Trace,
    pub receiver: Trace,
    pub truth: GroundTruth,
    /// True local wall-clock time of every emitted stamp, per packet.
    pub wall_ns: BTreeMap<u64, BTreeMap<String, i64>>,
}

fn draw(delay: &Delay, rng: &mut ChaCha8Rng) -> f64 {
    let normal = |m: f64, s: f64, rng: &mut ChaCha8Rng| Normal::new(m, s).expect("validated").sample(rng);
    match *delay {
        Delay::Constant { ns } => ns,
        Delay::Normal { mean_ns, sd_ns } => normal(mean_ns, sd_ns, rng),
        Delay::Lognormal { mu, sigma } => LogNormal::new(mu, sigma).expect("validated").sample(rng),
        Delay::Bimodal {
            weight,
            a_mean_ns,
            a_sd_ns,
            b_mean_ns,
            b_sd_ns,
        } => {
            if rng.random::<f64>() < weight {
                normal(a_mean_ns, a_sd_ns, rng)
            } else {
                normal(b_mean_ns, b_sd_ns, rng)
            }
        }
    }
}

struct EventInfo {
    host: Host,
    thread: String,
}

/// Draws `n_packets` packets from `spec`. The same spec and seed always
/// give the same traces.
pub fn generate(spec: &PipelineSpec, n_packets: usize) -> Result<Generated, SimError> {
    spec.validate()?;
    if n_packets == 0 {
        return Err(invalid("n_packets must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let interval = i64::try_from(spec.packet_interval_ns).map_err(|_| invalid("packet_interval_ns too large"))?;
    let first_host = spec.stages[0].host;
    let far = spec.stages.iter().position(|s| s.host != first_host);

    let mut info: BTreeMap<&str, EventInfo> = BTreeMap::new();
    for s in &spec.stages {
        info.insert(&s.event, EventInfo { host: s.host, thread: s.thread.clone() });
    }
    for t in &spec.timers {
        for e in [&t.fire, &t.done] {
            info.insert(e, EventInfo { host: t.host, thread: t.thread.clone() });
        }
    }

    let mut truncated = 0usize;
    let mut delivered = 0usize;
    let mut clamp = |d: f64| {
        if d < 0.0 {
            truncated += 1;
            0
        } else {
            d.round() as i64
        }
    };
    // true times on the sender clock
    let mut times: Vec<BTreeMap<String, i64>> = Vec::with_capacity(n_packets);
    for i in 0..n_packets {
        let start = EPOCH_NS + i as i64 * interval;
        let lost = rng.random::<f64>() < spec.loss_rate;
        if !(lost && far.is_some()) {
            delivered += 1;
        }
        let mut stamps = BTreeMap::new();
        let mut t = start;
        for (j, s) in spec.stages.iter().enumerate() {
            t += clamp(draw(&s.delay, &mut rng) + s.shift_ns);
            if !(lost && far.is_some_and(|f| j >= f)) {
                stamps.insert(s.event.clone(), t);
            }
        }
        for tm in &spec.timers {
            let fire = start + rng.random_range(tm.phase_lo_ns..=tm.phase_hi_ns).round() as i64;
            let done = fire + clamp(draw(&tm.duration, &mut rng) + tm.shift_ns);
            stamps.insert(tm.fire.clone(), fire);
            stamps.insert(tm.done.clone(), done);
        }
        times.push(stamps);
    }

    // local clocks and cycle counters
    let local = |host: Host, t: i64| match host {
        Host::Sender => t,
        Host::Receiver => t + spec.clock_offset_ns,
    };
    let threads: BTreeSet<(Host, &str)> = info.values().map(|e| (e.host, e.thread.as_str())).collect();
    let base: BTreeMap<(Host, &str), u64> = threads
        .iter()
        .enumerate()
        .map(|(k, &key)| (key, 1_000_003 * (k as u64 + 1)))
        .collect();
    let freq = spec.freq_mhz as i128;
    let cycles_at = |key: (Host, &str), wall: i64| -> Result<u64, SimError> {
        if wall < 0 {
            return Err(invalid("clock offset drives a wall clock below zero"));
        }
        Ok(base[&key] + (wall as i128 * freq / 1000) as u64)
    };

    let mut wall_ns: BTreeMap<u64, BTreeMap<String, i64>> = BTreeMap::new();
    let mut records: BTreeMap<Host, Vec<PacketRecord>> = BTreeMap::new();
    let mut walled: BTreeMap<(Host, &str), Vec<(u64, i64)>> = BTreeMap::new();
    let mut span: BTreeMap<(Host, &str), (i64, i64)> = BTreeMap::new();
    for (i, stamps) in times.iter().enumerate() {
        let anchor_packet = i % spec.anchor_period == 0;
        let mut per_host: BTreeMap<Host, BTreeMap<String, RawStamp>> = BTreeMap::new();
        for (name, &t) in stamps {
            let e = &info[name.as_str()];
            let key = (e.host, e.thread.as_str());
            let w = local(e.host, t);
            let c = cycles_at(key, w)?;
            let stamp = if anchor_packet {
                walled.entry(key).or_default().push((c, w));
                RawStamp::with_wall(c, w)
            } else {
                RawStamp::cycles(c)
            };
            let sp = span.entry(key).or_insert((w, w));
            *sp = (sp.0.min(w), sp.1.max(w));
            per_host.entry(e.host).or_default().insert(name.clone(), stamp);
            wall_ns.entry(i as u64).or_default().insert(name.clone(), w);
        }
        for (host, stamps) in per_host {
            records.entry(host).or_default().push(PacketRecord { seq: i as u64, stamps });
        }
    }

    // every thread gets calibration readings around its stamps, plus the
    // stamps of anchor packets in between
    let mut anchors: BTreeMap<Host, Vec<Anchor>> = BTreeMap::new();
    for (&key, &(lo, hi)) in &span {
        let mut pts = walled.remove(&key).unwrap_or_default();
        for w in [lo - 1000, hi + 1000] {
            pts.push((cycles_at(key, w)?, w));
        }
        pts.sort_unstable();
        let mut last: Option<(u64, i64)> = None;
        for (c, w) in pts {
            if last.is_some_and(|(lc, lw)| c <= lc || w <= lw) {
                continue;
            }
            last = Some((c, w));
            anchors.entry(key.0).or_default().push(Anchor {
                thread: key.1.to_string(),
                cycles: c,
                wall_ns: w,
            });
        }
    }

    // energy: host power while the host's pipeline stages run
    let busy = |host: Host| -> i64 {
        times
            .iter()
            .map(|stamps| {
                let ts: Vec<i64> = spec
                    .stages
                    .iter()
                    .filter(|s| s.host == host)
                    .filter_map(|s| stamps.get(&s.event).copied())
                    .collect();
                match (ts.iter().min(), ts.iter().max()) {
                    (Some(a), Some(b)) => b - a,
                    _ => 0,
                }
            })
            .sum()
    };
    let energy = |host: Host| spec.energy_model.map(|m| m.power_w(spec.freq_mhz) * busy(host) as f64 / 1e9);
    let (e_send, e_recv) = (energy(Host::Sender), energy(Host::Receiver));

    let trace = |host: Host, energy: Option<f64>| -> Trace {
        let mut events: Vec<EventDef> = spec
            .stages
            .iter()
            .filter(|s| s.host == host)
            .map(|s| EventDef {
                name: s.event.clone(),
                host,
                thread: s.thread.clone(),
            })
            .collect();
        for t in spec.timers.iter().filter(|t| t.host == host) {
            for e in [&t.fire, &t.done] {
                events.push(EventDef {
                    name: e.clone(),
                    host,
                    thread: t.thread.clone(),
                });
            }
        }
        let packets = records.get(&host).cloned().unwrap_or_default();
        Trace {
            meta: RunMeta {
                run_id: spec.run_id.clone(),
                host,
                version_label: spec.version_label.clone(),
                freq_mhz: Some(spec.freq_mhz),
                energy_joules: energy,
                packet_count: packets.len(),
            },
            events,
            packets,
            anchors: anchors.get(&host).cloned().unwrap_or_default(),
        }
    };
    let sender = trace(Host::Sender, e_send);
    let receiver = trace(Host::Receiver, e_recv);

    let e2e_start = spec.stages.iter().find(|s| s.host == Host::Sender).map(|s| s.event.clone());
    let e2e_end = spec.stages.iter().rev().find(|s| s.host == Host::Receiver).map(|s| s.event.clone());
    let mut e2e_ns = BTreeMap::new();
    if let (Some(a), Some(b)) = (&e2e_start, &e2e_end) {
        for (i, stamps) in times.iter().enumerate() {
            if let (Some(ta), Some(tb)) = (stamps.get(a), stamps.get(b)) {
                e2e_ns.insert(i as u64, tb - ta);
            }
        }
    }

    let truth = GroundTruth {
        run_id: spec.run_id.clone(),
        version_label: spec.version_label.clone(),
        seed: spec.seed,
        n_packets,
        freq_mhz: spec.freq_mhz,
        offset_ns: spec.clock_offset_ns,
        edges: true_edges(spec),
        concurrent: true_concurrent(spec),
        mean_delay_ns: spec.mean_delays(),
        sender_energy_joules: e_send,
        receiver_energy_joules: e_recv,
        energy_joules: match (e_send, e_recv) {
            (Some(a), Some(b)) => Some(a + b),
            _ => None,
        },
        injections: spec.modifications.clone(),
        delivered,
        truncated_draws: truncated,
        e2e_start,
        e2e_end,
        e2e_ns,
    };
    Ok(Generated {
        sender,
        receiver,
        truth,
        wall_ns,
    })
}

fn true_edges(spec: &PipelineSpec) -> Vec<Pair> {
    let mut edges: Vec<Pair> = spec
        .stages
        .windows(2)
        .map(|w| (w[0].event.clone(), w[1].event.clone()))
        .collect();
    edges.extend(spec.timers.iter().map(|t| (t.fire.clone(), t.done.clone())));
    edges.sort();
    edges
}

/// Timer events are independent of the pipeline and of each other.
fn true_concurrent(spec: &PipelineSpec) -> Vec<Pair> {
    let unordered = |a: &String, b: &String| if a <= b { (a.clone(), b.clone()) } else { (b.clone(), a.clone()) };
    let mut out = BTreeSet::new();
    for (i, t) in spec.timers.iter().enumerate() {
        for e in [&t.fire, &t.done] {
            for s in &spec.stages {
                out.insert(unordered(e, &s.event));
            }
            for other in &spec.timers[i + 1..] {
                for o in [&other.fire, &other.done] {
                    out.insert(unordered(e, o));
                }
            }
        }
    }
    out.into_iter().collect()
}
