//! Synthetic two-host packet traces with known ground truth.
//!
//! A pipeline is an ordered list of stages; each stage stamps one event a
//! random delay after the previous stage's event. Timers stamp a pair of
//! events on their own thread at a random phase relative to the packet
//! start, so they are concurrent with the pipeline. Generated traces carry
//! cycle-stamps with periodic wall-clock anchors, the receiver clock runs
//! at a fixed offset, and lost packets stop at the first stage on the far
//! host.

mod fixture;
mod generate;

use serde::{Deserialize, Serialize};

pub use fixture::{default_pipeline, write_fixture, FixturePaths};
pub use generate::{generate, Generated, GroundTruth};

use crate::trace_model::{Host, Segment};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("InvalidSpec: {0}")]
    InvalidSpec(String),
}

fn invalid(msg: impl Into<String>) -> SimError {
    SimError::InvalidSpec(msg.into())
}

/// Delay distributions in nanoseconds. Negative draws are truncated at 0
/// and counted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Delay {
    Constant {
        ns: f64,
    },
    Normal {
        mean_ns: f64,
        sd_ns: f64,
    },
    /// `exp(N(mu, sigma))` nanoseconds.
    Lognormal {
        mu: f64,
        sigma: f64,
    },
    /// Normal mode `a` with probability `weight`, otherwise mode `b`.
    Bimodal {
        weight: f64,
        a_mean_ns: f64,
        a_sd_ns: f64,
        b_mean_ns: f64,
        b_sd_ns: f64,
    },
}

impl Delay {
    pub fn mean_ns(&self) -> f64 {
        match *self {
            Delay::Constant { ns } => ns,
            Delay::Normal { mean_ns, .. } => mean_ns,
            Delay::Lognormal { mu, sigma } => (mu + sigma * sigma / 2.0).exp(),
            Delay::Bimodal {
                weight,
                a_mean_ns,
                b_mean_ns,
                ..
            } => weight * a_mean_ns + (1.0 - weight) * b_mean_ns,
        }
    }

    /// The same distribution stretched by `factor`.
    pub fn scaled(&self, factor: f64) -> Delay {
        match *self {
            Delay::Constant { ns } => Delay::Constant { ns: ns * factor },
            Delay::Normal { mean_ns, sd_ns } => Delay::Normal {
                mean_ns: mean_ns * factor,
                sd_ns: sd_ns * factor,
            },
            Delay::Lognormal { mu, sigma } => Delay::Lognormal {
                mu: mu + factor.ln(),
                sigma,
            },
            Delay::Bimodal {
                weight,
                a_mean_ns,
                a_sd_ns,
                b_mean_ns,
                b_sd_ns,
            } => Delay::Bimodal {
                weight,
                a_mean_ns: a_mean_ns * factor,
                a_sd_ns: a_sd_ns * factor,
                b_mean_ns: b_mean_ns * factor,
                b_sd_ns: b_sd_ns * factor,
            },
        }
    }

    fn check(&self, what: &str) -> Result<(), SimError> {
        let ok = match *self {
            Delay::Constant { ns } => ns.is_finite() && ns >= 0.0,
            Delay::Normal { mean_ns, sd_ns } => mean_ns.is_finite() && sd_ns.is_finite() && sd_ns >= 0.0,
            Delay::Lognormal { mu, sigma } => mu.is_finite() && sigma.is_finite() && sigma >= 0.0,
            Delay::Bimodal {
                weight,
                a_mean_ns,
                a_sd_ns,
                b_mean_ns,
                b_sd_ns,
            } => {
                (0.0..=1.0).contains(&weight)
                    && [a_mean_ns, a_sd_ns, b_mean_ns, b_sd_ns].iter().all(|v| v.is_finite())
                    && a_sd_ns >= 0.0
                    && b_sd_ns >= 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("bad delay distribution for {what}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub event: String,
    pub host: Host,
    pub thread: String,
    /// Time from the previous stage's event, or from the packet start for
    /// the first stage.
    pub delay: Delay,
    /// Share of the delay that scales with processor frequency.
    #[serde(default)]
    pub cpu_fraction: f64,
    /// Constant added to every draw; injected modifications land here.
    #[serde(default)]
    pub shift_ns: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timer {
    pub fire: String,
    pub done: String,
    pub host: Host,
    pub thread: String,
    /// The fire event is uniform on `[phase_lo_ns, phase_hi_ns]` relative
    /// to the packet start.
    pub phase_lo_ns: f64,
    pub phase_hi_ns: f64,
    pub duration: Delay,
    #[serde(default)]
    pub cpu_fraction: f64,
    #[serde(default)]
    pub shift_ns: f64,
}

/// Host power `base_w + per_mhz_w * freq_mhz`, drawn while a host is busy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyModel {
    pub base_w: f64,
    pub per_mhz_w: f64,
}

impl EnergyModel {
    pub fn power_w(&self, freq_mhz: u32) -> f64 {
        self.base_w + self.per_mhz_w * freq_mhz as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Modification {
    /// Adds `ns` to the segment's duration.
    ExtraDelay { segment: Segment, ns: f64 },
    /// A change in `source` that also delays `target`.
    CoupledShift {
        source: Segment,
        target: Segment,
        ns: f64,
    },
    /// Inserts `stage` right after the stage stamping `after`.
    ExtraStage { after: String, stage: Stage },
}

fn default_anchor_period() -> usize {
    64
}

fn default_version() -> String {
    "v1".into()
}

fn default_run_id() -> String {
    "run".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSpec {
    pub stages: Vec<Stage>,
    #[serde(default)]
    pub timers: Vec<Timer>,
    #[serde(default)]
    pub loss_rate: f64,
    /// Receiver clock minus sender clock.
    #[serde(default)]
    pub clock_offset_ns: i64,
    /// Packets between wall-clock anchors.
    #[serde(default = "default_anchor_period")]
    pub anchor_period: usize,
    pub packet_interval_ns: u64,
    pub freq_mhz: u32,
    #[serde(default)]
    pub energy_model: Option<EnergyModel>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_version")]
    pub version_label: String,
    #[serde(default = "default_run_id")]
    pub run_id: String,
    /// Injections applied so far, in order.
    #[serde(default)]
    pub modifications: Vec<Modification>,
}

impl PipelineSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.stages.is_empty() {
            return Err(invalid("no stages"));
        }
        let mut names = std::collections::BTreeSet::new();
        let all = self
            .stages
            .iter()
            .map(|s| &s.event)
            .chain(self.timers.iter().flat_map(|t| [&t.fire, &t.done]));
        for name in all {
            if name.is_empty() || !names.insert(name) {
                return Err(invalid(format!("event name \"{name}\" empty or repeated")));
            }
        }
        for s in &self.stages {
            s.delay.check(&s.event)?;
            if s.thread.is_empty() || !(0.0..=1.0).contains(&s.cpu_fraction) || !s.shift_ns.is_finite() {
                return Err(invalid(format!("stage {}: bad thread, cpu_fraction or shift", s.event)));
            }
        }
        for t in &self.timers {
            t.duration.check(&t.done)?;
            let phase_ok = t.phase_lo_ns.is_finite() && t.phase_hi_ns.is_finite() && t.phase_lo_ns <= t.phase_hi_ns;
            if t.thread.is_empty() || !phase_ok || !(0.0..=1.0).contains(&t.cpu_fraction) {
                return Err(invalid(format!("timer {}: bad thread, phase or cpu_fraction", t.fire)));
            }
        }
        if !(0.0..1.0).contains(&self.loss_rate) {
            return Err(invalid("loss_rate must lie in [0, 1)"));
        }
        if self.anchor_period == 0 || self.freq_mhz == 0 || self.packet_interval_ns == 0 {
            return Err(invalid("anchor_period, freq_mhz and packet_interval_ns must be positive"));
        }
        if let Some(m) = self.energy_model {
            if !(m.base_w >= 0.0 && m.per_mhz_w >= 0.0) {
                return Err(invalid("energy model must be non-negative"));
            }
        }
        Ok(())
    }

    #[cfg(test)]
    fn stage_mut(&mut self, event: &str) -> Option<&mut Stage> {
        self.stages.iter_mut().find(|s| s.event == event)
    }

    /// Index of the stage whose delay is the duration of `segment`.
    fn segment_stage(&self, segment: &Segment) -> Option<usize> {
        let i = self.stages.iter().position(|s| s.event == segment.to)?;
        (i > 0 && self.stages[i - 1].event == segment.from).then_some(i)
    }

    fn shift_segment(&mut self, segment: &Segment, ns: f64) -> Result<(), SimError> {
        if let Some(i) = self.segment_stage(segment) {
            self.stages[i].shift_ns += ns;
            return Ok(());
        }
        if let Some(t) = self
            .timers
            .iter_mut()
            .find(|t| t.fire == segment.from && t.done == segment.to)
        {
            t.shift_ns += ns;
            return Ok(());
        }
        Err(invalid(format!("{segment} is not a segment of the pipeline")))
    }
}

/// The spec at `new_freq_mhz`: every delay is stretched by
/// `cpu_fraction * f_old / f_new + (1 - cpu_fraction)`.
pub fn scale_frequency(spec: &PipelineSpec, new_freq_mhz: u32) -> Result<PipelineSpec, SimError> {
    if new_freq_mhz == 0 {
        return Err(invalid("freq_mhz must be positive"));
    }
    let ratio = spec.freq_mhz as f64 / new_freq_mhz as f64;
    let factor = |cpu: f64| cpu * ratio + (1.0 - cpu);
    let mut out = spec.clone();
    for s in &mut out.stages {
        s.delay = s.delay.scaled(factor(s.cpu_fraction));
    }
    for t in &mut out.timers {
        t.duration = t.duration.scaled(factor(t.cpu_fraction));
    }
    out.freq_mhz = new_freq_mhz;
    Ok(out)
}

/// The spec with `modification` applied and recorded.
pub fn inject(spec: &PipelineSpec, modification: Modification) -> Result<PipelineSpec, SimError> {
    let mut out = spec.clone();
    match &modification {
        Modification::ExtraDelay { segment, ns } => out.shift_segment(segment, *ns)?,
        Modification::CoupledShift { source, target, ns } => {
            out.shift_segment(source, *ns)?;
            out.shift_segment(target, *ns)?;
        }
        Modification::ExtraStage { after, stage } => {
            let i = out
                .stages
                .iter()
                .position(|s| &s.event == after)
                .ok_or_else(|| invalid(format!("no stage stamps {after}")))?;
            out.stages.insert(i + 1, stage.clone());
        }
    }
    out.modifications.push(modification);
    out.validate()?;
    Ok(out)
}

impl PipelineSpec {
    /// Mean delay of every stage and timer duration, shifts included.
    pub fn mean_delays(&self) -> std::collections::BTreeMap<String, f64> {
        let mut out: std::collections::BTreeMap<String, f64> = self
            .stages
            .iter()
            .map(|s| (s.event.clone(), s.delay.mean_ns() + s.shift_ns))
            .collect();
        for t in &self.timers {
            out.insert(t.done.clone(), t.duration.mean_ns() + t.shift_ns);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> PipelineSpec {
        default_pipeline()
    }

    fn mean_of(spec: &PipelineSpec, event: &str) -> f64 {
        spec.mean_delays()[event]
    }

    #[test]
    fn frequency_scaling_factors() {
        let mut s = spec();
        s.freq_mhz = 3000;
        for (cpu, factor) in [(1.0, 1.5), (0.0, 1.0), (0.5, 1.25)] {
            s.stage_mut("EncodeEnd").unwrap().cpu_fraction = cpu;
            let before = mean_of(&s, "EncodeEnd");
            let scaled = scale_frequency(&s, 2000).unwrap();
            let after = mean_of(&scaled, "EncodeEnd");
            assert!((after / before - factor).abs() < 1e-12, "cpu {cpu}: {}", after / before);
            assert_eq!(scaled.freq_mhz, 2000);
        }
    }

    #[test]
    fn lognormal_and_bimodal_scale_their_means() {
        let d = Delay::Lognormal { mu: 8.0, sigma: 0.3 };
        assert!((d.scaled(1.5).mean_ns() / d.mean_ns() - 1.5).abs() < 1e-12);
        let d = Delay::Bimodal {
            weight: 0.2,
            a_mean_ns: 100.0,
            a_sd_ns: 5.0,
            b_mean_ns: 300.0,
            b_sd_ns: 5.0,
        };
        assert_eq!(d.mean_ns(), 260.0);
        assert!((d.scaled(2.0).mean_ns() - 520.0).abs() < 1e-9);
    }

    #[test]
    fn injections() {
        let s = spec();
        let seg = Segment::new("EncodeStart", "EncodeEnd");
        let m = inject(&s, Modification::ExtraDelay { segment: seg.clone(), ns: 500_000.0 }).unwrap();
        assert_eq!(mean_of(&m, "EncodeEnd") - mean_of(&s, "EncodeEnd"), 500_000.0);
        assert_eq!(m.modifications.len(), 1);

        let target = Segment::new("DecodingStart", "DecodingEnd");
        let c = inject(
            &s,
            Modification::CoupledShift {
                source: seg,
                target,
                ns: 1000.0,
            },
        )
        .unwrap();
        assert_eq!(mean_of(&c, "EncodeEnd") - mean_of(&s, "EncodeEnd"), 1000.0);
        assert_eq!(mean_of(&c, "DecodingEnd") - mean_of(&s, "DecodingEnd"), 1000.0);

        let timer = Segment::new("TimerFire", "TimerDone");
        let t = inject(&s, Modification::ExtraDelay { segment: timer, ns: 7.0 }).unwrap();
        assert_eq!(mean_of(&t, "TimerDone") - mean_of(&s, "TimerDone"), 7.0);

        let bad = inject(
            &s,
            Modification::ExtraDelay {
                segment: Segment::new("SendStart", "EncodeEnd"),
                ns: 1.0,
            },
        );
        assert!(matches!(bad, Err(SimError::InvalidSpec(_))));
    }

    #[test]
    fn extra_stage_is_inserted() {
        let s = spec();
        let extra = Stage {
            event: "Checksum".into(),
            host: Host::Sender,
            thread: "send".into(),
            delay: Delay::Constant { ns: 1000.0 },
            cpu_fraction: 1.0,
            shift_ns: 0.0,
        };
        let m = inject(
            &s,
            Modification::ExtraStage {
                after: "EncodeEnd".into(),
                stage: extra.clone(),
            },
        )
        .unwrap();
        let pos = m.stages.iter().position(|x| x.event == "Checksum").unwrap();
        assert_eq!(m.stages[pos - 1].event, "EncodeEnd");
        let dup = inject(
            &m,
            Modification::ExtraStage {
                after: "SendStart".into(),
                stage: extra,
            },
        );
        assert!(dup.is_err());
    }

    #[test]
    fn validation() {
        let mut s = spec();
        assert_eq!(s.validate(), Ok(()));
        s.loss_rate = 1.0;
        assert!(s.validate().is_err());
        let mut s = spec();
        s.stages[1].delay = Delay::Normal {
            mean_ns: 1.0,
            sd_ns: -1.0,
        };
        assert!(s.validate().is_err());
        let mut s = spec();
        s.timers[0].done = s.stages[0].event.clone();
        assert!(s.validate().is_err());
    }

    #[test]
    fn spec_json_round_trip() {
        let s = spec();
        let text = serde_json::to_string_pretty(&s).unwrap();
        let back: PipelineSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
        let minimal: PipelineSpec = serde_json::from_str(
            r#"{"stages":[{"event":"A","host":"sender","thread":"t","delay":{"kind":"constant","ns":5}}],
                "packet_interval_ns":1000,"freq_mhz":1000}"#,
        )
        .unwrap();
        assert_eq!(minimal.anchor_period, 64);
        assert_eq!(minimal.version_label, "v1");
    }
}
