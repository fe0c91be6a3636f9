use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::{Delay, EnergyModel, Generated, PipelineSpec, Stage, Timer};
use crate::ingest::{companion_paths, write_anchors_csv, write_meta_json, write_trace_csv};
use crate::trace_model::{Host, Trace};

fn stage(event: &str, host: Host, mean_ns: f64, sd_ns: f64, cpu_fraction: f64) -> Stage {
    Stage {
        event: event.into(),
        host,
        thread: match host {
            Host::Sender => "send".into(),
            Host::Receiver => "recv".into(),
        },
        delay: if sd_ns == 0.0 {
            Delay::Constant { ns: mean_ns }
        } else {
            Delay::Normal { mean_ns, sd_ns }
        },
        cpu_fraction,
        shift_ns: 0.0,
    }
}

/// The twelve-event sender/receiver pipeline: five stages per host on one
/// thread each, plus a sender-side timer firing anywhere in the packet
/// interval, so it stays concurrent with every stage even after a few
/// hundred microseconds of injected delay.
pub fn default_pipeline() -> PipelineSpec {
    use Host::{Receiver, Sender};
    let stages = vec![
        stage("SendStart", Sender, 0.0, 0.0, 0.0),
        stage("SubmitPackage", Sender, 4_000.0, 400.0, 1.0),
        stage("EncodeStart", Sender, 2_000.0, 200.0, 1.0),
        stage("EncodeEnd", Sender, 30_000.0, 3_000.0, 1.0),
        stage("TransmitEnd", Sender, 10_000.0, 1_000.0, 0.5),
        stage("ReceiveStart", Receiver, 50_000.0, 5_000.0, 0.0),
        stage("DecodingStart", Receiver, 3_000.0, 300.0, 0.5),
        stage("DecodingEnd", Receiver, 40_000.0, 8_000.0, 1.0),
        stage("CopyOutputStart", Receiver, 2_000.0, 200.0, 0.5),
        stage("CopyOutputEnd", Receiver, 15_000.0, 1_500.0, 0.0),
    ];
    PipelineSpec {
        stages,
        timers: vec![Timer {
            fire: "TimerFire".into(),
            done: "TimerDone".into(),
            host: Sender,
            thread: "timer".into(),
            phase_lo_ns: -50_000.0,
            phase_hi_ns: 900_000.0,
            duration: Delay::Normal {
                mean_ns: 20_000.0,
                sd_ns: 4_000.0,
            },
            cpu_fraction: 1.0,
            shift_ns: 0.0,
        }],
        loss_rate: 0.0,
        clock_offset_ns: 5_000_000,
        anchor_period: 64,
        packet_interval_ns: 1_000_000,
        freq_mhz: 3000,
        energy_model: Some(EnergyModel {
            base_w: 10.0,
            per_mhz_w: 0.01,
        }),
        seed: 0,
        version_label: "v1".into(),
        run_id: "run".into(),
        modifications: Vec::new(),
    }
}

/// Where [`write_fixture`] put its files. Each trace has `.anchors.csv`
/// and `.meta.json` companions next to it.
#[derive(Debug, Clone, PartialEq)]
pub struct FixturePaths {
    pub sender: PathBuf,
    pub receiver: PathBuf,
    pub ground_truth: PathBuf,
}

fn write_with<F>(path: &Path, f: F) -> std::io::Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
{
    let mut w = BufWriter::new(File::create(path)?);
    f(&mut w)?;
    w.flush()
}

fn write_trace(trace: &Trace, path: &Path) -> std::io::Result<()> {
    let (anchors, meta) = companion_paths(path);
    write_with(path, |w| write_trace_csv(trace, w))?;
    write_with(&anchors, |w| write_anchors_csv(&trace.anchors, w))?;
    write_with(&meta, |w| write_meta_json(&trace.meta, w))
}

/// Writes `sender.csv`, `receiver.csv` (with companions) and
/// `ground_truth.json` into `dir`, creating it if needed.
pub fn write_fixture(dir: &Path, generated: &Generated) -> std::io::Result<FixturePaths> {
    fs::create_dir_all(dir)?;
    let paths = FixturePaths {
        sender: dir.join("sender.csv"),
        receiver: dir.join("receiver.csv"),
        ground_truth: dir.join("ground_truth.json"),
    };
    write_trace(&generated.sender, &paths.sender)?;
    write_trace(&generated.receiver, &paths.receiver)?;
    write_with(&paths.ground_truth, |w| {
        serde_json::to_writer_pretty(&mut *w, &generated.truth)?;
        w.write_all(b"\n")
    })?;
    Ok(paths)
}
