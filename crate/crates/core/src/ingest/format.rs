use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::IngestError;
use crate::trace_model::{Anchor, EventDef, Host, PacketRecord, RawStamp, RunMeta, Trace};

const TRACE_COLUMNS: [&str; 5] = ["seq", "event", "thread", "cycles", "wall_ns"];
const ANCHOR_COLUMNS: [&str; 3] = ["thread", "cycles", "wall_ns"];

/// Metadata fields given on the command line. Any field set here wins over
/// the JSON sidecar.
#[derive(Debug, Clone, Default)]
pub struct MetaOverrides {
    pub run_id: Option<String>,
    pub host: Option<Host>,
    pub version_label: Option<String>,
    pub freq_mhz: Option<u32>,
    pub energy_joules: Option<f64>,
}

/// The three files making up one host's trace.
#[derive(Debug, Clone)]
pub struct TraceFiles {
    pub trace: PathBuf,
    pub anchors: Option<PathBuf>,
    pub meta: Option<PathBuf>,
}

/// `dir/sender.csv` has its anchors in `dir/sender.anchors.csv` and its
/// metadata in `dir/sender.meta.json`.
pub fn companion_paths(trace: &Path) -> (PathBuf, PathBuf) {
    let stem = trace
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let dir = trace.parent().unwrap_or_else(|| Path::new(""));
    (
        dir.join(format!("{stem}.anchors.csv")),
        dir.join(format!("{stem}.meta.json")),
    )
}

/// Parses a trace CSV plus whichever companion files exist next to it.
pub fn parse_trace(path: &Path, overrides: &MetaOverrides) -> Result<Trace, IngestError> {
    let (anchors, meta) = companion_paths(path);
    parse_trace_files(
        &TraceFiles {
            trace: path.to_path_buf(),
            anchors: anchors.exists().then_some(anchors),
            meta: meta.exists().then_some(meta),
        },
        overrides,
    )
}

pub fn parse_trace_files(files: &TraceFiles, overrides: &MetaOverrides) -> Result<Trace, IngestError> {
    let file_meta = match &files.meta {
        Some(p) => Some(read_meta(p)?),
        None => None,
    };
    let file_meta = file_meta.unwrap_or_default();

    let host = overrides
        .host
        .or(file_meta.host)
        .ok_or(IngestError::MissingMetadata("host"))?;

    let (events, packets) = read_rows(open(&files.trace)?, host)?;
    let anchors = match &files.anchors {
        Some(p) => read_anchors(open(p)?)?,
        None => Vec::new(),
    };

    let run_id = overrides
        .run_id
        .clone()
        .or(file_meta.run_id)
        .unwrap_or_else(|| {
            files
                .trace
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default()
        });
    let meta = RunMeta {
        run_id,
        host,
        version_label: overrides
            .version_label
            .clone()
            .or(file_meta.version_label)
            .unwrap_or_else(|| "unversioned".into()),
        freq_mhz: overrides.freq_mhz.or(file_meta.freq_mhz),
        energy_joules: overrides.energy_joules.or(file_meta.energy_joules),
        packet_count: file_meta.packet_count.unwrap_or(packets.len()),
    };
    Ok(Trace {
        meta,
        events,
        packets,
        anchors,
    })
}

fn open(path: &Path) -> Result<File, IngestError> {
    File::open(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Metadata sidecar as stored on disk; every field is optional.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub(crate) struct MetaFile {
    pub run_id: Option<String>,
    pub host: Option<Host>,
    pub version_label: Option<String>,
    pub freq_mhz: Option<u32>,
    pub energy_joules: Option<f64>,
    pub packet_count: Option<usize>,
}

pub(crate) fn read_meta(path: &Path) -> Result<MetaFile, IngestError> {
    let mut text = String::new();
    open(path)?
        .read_to_string(&mut text)
        .map_err(|source| IngestError::Io {
            path: path.to_path_buf(),
            source,
        })?;
    serde_json::from_str(&text).map_err(|e| IngestError::MalformedMeta {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

fn column_index(headers: &csv::StringRecord, wanted: &[&str]) -> Result<Vec<usize>, IngestError> {
    wanted
        .iter()
        .map(|name| {
            headers
                .iter()
                .position(|h| h == *name)
                .ok_or_else(|| IngestError::MissingColumn((*name).to_string()))
        })
        .collect()
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(input)
}

fn malformed(line: u64, reason: impl Into<String>) -> IngestError {
    IngestError::MalformedRow {
        line,
        reason: reason.into(),
    }
}

fn field<'a>(rec: &'a csv::StringRecord, idx: usize, line: u64, name: &str) -> Result<&'a str, IngestError> {
    rec.get(idx)
        .ok_or_else(|| malformed(line, format!("missing field '{name}'")))
}

fn parse_num<T: std::str::FromStr>(s: &str, line: u64, name: &str) -> Result<T, IngestError> {
    s.parse()
        .map_err(|_| malformed(line, format!("'{s}' is not a valid {name}")))
}

fn read_rows<R: Read>(input: R, host: Host) -> Result<(Vec<EventDef>, Vec<PacketRecord>), IngestError> {
    let mut rdr = reader(input);
    let headers = rdr
        .headers()
        .map_err(|e| malformed(1, e.to_string()))?
        .clone();
    let idx = column_index(&headers, &TRACE_COLUMNS)?;

    let mut events: Vec<EventDef> = Vec::new();
    let mut event_thread: BTreeMap<String, String> = BTreeMap::new();
    let mut packets: BTreeMap<u64, PacketRecord> = BTreeMap::new();

    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            malformed(line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let seq: u64 = parse_num(field(&rec, idx[0], line, "seq")?, line, "seq")?;
        let event = field(&rec, idx[1], line, "event")?;
        let thread = field(&rec, idx[2], line, "thread")?;
        let cycles: u64 = parse_num(field(&rec, idx[3], line, "cycles")?, line, "cycles")?;
        let wall = rec.get(idx[4]).unwrap_or("");
        let wall_ns = if wall.is_empty() {
            None
        } else {
            Some(parse_num::<i64>(wall, line, "wall_ns")?)
        };
        if event.is_empty() {
            return Err(malformed(line, "empty event name"));
        }
        if thread.is_empty() {
            return Err(malformed(line, "empty thread"));
        }

        match event_thread.get(event) {
            Some(t) if t != thread => {
                return Err(malformed(
                    line,
                    format!("event '{event}' recorded on thread '{thread}' and '{t}'"),
                ))
            }
            Some(_) => {}
            None => {
                event_thread.insert(event.to_string(), thread.to_string());
                events.push(EventDef {
                    name: event.to_string(),
                    host,
                    thread: thread.to_string(),
                });
            }
        }

        let packet = packets.entry(seq).or_insert_with(|| PacketRecord {
            seq,
            stamps: BTreeMap::new(),
        });
        let stamp = RawStamp {
            cycles,
            wall_ns,
            extrapolated: false,
        };
        if packet.stamps.insert(event.to_string(), stamp).is_some() {
            return Err(malformed(
                line,
                format!("event '{event}' stamped twice for packet {seq}"),
            ));
        }
    }

    if packets.is_empty() {
        return Err(IngestError::EmptyTrace);
    }
    Ok((events, packets.into_values().collect()))
}

fn read_anchors<R: Read>(input: R) -> Result<Vec<Anchor>, IngestError> {
    let mut rdr = reader(input);
    let headers = rdr
        .headers()
        .map_err(|e| malformed(1, e.to_string()))?
        .clone();
    let idx = column_index(&headers, &ANCHOR_COLUMNS)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            malformed(line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        out.push(Anchor {
            thread: field(&rec, idx[0], line, "thread")?.to_string(),
            cycles: parse_num(field(&rec, idx[1], line, "cycles")?, line, "cycles")?,
            wall_ns: parse_num(field(&rec, idx[2], line, "wall_ns")?, line, "wall_ns")?,
        });
    }
    Ok(out)
}

/// Writes the trace table. Rows are ordered by packet, then by cycles.
pub fn write_trace_csv<W: Write>(trace: &Trace, out: W) -> std::io::Result<()> {
    let thread: BTreeMap<&str, &str> = trace
        .events
        .iter()
        .map(|e| (e.name.as_str(), e.thread.as_str()))
        .collect();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_COLUMNS)?;
    let mut packets: Vec<&PacketRecord> = trace.packets.iter().collect();
    packets.sort_by_key(|p| p.seq);
    for p in packets {
        let mut rows: Vec<(&String, &RawStamp)> = p.stamps.iter().collect();
        rows.sort_by(|a, b| a.1.cycles.cmp(&b.1.cycles).then(a.0.cmp(b.0)));
        for (name, s) in rows {
            let wall = s.wall_ns.map(|w| w.to_string()).unwrap_or_default();
            w.write_record([
                p.seq.to_string().as_str(),
                name,
                thread.get(name.as_str()).copied().unwrap_or(""),
                s.cycles.to_string().as_str(),
                wall.as_str(),
            ])?;
        }
    }
    w.flush()
}

pub fn write_anchors_csv<W: Write>(anchors: &[Anchor], out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ANCHOR_COLUMNS)?;
    for a in anchors {
        w.write_record([
            a.thread.as_str(),
            a.cycles.to_string().as_str(),
            a.wall_ns.to_string().as_str(),
        ])?;
    }
    w.flush()
}

pub fn write_meta_json<W: Write>(meta: &RunMeta, mut out: W) -> std::io::Result<()> {
    serde_json::to_writer_pretty(&mut out, meta)?;
    out.write_all(b"\n")
}
