//! Trace ingestion: file formats, cycle-to-time interpolation and
//! sender/receiver clock alignment.

mod align;
mod format;
mod interpolate;

use std::path::PathBuf;

pub use align::{align, AlignOptions, AlignStrategy, AlignedRun, Alignment, E2eEndpoints};
pub use format::{
    companion_paths, parse_trace, parse_trace_files, write_anchors_csv, write_meta_json,
    write_trace_csv, MetaOverrides, TraceFiles,
};
pub use interpolate::interpolate;

use crate::trace_model::TimelineError;

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("Io: {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("MalformedRow({line}): {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("MissingColumn({0})")]
    MissingColumn(String),
    #[error("EmptyTrace")]
    EmptyTrace,
    #[error("MalformedMeta: {path}: {reason}")]
    MalformedMeta { path: PathBuf, reason: String },
    #[error("MissingMetadata({0})")]
    MissingMetadata(&'static str),
    #[error("NoAnchors({thread})")]
    NoAnchors { thread: String },
    #[error("NonMonotoneAnchors({thread})")]
    NonMonotoneAnchors { thread: String },
    #[error("NoCommonPackets")]
    NoCommonPackets,
    #[error("NoReverseTraffic")]
    NoReverseTraffic,
    #[error("UnknownEvent({0})")]
    UnknownEvent(String),
    #[error("NegativeLatency(seq={seq}, ns={ns})")]
    NegativeLatency { seq: u64, ns: f64 },
    #[error(transparent)]
    Timeline(#[from] TimelineError),
}
