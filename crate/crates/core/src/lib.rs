//! Differential timing, latency and energy analysis for packet traces of
//! real-time network protocols.
//!
//! The pipeline is: [`ingest`] trace files and interpolate cycle-stamps,
//! align sender and receiver clocks, reconstruct the control-flow graph
//! with [`cfg`], then run the [`analyses`] on top of the [`stats`] kernel.
//! [`simgen`] produces synthetic traces with known ground truth and [`cli`]
//! backs the `delta` executable.

pub mod analyses;
pub mod cfg;
pub mod cli;
pub mod ingest;
pub mod simgen;
pub mod stats;
pub mod trace_model;
