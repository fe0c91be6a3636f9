use std::collections::BTreeMap;

use super::IngestError;
use crate::trace_model::{Anchor, Trace};

/// Fills `wall_ns` for every cycle-only stamp by piecewise-linear
/// interpolation between the anchors of the stamp's thread.
///
/// Stamps outside a thread's anchor range are extrapolated with the slope of
/// the nearest anchor pair and flagged `extrapolated`. Stamps that already
/// carry wall-clock time are left untouched.
pub fn interpolate(trace: &Trace) -> Result<Trace, IngestError> {
    let mut by_thread: BTreeMap<&str, Vec<&Anchor>> = BTreeMap::new();
    for a in &trace.anchors {
        by_thread.entry(&a.thread).or_default().push(a);
    }
    let mut clocks: BTreeMap<&str, Vec<(u64, i64)>> = BTreeMap::new();
    for (thread, mut list) in by_thread {
        list.sort_by_key(|a| a.cycles);
        let ok = list
            .windows(2)
            .all(|w| w[1].cycles > w[0].cycles && w[1].wall_ns > w[0].wall_ns);
        if !ok {
            return Err(IngestError::NonMonotoneAnchors {
                thread: thread.to_string(),
            });
        }
        clocks.insert(thread, list.iter().map(|a| (a.cycles, a.wall_ns)).collect());
    }

    let thread_of: BTreeMap<&str, &str> = trace
        .events
        .iter()
        .map(|e| (e.name.as_str(), e.thread.as_str()))
        .collect();

    let mut out = trace.clone();
    for packet in &mut out.packets {
        for (name, stamp) in packet.stamps.iter_mut() {
            if stamp.wall_ns.is_some() {
                continue;
            }
            let thread = thread_of.get(name.as_str()).copied().unwrap_or("");
            let anchors = clocks
                .get(thread)
                .filter(|a| a.len() >= 2)
                .ok_or_else(|| IngestError::NoAnchors {
                    thread: thread.to_string(),
                })?;
            let (wall, extrapolated) = map_cycles(anchors, stamp.cycles);
            stamp.wall_ns = Some(wall);
            stamp.extrapolated = extrapolated;
        }
    }
    Ok(out)
}

/// `anchors` is sorted, strictly increasing and has at least two entries.
fn map_cycles(anchors: &[(u64, i64)], cycles: u64) -> (i64, bool) {
    let n = anchors.len();
    let above = anchors.partition_point(|&(c, _)| c <= cycles);
    let (lo, hi, extrapolated) = if above == 0 {
        (0, 1, true)
    } else if above == n {
        (n - 2, n - 1, cycles > anchors[n - 1].0)
    } else {
        (above - 1, above, false)
    };
    let (c0, w0) = anchors[lo];
    let (c1, w1) = anchors[hi];
    let num = (cycles as i128 - c0 as i128) * (w1 as i128 - w0 as i128);
    let den = c1 as i128 - c0 as i128;
    (w0 + div_round(num, den) as i64, extrapolated)
}

/// Integer division rounding half away from zero; `den > 0`.
fn div_round(num: i128, den: i128) -> i128 {
    if num >= 0 {
        (2 * num + den) / (2 * den)
    } else {
        -((-2 * num + den) / (2 * den))
    }
}
