use serde::Serialize;

use super::AnalysisError;
use crate::ingest::AlignedRun;

pub const ET2_FORMULA: &str = "et2 = (energy_joules / packet_count) * mean_e2e_s^2";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyRow {
    pub label: String,
    pub freq_mhz: Option<u32>,
    /// Sender plus receiver energy over the whole run.
    pub energy_joules: f64,
    pub packet_count: usize,
    pub energy_per_packet_j: f64,
    pub mean_e2e_s: f64,
    /// In J*s^2; lower is better.
    pub et2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyReport {
    pub formula: String,
    /// Ascending by `et2`, ties by label.
    pub rows: Vec<EnergyRow>,
}

pub fn et2(energy_per_packet_j: f64, mean_e2e_s: f64) -> f64 {
    energy_per_packet_j * mean_e2e_s * mean_e2e_s
}

/// Ranks runs by their per-packet ET^2. Packet counts come from the sender.
pub fn energy_et2(runs: &[AlignedRun]) -> Result<EnergyReport, AnalysisError> {
    let mut rows = runs
        .iter()
        .map(|run| {
            let id = run.run_id().to_string();
            let energy = run
                .energy_joules()
                .ok_or_else(|| AnalysisError::MissingEnergy(id.clone()))?;
            let packets = run.sender.meta.packet_count;
            if packets == 0 {
                return Err(AnalysisError::NoPackets(id));
            }
            if run.e2e_ns.is_empty() {
                return Err(AnalysisError::NoCompletePackets(id));
            }
            let mean_ns = run.e2e_ns.values().sum::<f64>() / run.e2e_ns.len() as f64;
            Ok(row(id, run.sender.meta.freq_mhz, energy, packets, mean_ns / 1e9))
        })
        .collect::<Result<Vec<_>, _>>()?;
    rows.sort_by(|a, b| a.et2.total_cmp(&b.et2).then_with(|| a.label.cmp(&b.label)));
    Ok(EnergyReport {
        formula: ET2_FORMULA.to_string(),
        rows,
    })
}

fn row(label: String, freq_mhz: Option<u32>, energy: f64, packets: usize, mean_e2e_s: f64) -> EnergyRow {
    let per_packet = energy / packets as f64;
    EnergyRow {
        label,
        freq_mhz,
        energy_joules: energy,
        packet_count: packets,
        energy_per_packet_j: per_packet,
        mean_e2e_s,
        et2: et2(per_packet, mean_e2e_s),
    }
}
