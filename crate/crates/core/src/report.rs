//! File outputs: the per-slot trace CSV, the sweep summary CSV, the
//! resolved scenario JSON, and one-line certificate records.

use serde::{Deserialize, Serialize};
use std::io;

use crate::error::Result;
use crate::experiment::{ExperimentTrace, SweepPoint};
use crate::oracle::BoundCertificate;
use crate::scenario::ScenarioConfig;

#[derive(Debug, Serialize)]
struct TraceRow<'a> {
    slot: u32,
    total_payment: f64,
    cum_payment: f64,
    alive: u32,
    winners: &'a str,
    max_queue: f64,
}

/// Write the per-slot trace. Winner ids are `;`-joined in ascending order,
/// so equal traces serialize to byte-identical files.
pub fn write_trace_csv<W: io::Write>(trace: &ExperimentTrace, writer: W) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    for record in &trace.records {
        let winners = record
            .winners
            .iter()
            .map(|id| id.0.to_string())
            .collect::<Vec<_>>()
            .join(";");
        csv.serialize(TraceRow {
            slot: record.slot,
            total_payment: record.total_payment,
            cum_payment: record.cum_payment,
            alive: record.alive,
            winners: &winners,
            max_queue: record.max_queue,
        })?;
    }
    csv.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct SummaryRow {
    grid_value: f64,
    mean_avg_payment: f64,
    std_avg_payment: f64,
    replications: u32,
}

pub fn write_summary_csv<W: io::Write>(points: &[SweepPoint], writer: W) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    for point in points {
        csv.serialize(SummaryRow {
            grid_value: point.grid_value,
            mean_avg_payment: point.mean_avg_payment,
            std_avg_payment: point.std_avg_payment,
            replications: point.replications,
        })?;
    }
    csv.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Write the fully resolved config, sufficient to regenerate the run.
pub fn write_scenario_json<W: io::Write>(config: &ScenarioConfig, writer: W) -> Result<()> {
    serde_json::to_writer_pretty(writer, &config.resolved())?;
    Ok(())
}

/// One line of a certification run: either a full certificate or the reason
/// the instance was degenerate and skipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateRecord {
    pub seed: u64,
    #[serde(flatten, skip_serializing_if = "Option::is_none")]
    pub certificate: Option<BoundCertificate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub degenerate: Option<String>,
}

impl CertificateRecord {
    pub fn certified(seed: u64, certificate: BoundCertificate) -> Self {
        Self {
            seed,
            certificate: Some(certificate),
            degenerate: None,
        }
    }

    pub fn skipped(seed: u64, reason: String) -> Self {
        Self {
            seed,
            certificate: None,
            degenerate: Some(reason),
        }
    }

    /// Skipped instances do not count as violations.
    pub fn passed(&self) -> bool {
        self.certificate
            .as_ref()
            .is_none_or(|c| c.pass && c.shift_relation_holds())
    }
}

pub fn write_certificates_jsonl<W: io::Write>(
    records: &[CertificateRecord],
    mut writer: W,
) -> Result<()> {
    for record in records {
        serde_json::to_writer(&mut writer, record)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}
