use std::path::Path;

use serde::{Deserialize, Serialize};

use super::archive::ArchiveError;
use super::{dropped_in, Reconciliation, Simulation};
use crate::assurance::{AssuranceFile, Presence, RevenueReport};

pub const METRICS_CSV_HEADER: [&str; 12] = [
    "message_count",
    "delivered_messages",
    "dropped_in",
    "reconciled_records",
    "unmatched_switch_marks",
    "reconciliation_time_ns",
    "ns_per_message",
    "average_record_size_bytes",
    "average_message_size_bytes",
    "revenue_before",
    "revenue_after",
    "recovered_pct",
];

/// One run's measurements. `reconciliation_time_ns` and `ns_per_message`
/// are wall-clock; everything else is determined by the config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    /// Calls simulated, i.e. messages per source.
    pub message_count: usize,
    pub delivered_messages: usize,
    pub dropped_in: usize,
    pub reconciled_records: usize,
    pub unmatched_switch_marks: usize,
    pub reconciliation_time_ns: u128,
    pub ns_per_message: f64,
    /// Mean JSON size of a reconciled record.
    pub average_record_size_bytes: f64,
    /// Mean frame size of a delivered message.
    pub average_message_size_bytes: f64,
    /// Minor units.
    pub revenue_before: i64,
    pub revenue_after: i64,
    pub recovered_pct: Option<f64>,
}

fn mean(total: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        total as f64 / n as f64
    }
}

impl RunMetrics {
    pub fn collect(
        sim: &Simulation,
        rec: &Reconciliation,
        files: &[AssuranceFile],
        report: &RevenueReport,
    ) -> Self {
        let records: Vec<_> = rec.batches.iter().flat_map(|b| &b.records).collect();
        let record_bytes: usize = records
            .iter()
            .map(|r| serde_json::to_vec(r).map(|v| v.len()).unwrap_or(0))
            .sum();
        let frame_bytes: usize = sim.delivery.delivered.iter().map(|d| d.message.to_frame().len()).sum();
        RunMetrics {
            message_count: sim.calls.len(),
            delivered_messages: rec.delivered,
            dropped_in: dropped_in(sim),
            reconciled_records: records.len(),
            unmatched_switch_marks: files
                .iter()
                .flat_map(|f| &f.unmatched_marks)
                .filter(|m| m.present == Presence::SwitchOnly)
                .count(),
            reconciliation_time_ns: rec.ingest_time_ns,
            ns_per_message: mean(rec.ingest_time_ns as usize, rec.delivered),
            average_record_size_bytes: mean(record_bytes, records.len()),
            average_message_size_bytes: mean(frame_bytes, sim.delivery.delivered.len()),
            revenue_before: report.balance_before_extended_mamo.minor(),
            revenue_after: report.balance_after_extended_mamo.minor(),
            recovered_pct: report.recovered_percentage,
        }
    }

    fn csv_row(&self) -> [String; 12] {
        [
            self.message_count.to_string(),
            self.delivered_messages.to_string(),
            self.dropped_in.to_string(),
            self.reconciled_records.to_string(),
            self.unmatched_switch_marks.to_string(),
            self.reconciliation_time_ns.to_string(),
            format!("{:.1}", self.ns_per_message),
            format!("{:.1}", self.average_record_size_bytes),
            format!("{:.1}", self.average_message_size_bytes),
            self.revenue_before.to_string(),
            self.revenue_after.to_string(),
            self.recovered_pct.map(|p| format!("{p:.6}")).unwrap_or_default(),
        ]
    }
}

/// One row per run under [`METRICS_CSV_HEADER`].
pub fn emit_metrics(runs: &[RunMetrics], path: &Path) -> Result<(), ArchiveError> {
    let err = |source| ArchiveError::Csv {
        path: path.to_owned(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(METRICS_CSV_HEADER).map_err(err)?;
    for run in runs {
        w.write_record(run.csv_row()).map_err(err)?;
    }
    w.flush().map_err(|source| ArchiveError::Io {
        path: path.to_owned(),
        source,
    })
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn fit_exponent(points: &[(f64, f64)]) -> f64 {
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}
