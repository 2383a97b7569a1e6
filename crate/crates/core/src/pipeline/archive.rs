//! On-disk layout of a run. Everything is JSON, one value per line where a
//! file holds a list, so stages can be rerun from a previous run's files.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assurance::{
    AssuranceFile, BillingBatch, CountMark, MergedEntry, ParameterMark, RevenueReport,
    UnmatchedMark, REPORT_CSV_HEADER,
};
use crate::envelope::{parse_message, EnvelopeError};
use crate::netsim::{CallRecord, Delivered, Dropped, ScheduleBatch, ScheduleId, ScheduleWindow};
use crate::reconciler::ReconciledRecord;

pub const SCHEDULES_FILE: &str = "schedules.json";
pub const DELIVERY_FILE: &str = "delivery.jsonl";
pub const DROPS_FILE: &str = "drops.jsonl";
pub const ACCOUNTS_FILE: &str = "accounts.json";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";

#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Json {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}:{line}: bad frame: {reason}")]
    Frame {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("{0}: no marks trailer")]
    MissingTrailer(PathBuf),
    #[error("{path}: {reason}")]
    Layout { path: PathBuf, reason: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ArchiveError + '_ {
    move |source| ArchiveError::Io {
        path: path.to_owned(),
        source,
    }
}

pub fn switch_file_name(id: ScheduleId) -> String {
    format!("switch_T{id}.jsonl")
}

pub fn billing_file_name(id: ScheduleId) -> String {
    format!("billing_Tp{id}.jsonl")
}

pub fn assurance_file_name(id: ScheduleId) -> String {
    format!("assurance_T{id}.jsonl")
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<(), ArchiveError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for (i, item) in items.into_iter().enumerate() {
        serde_json::to_writer(&mut w, &item).map_err(|source| ArchiveError::Json {
            path: path.to_owned(),
            line: i + 1,
            source,
        })?;
        w.write_all(b"\n").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, ArchiveError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| ArchiveError::Json {
            path: path.to_owned(),
            line: i + 1,
            source,
        })?);
    }
    Ok(out)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ArchiveError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| ArchiveError::Json {
        path: path.to_owned(),
        line: 0,
        source,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, ArchiveError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| ArchiveError::Json {
        path: path.to_owned(),
        line: source.line(),
        source,
    })
}

#[derive(Serialize, Deserialize)]
struct SwitchLine {
    schedule_id: ScheduleId,
    #[serde(flatten)]
    record: CallRecord,
}

pub fn write_switch_batch(dir: &Path, batch: &ScheduleBatch) -> Result<PathBuf, ArchiveError> {
    let path = dir.join(switch_file_name(batch.window.id));
    write_jsonl(
        &path,
        batch.records.iter().map(|r| SwitchLine {
            schedule_id: batch.window.id,
            record: r.clone(),
        }),
    )?;
    Ok(path)
}

pub fn read_switch_batch(dir: &Path, window: ScheduleWindow) -> Result<ScheduleBatch, ArchiveError> {
    let path = dir.join(switch_file_name(window.id));
    let lines: Vec<SwitchLine> = read_jsonl(&path)?;
    if let Some(l) = lines.iter().find(|l| l.schedule_id != window.id) {
        return Err(ArchiveError::Layout {
            path,
            reason: format!("record {} is tagged {}", l.record.call_id, l.schedule_id),
        });
    }
    Ok(ScheduleBatch {
        window,
        records: lines.into_iter().map(|l| l.record).collect(),
    })
}

pub fn write_billing_batch(dir: &Path, batch: &BillingBatch) -> Result<PathBuf, ArchiveError> {
    let path = dir.join(billing_file_name(batch.window.id));
    write_jsonl(&path, &batch.records)?;
    Ok(path)
}

pub fn read_billing_batch(dir: &Path, window: ScheduleWindow) -> Result<BillingBatch, ArchiveError> {
    let path = dir.join(billing_file_name(window.id));
    let records: Vec<ReconciledRecord> = read_jsonl(&path)?;
    Ok(BillingBatch { window, records })
}

#[derive(Serialize, Deserialize)]
struct Marks {
    schedule_pair: (ScheduleId, ScheduleId),
    window: ScheduleWindow,
    count_mark: CountMark,
    unmatched_marks: Vec<UnmatchedMark>,
    parameter_marks: Vec<ParameterMark>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum AssuranceLine {
    Trailer { marks: Marks },
    Entry(MergedEntry),
}

/// Merged entries one per line, then a `{"marks": ...}` trailer.
pub fn write_assurance_file(dir: &Path, file: &AssuranceFile) -> Result<PathBuf, ArchiveError> {
    let path = dir.join(assurance_file_name(file.schedule_pair.0));
    let trailer = AssuranceLine::Trailer {
        marks: Marks {
            schedule_pair: file.schedule_pair,
            window: file.window,
            count_mark: file.count_mark,
            unmatched_marks: file.unmatched_marks.clone(),
            parameter_marks: file.parameter_marks.clone(),
        },
    };
    write_jsonl(
        &path,
        file.merged
            .iter()
            .cloned()
            .map(AssuranceLine::Entry)
            .chain(std::iter::once(trailer)),
    )?;
    Ok(path)
}

pub fn read_assurance_file(path: &Path) -> Result<AssuranceFile, ArchiveError> {
    let mut lines: Vec<AssuranceLine> = read_jsonl(path)?;
    let Some(AssuranceLine::Trailer { marks }) = lines.pop() else {
        return Err(ArchiveError::MissingTrailer(path.to_owned()));
    };
    let merged = lines
        .into_iter()
        .map(|l| match l {
            AssuranceLine::Entry(e) => Ok(e),
            AssuranceLine::Trailer { .. } => Err(ArchiveError::Layout {
                path: path.to_owned(),
                reason: "marks trailer before the last line".into(),
            }),
        })
        .collect::<Result<_, _>>()?;
    Ok(AssuranceFile {
        schedule_pair: marks.schedule_pair,
        window: marks.window,
        merged,
        count_mark: marks.count_mark,
        unmatched_marks: marks.unmatched_marks,
        parameter_marks: marks.parameter_marks,
    })
}

/// Paths of every `assurance_T*.jsonl` in `dir`, sorted by name.
pub fn assurance_files_in(dir: &Path) -> Result<Vec<PathBuf>, ArchiveError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if name.starts_with("assurance_T") && name.ends_with(".jsonl") {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct DeliveryLine {
    arrival_ms: u64,
    frame: String,
}

pub fn write_delivery(dir: &Path, delivered: &[Delivered]) -> Result<PathBuf, ArchiveError> {
    let path = dir.join(DELIVERY_FILE);
    write_jsonl(
        &path,
        delivered.iter().map(|d| DeliveryLine {
            arrival_ms: d.arrival_ms,
            frame: hex::encode(d.message.to_frame()),
        }),
    )?;
    Ok(path)
}

pub fn read_delivery(dir: &Path) -> Result<Vec<Delivered>, ArchiveError> {
    let path = dir.join(DELIVERY_FILE);
    let lines: Vec<DeliveryLine> = read_jsonl(&path)?;
    lines
        .into_iter()
        .enumerate()
        .map(|(i, l)| {
            let frame_err = |reason: String| ArchiveError::Frame {
                path: path.clone(),
                line: i + 1,
                reason,
            };
            let bytes = hex::decode(&l.frame).map_err(|e| frame_err(e.to_string()))?;
            let message = parse_message(&bytes).map_err(|e: EnvelopeError| frame_err(e.to_string()))?;
            Ok(Delivered {
                arrival_ms: l.arrival_ms,
                message,
            })
        })
        .collect()
}

pub fn write_drops(dir: &Path, dropped: &[Dropped]) -> Result<PathBuf, ArchiveError> {
    let path = dir.join(DROPS_FILE);
    write_jsonl(&path, dropped)?;
    Ok(path)
}

pub fn read_drops(dir: &Path) -> Result<Vec<Dropped>, ArchiveError> {
    read_jsonl(&dir.join(DROPS_FILE))
}

/// `report.json` plus a one-row `report.csv`.
pub fn write_report(dir: &Path, report: &RevenueReport) -> Result<[PathBuf; 2], ArchiveError> {
    let json = dir.join(REPORT_JSON);
    write_json(&json, report)?;
    let csv_path = dir.join(REPORT_CSV);
    let csv_err = |source| ArchiveError::Csv {
        path: csv_path.clone(),
        source,
    };
    let mut w = csv::Writer::from_path(&csv_path).map_err(csv_err)?;
    w.write_record(REPORT_CSV_HEADER).map_err(csv_err)?;
    w.write_record(report.csv_row()).map_err(csv_err)?;
    w.flush().map_err(io_err(&csv_path))?;
    Ok([json, csv_path])
}
