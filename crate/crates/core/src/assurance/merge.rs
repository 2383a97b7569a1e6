use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::AssuranceError;
use crate::money::Money;
use crate::netsim::{CallRecord, ScheduleBatch, ScheduleId, ScheduleWindow};
use crate::reconciler::ReconciledRecord;

/// Fields [`contrast_parameters`] knows how to compare.
pub const CONTRASTABLE_FIELDS: &[&str] = &[
    "correlation_id",
    "start_time_ms",
    "charged_duration",
    "final_charge",
    "account_before",
    "account_after",
    "caller",
    "callee",
];

pub const DEFAULT_CONTRAST_FIELDS: &[&str] = &["charged_duration", "final_charge"];

/// Reconciled records tagged with one billing schedule T'_i.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BillingBatch {
    pub window: ScheduleWindow,
    pub records: Vec<ReconciledRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergedEntry {
    pub call_id: u64,
    pub switch_record: Option<CallRecord>,
    pub reconciled_record: Option<ReconciledRecord>,
}

impl MergedEntry {
    /// The record to bill: the switch's wherever it exists.
    pub fn authoritative(&self) -> &CallRecord {
        self.switch_record
            .as_ref()
            .or(self.reconciled_record.as_ref().map(|r| &r.in_fields))
            .expect("merged entries have at least one side")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CountMark {
    Match,
    Mismatch { switch_count: usize, reconciled_count: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Presence {
    SwitchOnly,
    BillingOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct UnmatchedMark {
    pub call_id: u64,
    pub present: Presence,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FieldValue {
    Count(u64),
    Money(Money),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParameterMark {
    pub call_id: u64,
    pub field: String,
    pub switch_value: FieldValue,
    pub reconciled_value: FieldValue,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssuranceFile {
    /// (T_i, T'_i).
    pub schedule_pair: (ScheduleId, ScheduleId),
    pub window: ScheduleWindow,
    /// Ascending by call id.
    pub merged: Vec<MergedEntry>,
    pub count_mark: CountMark,
    pub unmatched_marks: Vec<UnmatchedMark>,
    pub parameter_marks: Vec<ParameterMark>,
}

impl AssuranceFile {
    pub fn switch_only(&self) -> impl Iterator<Item = &MergedEntry> {
        self.merged
            .iter()
            .filter(|e| e.switch_record.is_some() && e.reconciled_record.is_none())
    }
}

/// Stable ascending sort by call id.
pub fn sort_archive<T, F: Fn(&T) -> u64>(records: &mut [T], call_id: F) {
    records.sort_by_key(call_id);
}

fn sorted<T: Clone>(records: &[T], key: impl Fn(&T) -> u64) -> Result<Vec<T>, AssuranceError> {
    let mut v = records.to_vec();
    sort_archive(&mut v, &key);
    if let Some(p) = v.windows(2).find(|p| key(&p[0]) == key(&p[1])) {
        return Err(AssuranceError::DuplicateCallId(key(&p[0])));
    }
    Ok(v)
}

/// Full outer merge of a switch schedule and the billing schedule for the
/// same window, with count and unmatched-id marks.
pub fn merge_archives(switch: &ScheduleBatch, billing: &BillingBatch) -> Result<AssuranceFile, AssuranceError> {
    if !switch.window.same_span(&billing.window) {
        return Err(AssuranceError::mismatch(&switch.window, &billing.window));
    }
    let left = sorted(&switch.records, |r| r.call_id)?;
    let right = sorted(&billing.records, |r| r.call_id)?;

    let mut merged = Vec::with_capacity(left.len().max(right.len()));
    let mut unmatched = Vec::new();
    let mut l = left.into_iter().peekable();
    let mut r = right.into_iter().peekable();
    loop {
        let order = match (l.peek(), r.peek()) {
            (None, None) => break,
            (Some(_), None) => Ordering::Less,
            (None, Some(_)) => Ordering::Greater,
            (Some(a), Some(b)) => a.call_id.cmp(&b.call_id),
        };
        let entry = match order {
            Ordering::Less => {
                let s = l.next().unwrap();
                unmatched.push(UnmatchedMark { call_id: s.call_id, present: Presence::SwitchOnly });
                MergedEntry { call_id: s.call_id, switch_record: Some(s), reconciled_record: None }
            }
            Ordering::Greater => {
                let b = r.next().unwrap();
                unmatched.push(UnmatchedMark { call_id: b.call_id, present: Presence::BillingOnly });
                MergedEntry { call_id: b.call_id, switch_record: None, reconciled_record: Some(b) }
            }
            Ordering::Equal => {
                let s = l.next().unwrap();
                MergedEntry { call_id: s.call_id, switch_record: Some(s), reconciled_record: r.next() }
            }
        };
        merged.push(entry);
    }

    let (switch_count, reconciled_count) = (switch.records.len(), billing.records.len());
    Ok(AssuranceFile {
        schedule_pair: (switch.window.id, billing.window.id),
        window: switch.window,
        merged,
        count_mark: if switch_count == reconciled_count {
            CountMark::Match
        } else {
            CountMark::Mismatch { switch_count, reconciled_count }
        },
        unmatched_marks: unmatched,
        parameter_marks: Vec::new(),
    })
}

fn field_value(record: &CallRecord, field: &str) -> Option<FieldValue> {
    Some(match field {
        "correlation_id" => FieldValue::Count(record.correlation_id),
        "start_time_ms" => FieldValue::Count(record.start_time_ms),
        "charged_duration" => FieldValue::Count(record.charged_duration.into()),
        "final_charge" => FieldValue::Money(record.final_charge),
        "account_before" => FieldValue::Money(record.account_before),
        "account_after" => FieldValue::Money(record.account_after),
        "caller" => FieldValue::Text(record.caller.clone()),
        "callee" => FieldValue::Text(record.callee.clone()),
        _ => return None,
    })
}

/// Appends a mark for every two-sided entry whose `fields` differ.
pub fn contrast_parameters(mut file: AssuranceFile, fields: &[&str]) -> Result<AssuranceFile, AssuranceError> {
    if let Some(bad) = fields.iter().find(|f| !CONTRASTABLE_FIELDS.contains(f)) {
        return Err(AssuranceError::UnknownField((*bad).to_owned()));
    }
    for entry in &file.merged {
        let (Some(s), Some(b)) = (&entry.switch_record, &entry.reconciled_record) else {
            continue;
        };
        for field in fields {
            let sv = field_value(s, field).expect("field checked above");
            let bv = field_value(&b.in_fields, field).expect("field checked above");
            if sv != bv {
                file.parameter_marks.push(ParameterMark {
                    call_id: entry.call_id,
                    field: (*field).to_owned(),
                    switch_value: sv,
                    reconciled_value: bv,
                });
            }
        }
    }
    Ok(file)
}
