//! Billing-side pairing of IN and handset messages.
//!
//! Each arriving message is annotated by the billing party (through
//! [`apply_edit`], so only the granted additions are possible), then matched
//! with its counterpart by correlation id. Unmatched messages wait in the
//! [`PendingLog`] until their counterpart arrives or [`Reconciler::expire`]
//! applies the [`TimeoutPolicy`].

use std::collections::{BTreeSet, HashMap, HashSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::authz::SegmentText;
use crate::envelope::{
    edit_section, EnvelopeError, Keyring, MamoMessage, Source, HANDSET_SECTION,
    HOUSEKEEPING_SECTION, NETWORK_SECTION,
};
use crate::netsim::{CallRecord, Delivered, HandsetMetrics, RecordFormatError, ScheduleId, ScheduleWindow};

/// Three hours.
pub const DEFAULT_WAIT_LIMIT_MS: u64 = 3 * 60 * 60 * 1000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReconcileError {
    #[error(transparent)]
    Envelope(#[from] EnvelopeError),
    #[error(transparent)]
    Record(#[from] RecordFormatError),
    #[error("message {frame} carries data for correlation id {section}")]
    CorrelationMismatch { frame: u64, section: u64 },
    #[error("housekeeping changed the core data of message {0}")]
    CoreAltered(u64),
    #[error("call {call_id} at {start_ms} lies outside every billing schedule")]
    NoCoveringSchedule { call_id: u64, start_ms: u64 },
    #[error("invalid timeout policy: {0}")]
    InvalidPolicy(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Provenance {
    FullyReconciled,
    BilledWithoutHandset,
}

/// One billable call as assembled by the billing party.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ReconciledRecord {
    pub correlation_id: u64,
    pub call_id: u64,
    pub in_fields: CallRecord,
    pub handset_fields: Option<HandsetMetrics>,
    /// Billing annotations: the IN message's first, then the handset's.
    pub housekeeping: Vec<String>,
    pub billing_schedule_id: Option<ScheduleId>,
    pub provenance: Provenance,
}

impl ReconciledRecord {
    pub fn start_time_ms(&self) -> u64 {
        self.in_fields.start_time_ms
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MissingHandset {
    BillWithoutReconciliation,
    Reject,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MissingIn {
    /// Ask for the IN record once more; reject if the wait runs out again.
    RequestResend,
    Reject,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeoutPolicy {
    pub wait_limit_ms: u64,
    pub on_missing_handset: MissingHandset,
    pub on_missing_in: MissingIn,
}

impl Default for TimeoutPolicy {
    fn default() -> Self {
        TimeoutPolicy {
            wait_limit_ms: DEFAULT_WAIT_LIMIT_MS,
            on_missing_handset: MissingHandset::BillWithoutReconciliation,
            on_missing_in: MissingIn::RequestResend,
        }
    }
}

impl TimeoutPolicy {
    pub fn validate(&self) -> Result<(), ReconcileError> {
        if self.wait_limit_ms == 0 {
            return Err(ReconcileError::InvalidPolicy("wait_limit_ms must be positive"));
        }
        Ok(())
    }
}

/// Returns the frame's source tag.
pub fn classify_source(message: &MamoMessage) -> Source {
    message.source()
}

/// A message after [`add_housekeeping`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Annotated {
    pub message: MamoMessage,
    /// Line added to the housekeeping section.
    pub annotation: String,
    /// Text of the source's data section before and after the edit.
    pub data_before: SegmentText,
    pub data_after: SegmentText,
}

/// Annotates a message as received by the holder of `keys`.
///
/// IN data gets a line in front of its core line, handset data a line after
/// its core line, and the housekeeping section gets the annotation appended.
/// Every change goes through the envelope's authorization check.
pub fn add_housekeeping(
    message: &MamoMessage,
    received_ms: u64,
    keys: &Keyring,
    rng: &mut ChaCha8Rng,
) -> Result<Annotated, ReconcileError> {
    let source = match message.source() {
        Source::Handset => "handset",
        Source::BaseStationIN => "in",
        Source::Switch => "switch",
    };
    let stamp = format!("received_ms={received_ms};by={}", keys.holder());
    let annotation = format!("source={source};{stamp}");

    let (edited, data_before, data_after) = match message.source() {
        Source::Handset => {
            let mut after = None;
            let (m, before) = edit_section(message, HANDSET_SECTION, keys, rng, |t| {
                let proposed = SegmentText::new(format!("{}\n{stamp}", t.as_str()));
                after = Some(proposed.clone());
                proposed
            })?;
            (m, before.text, after.expect("proposal made"))
        }
        _ => {
            let mut after = None;
            let (m, before) = edit_section(message, NETWORK_SECTION, keys, rng, |t| {
                let proposed = SegmentText::new(format!("{stamp}\n{}", t.as_str()));
                after = Some(proposed.clone());
                proposed
            })?;
            (m, before.text, after.expect("proposal made"))
        }
    };
    let (edited, _) = edit_section(&edited, HOUSEKEEPING_SECTION, keys, rng, |t| {
        SegmentText::new(if t.as_str().is_empty() {
            annotation.clone()
        } else {
            format!("{}\n{annotation}", t.as_str())
        })
    })?;
    Ok(Annotated {
        message: edited,
        annotation,
        data_before,
        data_after,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Side {
    In(CallRecord),
    Handset(HandsetMetrics),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PendingEntry {
    /// The message as annotated on arrival.
    pub message: MamoMessage,
    pub arrival_ms: u64,
    pub annotation: String,
    side: Side,
    resends: u8,
}

impl PendingEntry {
    pub fn source(&self) -> Source {
        self.message.source()
    }
}

/// Messages waiting for their counterpart, at most one per correlation id
/// (a pair never waits: the second arrival completes it).
#[derive(Debug, Clone, Default)]
pub struct PendingLog {
    entries: HashMap<u64, PendingEntry>,
    by_age: BTreeSet<(u64, u64)>,
}

impl PendingLog {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, correlation_id: u64) -> Option<&PendingEntry> {
        self.entries.get(&correlation_id)
    }

    fn insert(&mut self, correlation_id: u64, entry: PendingEntry) {
        self.by_age.insert((entry.arrival_ms, correlation_id));
        self.entries.insert(correlation_id, entry);
    }

    fn remove(&mut self, correlation_id: u64) -> Option<PendingEntry> {
        let entry = self.entries.remove(&correlation_id)?;
        self.by_age.remove(&(entry.arrival_ms, correlation_id));
        Some(entry)
    }

    /// Oldest entry that arrived at or before `cutoff_ms`.
    fn pop_older_than(&mut self, cutoff_ms: u64) -> Option<(u64, PendingEntry)> {
        let &(arrival, corr) = self.by_age.first()?;
        if arrival > cutoff_ms {
            return None;
        }
        self.remove(corr).map(|e| (corr, e))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Ingested {
    Reconciled(Box<ReconciledRecord>),
    Logged,
    /// A message of this source was already seen for the correlation id; the
    /// first one is kept.
    Duplicate,
    /// Switch messages are not paired; they belong to the assurance store.
    ForAssurance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reject {
    pub correlation_id: u64,
    pub source: Source,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Expired {
    pub records: Vec<ReconciledRecord>,
    pub rejects: Vec<Reject>,
    /// Correlation ids whose IN record was asked for again.
    pub resend_requests: Vec<u64>,
}

/// Message counts for the conservation check.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    /// IN and handset messages accepted by `ingest`.
    pub ingested: u64,
    pub fully_reconciled: u64,
    pub billed_without_handset: u64,
    pub rejected: u64,
    pub duplicates: u64,
    pub for_assurance: u64,
    pub resend_requests: u64,
}

#[derive(Debug, Clone)]
pub struct Reconciler {
    keys: Keyring,
    policy: TimeoutPolicy,
    pending: PendingLog,
    /// (correlation id, source) pairs already taken in.
    seen: HashSet<(u64, Source)>,
    clock_ms: u64,
    counters: Counters,
    rng: ChaCha8Rng,
}

impl Reconciler {
    pub fn new(keys: Keyring, policy: TimeoutPolicy, seed: u64) -> Result<Self, ReconcileError> {
        policy.validate()?;
        Ok(Reconciler {
            keys,
            policy,
            pending: PendingLog::default(),
            seen: HashSet::new(),
            clock_ms: 0,
            counters: Counters::default(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn policy(&self) -> &TimeoutPolicy {
        &self.policy
    }

    pub fn pending(&self) -> &PendingLog {
        &self.pending
    }

    pub fn counters(&self) -> Counters {
        self.counters
    }

    /// Latest arrival time seen.
    pub fn clock_ms(&self) -> u64 {
        self.clock_ms
    }

    /// `ingested = 2 * paired + billed without handset + pending + rejected
    /// + duplicates`.
    pub fn is_conserved(&self) -> bool {
        let c = &self.counters;
        c.ingested
            == 2 * c.fully_reconciled
                + c.billed_without_handset
                + self.pending.len() as u64
                + c.rejected
                + c.duplicates
    }

    pub fn ingest(&mut self, delivered: &Delivered) -> Result<Ingested, ReconcileError> {
        let message = &delivered.message;
        let source = classify_source(message);
        if source == Source::Switch {
            self.counters.for_assurance += 1;
            return Ok(Ingested::ForAssurance);
        }
        self.clock_ms = self.clock_ms.max(delivered.arrival_ms);
        self.counters.ingested += 1;
        let corr = message.correlation_id();
        if !self.seen.insert((corr, source)) {
            self.counters.duplicates += 1;
            return Ok(Ingested::Duplicate);
        }

        let (side, edited, annotation) = self.take_in(message, delivered.arrival_ms)?;
        let counterpart = match self.pending.get(corr) {
            Some(e) if e.source() != source => self.pending.remove(corr),
            _ => None,
        };
        match counterpart {
            Some(other) => {
                let (in_side, handset_side) = if source == Source::BaseStationIN {
                    ((side, annotation), (other.side, other.annotation))
                } else {
                    ((other.side, other.annotation), (side, annotation))
                };
                let record = pair(corr, in_side, Some(handset_side));
                self.counters.fully_reconciled += 1;
                Ok(Ingested::Reconciled(Box::new(record)))
            }
            None => {
                self.pending.insert(
                    corr,
                    PendingEntry {
                        message: edited,
                        arrival_ms: delivered.arrival_ms,
                        annotation,
                        side,
                        resends: 0,
                    },
                );
                Ok(Ingested::Logged)
            }
        }
    }

    /// Annotates and opens one IN or handset message.
    fn take_in(&mut self, message: &MamoMessage, arrival_ms: u64) -> Result<(Side, MamoMessage, String), ReconcileError> {
        let corr = message.correlation_id();
        let a = add_housekeeping(message, arrival_ms, &self.keys, &mut self.rng)?;
        let side = match message.source() {
            Source::BaseStationIN => {
                let before = CallRecord::from_network_section(a.data_before.as_str())?;
                let after = CallRecord::from_network_section(a.data_after.as_str())?;
                if before != after {
                    return Err(ReconcileError::CoreAltered(corr));
                }
                if after.correlation_id != corr {
                    return Err(ReconcileError::CorrelationMismatch { frame: corr, section: after.correlation_id });
                }
                Side::In(after)
            }
            _ => {
                let before = HandsetMetrics::from_handset_section(a.data_before.as_str())?;
                let (section_corr, metrics) = HandsetMetrics::from_handset_section(a.data_after.as_str())?;
                if before != (section_corr, metrics) {
                    return Err(ReconcileError::CoreAltered(corr));
                }
                if section_corr != corr {
                    return Err(ReconcileError::CorrelationMismatch { frame: corr, section: section_corr });
                }
                Side::Handset(metrics)
            }
        };
        Ok((side, a.message, a.annotation))
    }

    /// Applies the timeout policy to every entry that has waited at least
    /// the wait limit by `now_ms`.
    pub fn expire(&mut self, now_ms: u64) -> Expired {
        self.clock_ms = self.clock_ms.max(now_ms);
        let mut out = Expired::default();
        let Some(cutoff) = now_ms.checked_sub(self.policy.wait_limit_ms) else {
            return out;
        };
        let mut requeue = Vec::new();
        while let Some((corr, mut entry)) = self.pending.pop_older_than(cutoff) {
            match (&entry.side, self.policy) {
                (Side::In(_), TimeoutPolicy { on_missing_handset: MissingHandset::BillWithoutReconciliation, .. }) => {
                    let Side::In(record) = entry.side else { unreachable!() };
                    out.records.push(pair(corr, (Side::In(record), entry.annotation), None));
                    self.counters.billed_without_handset += 1;
                }
                (Side::Handset(_), TimeoutPolicy { on_missing_in: MissingIn::RequestResend, .. }) if entry.resends == 0 => {
                    entry.resends = 1;
                    entry.arrival_ms = now_ms;
                    requeue.push((corr, entry));
                    out.resend_requests.push(corr);
                    self.counters.resend_requests += 1;
                }
                _ => {
                    out.rejects.push(Reject { correlation_id: corr, source: entry.source() });
                    self.counters.rejected += 1;
                }
            }
        }
        for (corr, entry) in requeue {
            self.pending.insert(corr, entry);
        }
        out
    }

    /// Expires repeatedly, one wait limit apart, until nothing is pending.
    pub fn drain(&mut self) -> Expired {
        let mut all = Expired::default();
        while !self.pending.is_empty() {
            let now = self.clock_ms + self.policy.wait_limit_ms;
            let e = self.expire(now);
            all.records.extend(e.records);
            all.rejects.extend(e.rejects);
            all.resend_requests.extend(e.resend_requests);
        }
        all
    }
}

fn pair(
    correlation_id: u64,
    (in_side, in_note): (Side, String),
    handset: Option<(Side, String)>,
) -> ReconciledRecord {
    let Side::In(in_fields) = in_side else {
        unreachable!("IN side holds a call record")
    };
    let mut housekeeping = vec![in_note];
    let handset_fields = handset.map(|(side, note)| {
        housekeeping.push(note);
        match side {
            Side::Handset(m) => m,
            Side::In(_) => unreachable!("handset side holds metrics"),
        }
    });
    ReconciledRecord {
        correlation_id,
        call_id: in_fields.call_id,
        in_fields,
        provenance: if handset_fields.is_some() {
            Provenance::FullyReconciled
        } else {
            Provenance::BilledWithoutHandset
        },
        handset_fields,
        housekeeping,
        billing_schedule_id: None,
    }
}

/// Billing-side schedules T'_i, mirroring the switch's windows.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleTable {
    windows: Vec<ScheduleWindow>,
}

impl ScheduleTable {
    pub fn new(mut windows: Vec<ScheduleWindow>) -> Self {
        windows.sort_by_key(|w| (w.start_ms, w.end_ms));
        ScheduleTable { windows }
    }

    pub fn windows(&self) -> &[ScheduleWindow] {
        &self.windows
    }

    pub fn covering(&self, t_ms: u64) -> Option<&ScheduleWindow> {
        let i = self.windows.partition_point(|w| w.end_ms <= t_ms);
        self.windows.get(i).filter(|w| w.contains(t_ms))
    }
}

pub fn tag_schedule(mut record: ReconciledRecord, table: &ScheduleTable) -> Result<ReconciledRecord, ReconcileError> {
    let start_ms = record.start_time_ms();
    let window = table.covering(start_ms).ok_or(ReconcileError::NoCoveringSchedule {
        call_id: record.call_id,
        start_ms,
    })?;
    record.billing_schedule_id = Some(window.id);
    Ok(record)
}
