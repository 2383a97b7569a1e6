//! The associated device (AD) on the switch.
//!
//! Every call the switch routes is sealed and put into a volatile buffer.
//! Each time the buffer holds `buffer_x` records it is restored into the
//! current schedule in non-volatile storage; after `restorations_n`
//! restorations the schedule closes and gets its own window. Completed
//! schedules wait until a probe sees low traffic, then ship to billing.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::envelope::{EnvelopeError, Keyring, MamoMessage, Source, NETWORK_SECTION};

use super::calls::GroundTruthCall;
use super::emit::MessageFactory;
use super::record::{CallRecord, RecordFormatError};

pub const DEFAULT_BUFFER_X: usize = 100;
pub const DEFAULT_RESTORATIONS_N: usize = 10;
pub const DEFAULT_LOW_TRAFFIC_THRESHOLD: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SwitchError {
    #[error("call starting at {start_ms} ingested after one starting at {previous_ms}")]
    OutOfOrder { start_ms: u64, previous_ms: u64 },
    #[error(transparent)]
    Envelope(#[from] EnvelopeError),
    #[error(transparent)]
    Record(#[from] RecordFormatError),
    #[error("batch {0} contains a message that did not come from the switch")]
    ForeignMessage(ScheduleId),
    #[error("batch {0} is not ordered by call id")]
    Unordered(ScheduleId),
    #[error("batch {0} holds a record outside its window")]
    OutsideWindow(ScheduleId),
    #[error("invalid switch configuration: {0}")]
    InvalidConfig(&'static str),
}

/// Schedule number: a run prefix and a counter that increases within a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct ScheduleId {
    pub run: u32,
    pub seq: u32,
}

impl fmt::Display for ScheduleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:08x}-{:06}", self.run, self.seq)
    }
}

impl From<ScheduleId> for String {
    fn from(id: ScheduleId) -> String {
        id.to_string()
    }
}

impl TryFrom<String> for ScheduleId {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl FromStr for ScheduleId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (run, seq) = s.split_once('-').ok_or_else(|| format!("bad schedule id {s:?}"))?;
        Ok(ScheduleId {
            run: u32::from_str_radix(run, 16).map_err(|e| format!("bad schedule id {s:?}: {e}"))?,
            seq: seq.parse().map_err(|e| format!("bad schedule id {s:?}: {e}"))?,
        })
    }
}

/// Half-open time window `[start_ms, end_ms)` of one schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScheduleWindow {
    pub id: ScheduleId,
    pub start_ms: u64,
    pub end_ms: u64,
}

impl ScheduleWindow {
    pub fn contains(&self, t_ms: u64) -> bool {
        self.start_ms <= t_ms && t_ms < self.end_ms
    }

    pub fn same_span(&self, other: &ScheduleWindow) -> bool {
        self.start_ms == other.start_ms && self.end_ms == other.end_ms
    }
}

/// One closed schedule's records, ascending by call id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleBatch {
    pub window: ScheduleWindow,
    pub records: Vec<CallRecord>,
}

impl ScheduleBatch {
    pub fn schedule_id(&self) -> ScheduleId {
        self.window.id
    }

    pub fn check(&self) -> Result<(), SwitchError> {
        let id = self.window.id;
        if !self.records.windows(2).all(|p| p[0].call_id < p[1].call_id) {
            return Err(SwitchError::Unordered(id));
        }
        if !self.records.iter().all(|r| self.window.contains(r.start_time_ms)) {
            return Err(SwitchError::OutsideWindow(id));
        }
        Ok(())
    }
}

/// A schedule as shipped: each record still sealed in a switch message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SealedScheduleBatch {
    pub window: ScheduleWindow,
    pub messages: Vec<MamoMessage>,
}

impl SealedScheduleBatch {
    pub fn schedule_id(&self) -> ScheduleId {
        self.window.id
    }

    /// Opens every record and checks ordering and window containment.
    pub fn open(&self, keys: &Keyring) -> Result<ScheduleBatch, SwitchError> {
        let records = self
            .messages
            .iter()
            .map(|m| {
                if m.source() != Source::Switch {
                    return Err(SwitchError::ForeignMessage(self.window.id));
                }
                let opened = m.open_section(NETWORK_SECTION, keys)?;
                Ok(CallRecord::from_network_section(opened.text.as_str())?)
            })
            .collect::<Result<Vec<_>, SwitchError>>()?;
        let batch = ScheduleBatch {
            window: self.window,
            records,
        };
        batch.check()?;
        Ok(batch)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchConfig {
    /// Records per restoration.
    pub buffer_x: usize,
    /// Restorations per schedule.
    pub restorations_n: usize,
    /// Probes below this normalized traffic level ship a schedule.
    pub low_traffic_threshold: f64,
}

impl Default for SwitchConfig {
    fn default() -> Self {
        SwitchConfig {
            buffer_x: DEFAULT_BUFFER_X,
            restorations_n: DEFAULT_RESTORATIONS_N,
            low_traffic_threshold: DEFAULT_LOW_TRAFFIC_THRESHOLD,
        }
    }
}

impl SwitchConfig {
    pub fn validate(&self) -> Result<(), SwitchError> {
        if self.buffer_x == 0 {
            return Err(SwitchError::InvalidConfig("buffer_x must be at least 1"));
        }
        if self.restorations_n == 0 {
            return Err(SwitchError::InvalidConfig("restorations_n must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.low_traffic_threshold) {
            return Err(SwitchError::InvalidConfig("low_traffic_threshold must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Stored {
    record: CallRecord,
    message: MamoMessage,
}

#[derive(Debug, Clone)]
struct OpenSchedule {
    start_ms: u64,
    entries: Vec<Stored>,
    restorations: usize,
}

#[derive(Debug, Clone)]
pub struct AdSwitch {
    config: SwitchConfig,
    run_id: u32,
    sealer: MessageFactory,
    buffer: Vec<Stored>,
    open: OpenSchedule,
    completed: VecDeque<SealedScheduleBatch>,
    windows: Vec<ScheduleWindow>,
    sent: BTreeSet<ScheduleId>,
    shipped_records: usize,
    next_seq: u32,
    last_start_ms: Option<u64>,
    ingested: usize,
}

impl AdSwitch {
    pub fn new(
        config: SwitchConfig,
        run_id: u32,
        sealer: MessageFactory,
        epoch_ms: u64,
    ) -> Result<Self, SwitchError> {
        config.validate()?;
        Ok(AdSwitch {
            config,
            run_id,
            sealer,
            buffer: Vec::with_capacity(config.buffer_x),
            open: OpenSchedule {
                start_ms: epoch_ms,
                entries: Vec::new(),
                restorations: 0,
            },
            completed: VecDeque::new(),
            windows: Vec::new(),
            sent: BTreeSet::new(),
            shipped_records: 0,
            next_seq: 1,
            last_start_ms: None,
            ingested: 0,
        })
    }

    /// Seals and buffers one call. Calls must arrive in strictly increasing
    /// start-time order.
    pub fn ingest(&mut self, call: &GroundTruthCall) -> Result<(), SwitchError> {
        if let Some(previous_ms) = self.last_start_ms {
            if call.start_time_ms <= previous_ms {
                return Err(SwitchError::OutOfOrder {
                    start_ms: call.start_time_ms,
                    previous_ms,
                });
            }
        }
        if call.start_time_ms < self.open.start_ms {
            return Err(SwitchError::OutOfOrder {
                start_ms: call.start_time_ms,
                previous_ms: self.open.start_ms,
            });
        }
        let record = self.sealer.record_for(call);
        let message = self.sealer.switch_emit(&record)?;
        self.buffer.push(Stored { record, message });
        self.last_start_ms = Some(call.start_time_ms);
        self.ingested += 1;

        if self.buffer.len() >= self.config.buffer_x {
            self.restore();
            if self.open.restorations >= self.config.restorations_n {
                self.close_schedule(None);
            }
        }
        Ok(())
    }

    fn restore(&mut self) {
        self.open.entries.append(&mut self.buffer);
        self.open.restorations += 1;
    }

    fn close_schedule(&mut self, min_end_ms: Option<u64>) {
        let mut entries = std::mem::take(&mut self.open.entries);
        entries.sort_by_key(|e| e.record.call_id);
        let last = entries.iter().map(|e| e.record.start_time_ms).max();
        let end_ms = match (last, min_end_ms) {
            (Some(t), Some(m)) => (t + 1).max(m),
            (Some(t), None) => t + 1,
            (None, Some(m)) => m.max(self.open.start_ms),
            (None, None) => self.open.start_ms,
        };
        let window = ScheduleWindow {
            id: ScheduleId {
                run: self.run_id,
                seq: self.next_seq,
            },
            start_ms: self.open.start_ms,
            end_ms,
        };
        self.next_seq += 1;
        self.windows.push(window);
        self.completed.push_back(SealedScheduleBatch {
            window,
            messages: entries.into_iter().map(|e| e.message).collect(),
        });
        self.open = OpenSchedule {
            start_ms: end_ms,
            entries: Vec::new(),
            restorations: 0,
        };
    }

    /// Restores whatever is buffered and closes the current schedule if it
    /// holds anything; its window extends to at least `end_ms`.
    pub fn flush(&mut self, end_ms: u64) {
        if !self.buffer.is_empty() {
            self.restore();
        }
        if !self.open.entries.is_empty() {
            self.close_schedule(Some(end_ms));
        }
    }

    /// Ships the oldest completed schedule if `traffic_level` is below the
    /// low-traffic threshold. Each schedule ships at most once.
    pub fn probe(&mut self, traffic_level: f64) -> Option<SealedScheduleBatch> {
        if traffic_level >= self.config.low_traffic_threshold {
            return None;
        }
        let batch = self.completed.pop_front()?;
        let fresh = self.sent.insert(batch.window.id);
        debug_assert!(fresh, "schedule {} shipped twice", batch.window.id);
        self.shipped_records += batch.messages.len();
        Some(batch)
    }

    /// Ships every completed schedule regardless of traffic, as when the
    /// network goes quiet at the end of a run.
    pub fn drain(&mut self) -> Vec<SealedScheduleBatch> {
        let mut out = Vec::new();
        while let Some(b) = self.probe(f64::NEG_INFINITY) {
            out.push(b);
        }
        out
    }

    pub fn config(&self) -> &SwitchConfig {
        &self.config
    }

    pub fn ingested(&self) -> usize {
        self.ingested
    }

    pub fn buffered(&self) -> usize {
        self.buffer.len()
    }

    /// Records in non-volatile storage, shipped or not.
    pub fn restored(&self) -> usize {
        self.open.entries.len()
            + self.completed.iter().map(|b| b.messages.len()).sum::<usize>()
            + self.shipped_records
    }

    pub fn pending_schedules(&self) -> usize {
        self.completed.len()
    }

    pub fn shipped(&self) -> &BTreeSet<ScheduleId> {
        &self.sent
    }

    /// Windows of every schedule closed so far, in closing order.
    pub fn windows(&self) -> &[ScheduleWindow] {
        &self.windows
    }
}

/// Normalized network load observed by successive probes.
#[derive(Debug, Clone)]
pub enum TrafficTrace {
    /// Levels replayed in order, cycling.
    Scripted { levels: Vec<f64>, next: usize },
    Random(ChaCha8Rng),
}

impl TrafficTrace {
    pub fn scripted(levels: Vec<f64>) -> Self {
        TrafficTrace::Scripted { levels, next: 0 }
    }

    pub fn random(seed: u64) -> Self {
        TrafficTrace::Random(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn next_level(&mut self) -> f64 {
        match self {
            TrafficTrace::Scripted { levels, next } => {
                if levels.is_empty() {
                    return 0.0;
                }
                let level = levels[*next % levels.len()];
                *next += 1;
                level
            }
            TrafficTrace::Random(rng) => rng.gen(),
        }
    }
}
