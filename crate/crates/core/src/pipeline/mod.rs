//! End-to-end runs: generate → emit/seal → deliver → reconcile → assure →
//! report. Each stage is a function of the previous stage's output, and
//! each persists what the next one reads, so any stage can be replayed from
//! files.

pub mod archive;
mod config;
mod metrics;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::assurance::{
    contrast_parameters, generate_accounts, merge_archives, rate_call, revenue_report, Account,
    AssuranceError, AssuranceFile, BillingBatch, RevenueReport, DEFAULT_CONTRAST_FIELDS,
};
use crate::envelope::{EnvelopeError, Keyring, Source};
use crate::money::Money;
use crate::netsim::{
    deliver, generate_calls, subscriber_count, AdSwitch, CallWindow, ChannelConfig, Delivered,
    DeliveryLog, GroundTruthCall, MessageFactory, Outbound, ScheduleBatch, ScheduleWindow,
    SwitchError, TrafficTrace, DEFAULT_EPOCH_MS, DEFAULT_PADDING,
};
use crate::reconciler::{tag_schedule, Counters, Ingested, ReconcileError, Reconciler, Reject, ScheduleTable};

pub use archive::ArchiveError;
pub use config::{ConfigError, FieldProblem, RunConfig};
pub use metrics::{emit_metrics, fit_exponent, RunMetrics, METRICS_CSV_HEADER};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Archive(#[from] ArchiveError),
    #[error(transparent)]
    Envelope(#[from] EnvelopeError),
    #[error(transparent)]
    Switch(#[from] SwitchError),
    #[error(transparent)]
    Reconcile(#[from] ReconcileError),
    #[error(transparent)]
    Assurance(#[from] AssuranceError),
    #[error("cannot create {path}: {source}")]
    OutputDir {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Independent seeds for each random process of a run, all drawn from the
/// run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seeds {
    pub keys: u64,
    pub calls: u64,
    pub emit: u64,
    pub switch: u64,
    pub traffic: u64,
    pub channel: u64,
    pub accounts: u64,
    pub reconcile: u64,
}

impl Seeds {
    pub fn derive(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut next = || rng.next_u64();
        Seeds {
            keys: next(),
            calls: next(),
            emit: next(),
            switch: next(),
            traffic: next(),
            channel: next(),
            accounts: next(),
            reconcile: next(),
        }
    }
}

pub fn run_id(seed: u64) -> u32 {
    (seed ^ (seed >> 32)) as u32
}

pub fn workflow_keys(config: &RunConfig) -> Keyring {
    Keyring::generate_workflow(&mut ChaCha8Rng::seed_from_u64(Seeds::derive(config.seed).keys))
}

pub fn call_window(config: &RunConfig) -> CallWindow {
    CallWindow {
        start_ms: DEFAULT_EPOCH_MS,
        length_ms: config.window_ms(),
    }
}

/// Output of the simulated network: what really happened, what the switch
/// shipped, and what reached billing.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub calls: Vec<GroundTruthCall>,
    /// Switch schedules as opened by billing, in shipping order.
    pub switch_batches: Vec<ScheduleBatch>,
    pub delivery: DeliveryLog,
    pub accounts: Vec<Account>,
}

impl Simulation {
    pub fn windows(&self) -> Vec<ScheduleWindow> {
        self.switch_batches.iter().map(|b| b.window).collect()
    }

    /// Σ rate_call over every call that happened.
    pub fn ground_truth_total(&self, config: &RunConfig) -> Money {
        let factory = MessageFactory::new(Keyring::new(""), config.tariff, 0, 0);
        self.calls.iter().map(|c| rate_call(&factory.record_for(c), &config.tariff)).sum()
    }
}

/// Generates calls, runs them through the switch and seals and delivers
/// the handset and IN messages.
pub fn simulate(config: &RunConfig) -> Result<Simulation, PipelineError> {
    config.validate()?;
    let seeds = Seeds::derive(config.seed);
    let keys = workflow_keys(config);
    let window = call_window(config);
    let calls = generate_calls(config.call_count, &window, seeds.calls);

    let sealer = MessageFactory::new(keys.clone(), config.tariff, DEFAULT_PADDING, seeds.switch);
    let mut switch = AdSwitch::new(config.switch(), run_id(config.seed), sealer, window.start_ms)?;
    let mut traffic = TrafficTrace::random(seeds.traffic);
    let mut shipped = Vec::new();
    for call in &calls {
        switch.ingest(call)?;
        shipped.extend(switch.probe(traffic.next_level()));
    }
    switch.flush(window.end_ms());
    shipped.extend(switch.drain());
    let switch_batches = shipped
        .iter()
        .map(|b| b.open(&keys))
        .collect::<Result<Vec<_>, _>>()?;

    let mut factory = MessageFactory::new(keys, config.tariff, DEFAULT_PADDING, seeds.emit);
    let mut outbound = Vec::with_capacity(2 * calls.len());
    for call in &calls {
        let sent_at_ms = call.end_time_ms();
        outbound.push(Outbound { sent_at_ms, message: factory.in_emit(call)? });
        outbound.push(Outbound { sent_at_ms, message: factory.handset_emit(call)? });
    }
    outbound.sort_by_key(|o| (o.sent_at_ms, o.message.correlation_id(), o.message.source()));
    let channel = ChannelConfig {
        seed: config.channel.seed ^ seeds.channel,
        ..config.channel
    };
    let delivery = deliver(outbound, &channel);

    let accounts = generate_accounts(subscriber_count(config.call_count), &window, seeds.accounts);
    Ok(Simulation {
        calls,
        switch_batches,
        delivery,
        accounts,
    })
}

#[derive(Debug, Clone)]
pub struct Reconciliation {
    /// One batch per schedule window, in window order; empty ones included.
    pub batches: Vec<BillingBatch>,
    pub rejects: Vec<Reject>,
    pub resend_requests: Vec<u64>,
    pub counters: Counters,
    /// Wall time of the ingest loop alone.
    pub ingest_time_ns: u128,
    pub delivered: usize,
}

impl Reconciliation {
    pub fn record_count(&self) -> usize {
        self.batches.iter().map(|b| b.records.len()).sum()
    }
}

/// Pairs the delivered messages and tags the records with the billing
/// schedules mirroring `windows`.
pub fn reconcile(
    config: &RunConfig,
    windows: &[ScheduleWindow],
    delivered: &[Delivered],
) -> Result<Reconciliation, PipelineError> {
    let keys = workflow_keys(config);
    let mut reconciler = Reconciler::new(keys, config.timeout_policy, Seeds::derive(config.seed).reconcile)?;
    let mut records = Vec::with_capacity(delivered.len() / 2);
    let mut rejects = Vec::new();
    let mut resend_requests = Vec::new();

    let started = Instant::now();
    for d in delivered {
        if let Ingested::Reconciled(r) = reconciler.ingest(d)? {
            records.push(*r);
        }
        let expired = reconciler.expire(reconciler.clock_ms());
        records.extend(expired.records);
        rejects.extend(expired.rejects);
        resend_requests.extend(expired.resend_requests);
    }
    let ingest_time_ns = started.elapsed().as_nanos();

    let tail = reconciler.drain();
    records.extend(tail.records);
    rejects.extend(tail.rejects);
    resend_requests.extend(tail.resend_requests);
    debug_assert!(reconciler.is_conserved());

    let table = ScheduleTable::new(windows.to_vec());
    let mut by_window: BTreeMap<_, Vec<_>> = table.windows().iter().map(|w| (w.id, Vec::new())).collect();
    for record in records {
        let tagged = tag_schedule(record, &table)?;
        let id = tagged.billing_schedule_id.expect("tagged above");
        by_window.get_mut(&id).expect("window from table").push(tagged);
    }
    let batches = table
        .windows()
        .iter()
        .map(|w| {
            let mut records = by_window.remove(&w.id).unwrap_or_default();
            records.sort_by_key(|r| r.call_id);
            BillingBatch { window: *w, records }
        })
        .collect();
    Ok(Reconciliation {
        batches,
        rejects,
        resend_requests,
        counters: reconciler.counters(),
        ingest_time_ns,
        delivered: delivered.len(),
    })
}

/// Merges each switch schedule with its billing counterpart and contrasts
/// the default parameters. Output follows `switch` order.
pub fn assure(switch: &[ScheduleBatch], billing: &[BillingBatch]) -> Result<Vec<AssuranceFile>, PipelineError> {
    let by_id: BTreeMap<_, _> = billing.iter().map(|b| (b.window.id, b)).collect();
    switch
        .iter()
        .map(|s| {
            let empty;
            let b = match by_id.get(&s.window.id) {
                Some(b) => *b,
                None => {
                    empty = BillingBatch { window: s.window, records: Vec::new() };
                    &empty
                }
            };
            let file = merge_archives(s, b)?;
            Ok(contrast_parameters(file, DEFAULT_CONTRAST_FIELDS)?)
        })
        .collect()
}

/// Everything a full run produced.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub simulation: Simulation,
    pub reconciliation: Reconciliation,
    pub assurance: Vec<AssuranceFile>,
    pub report: RevenueReport,
    pub metrics: RunMetrics,
    /// Every file written, in writing order.
    pub files: Vec<PathBuf>,
}

fn ensure_dir(dir: &Path) -> Result<(), PipelineError> {
    fs::create_dir_all(dir).map_err(|source| PipelineError::OutputDir {
        path: dir.to_owned(),
        source,
    })
}

/// Writes the simulation stage's files: switch archives, schedule windows,
/// the delivered stream, the drop log and the accounts.
pub fn persist_simulation(dir: &Path, sim: &Simulation) -> Result<Vec<PathBuf>, PipelineError> {
    ensure_dir(dir)?;
    let mut files = Vec::new();
    let mut windows = sim.windows();
    windows.sort_by_key(|w| w.id);
    let schedules = dir.join(archive::SCHEDULES_FILE);
    archive::write_json(&schedules, &windows)?;
    files.push(schedules);
    let mut batches: Vec<_> = sim.switch_batches.iter().collect();
    batches.sort_by_key(|b| b.window.id);
    for b in batches {
        files.push(archive::write_switch_batch(dir, b)?);
    }
    files.push(archive::write_delivery(dir, &sim.delivery.delivered)?);
    files.push(archive::write_drops(dir, &sim.delivery.dropped)?);
    let accounts = dir.join(archive::ACCOUNTS_FILE);
    archive::write_json(&accounts, &sim.accounts)?;
    files.push(accounts);
    Ok(files)
}

pub fn persist_reconciliation(dir: &Path, rec: &Reconciliation) -> Result<Vec<PathBuf>, PipelineError> {
    ensure_dir(dir)?;
    rec.batches
        .iter()
        .map(|b| Ok(archive::write_billing_batch(dir, b)?))
        .collect()
}

pub fn persist_assurance(dir: &Path, files: &[AssuranceFile]) -> Result<Vec<PathBuf>, PipelineError> {
    ensure_dir(dir)?;
    files
        .iter()
        .map(|f| Ok(archive::write_assurance_file(dir, f)?))
        .collect()
}

pub fn read_windows(dir: &Path) -> Result<Vec<ScheduleWindow>, PipelineError> {
    Ok(archive::read_json(&dir.join(archive::SCHEDULES_FILE))?)
}

/// Runs every stage in memory and writes all archives under
/// `config.output_dir`.
pub fn run_pipeline(config: &RunConfig) -> Result<RunOutput, PipelineError> {
    let simulation = simulate(config)?;
    let reconciliation = reconcile(config, &simulation.windows(), &simulation.delivery.delivered)?;
    let assurance = assure(&simulation.switch_batches, &reconciliation.batches)?;
    let report = revenue_report(&assurance, &config.tariff, &simulation.accounts);

    let dir = &config.output_dir;
    let mut files = persist_simulation(dir, &simulation)?;
    files.extend(persist_reconciliation(dir, &reconciliation)?);
    files.extend(persist_assurance(dir, &assurance)?);
    files.extend(archive::write_report(dir, &report)?);

    let metrics = RunMetrics::collect(&simulation, &reconciliation, &assurance, &report);
    Ok(RunOutput {
        simulation,
        reconciliation,
        assurance,
        report,
        metrics,
        files,
    })
}

/// Number of IN messages the channel dropped.
pub fn dropped_in(sim: &Simulation) -> usize {
    sim.delivery.dropped_from(Source::BaseStationIN)
}
