use std::collections::HashSet;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::money::Money;

use super::record::HandsetMetrics;

pub const DEFAULT_EPOCH_MS: u64 = 1_300_000_000_000;
pub const MAX_CALL_SECONDS: u32 = 600;

/// Interval over which calls start, in milliseconds since the epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallWindow {
    pub start_ms: u64,
    pub length_ms: u64,
}

impl CallWindow {
    pub fn seconds(length_s: u64) -> Self {
        CallWindow {
            start_ms: DEFAULT_EPOCH_MS,
            length_ms: length_s * 1000,
        }
    }

    pub fn end_ms(&self) -> u64 {
        self.start_ms + self.length_ms
    }

    pub fn contains(&self, t_ms: u64) -> bool {
        (self.start_ms..self.end_ms()).contains(&t_ms)
    }
}

/// One call as it really happened.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GroundTruthCall {
    pub call_id: u64,
    pub correlation_id: u64,
    pub caller: String,
    pub callee: String,
    pub start_time_ms: u64,
    pub duration_s: u32,
    pub signal_strength_dbm: i32,
    pub snr_db: i32,
    pub account_before: Money,
}

impl GroundTruthCall {
    pub fn end_time_ms(&self) -> u64 {
        self.start_time_ms + u64::from(self.duration_s) * 1000
    }

    pub fn handset_metrics(&self) -> HandsetMetrics {
        HandsetMetrics {
            signal_strength_dbm: self.signal_strength_dbm,
            snr_db: self.snr_db,
        }
    }
}

fn subscriber(index: usize) -> String {
    format!("98300{index:05}")
}

/// Number of subscribers behind `count` calls.
pub fn subscriber_count(count: usize) -> usize {
    (count / 10).clamp(1, 99_999)
}

pub fn subscriber_number(index: usize) -> String {
    subscriber(index)
}

/// Generates `count` calls with distinct start times drawn uniformly from
/// `window`, numbered by start time.
///
/// Panics if the window has fewer milliseconds than `count`.
pub fn generate_calls(count: usize, window: &CallWindow, seed: u64) -> Vec<GroundTruthCall> {
    assert!(
        count as u64 <= window.length_ms,
        "window of {} ms cannot hold {count} distinct start times",
        window.length_ms
    );
    if count == 0 {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut offsets: Vec<u64> = index::sample(&mut rng, window.length_ms as usize, count)
        .into_iter()
        .map(|i| i as u64)
        .collect();
    offsets.sort_unstable();

    let subscribers = subscriber_count(count);
    let mut seen = HashSet::with_capacity(count);
    offsets
        .into_iter()
        .enumerate()
        .map(|(i, offset)| {
            let correlation_id = loop {
                let id: u64 = rng.gen();
                if id != 0 && seen.insert(id) {
                    break id;
                }
            };
            let caller = rng.gen_range(0..subscribers);
            let callee = (caller + rng.gen_range(1..subscribers.max(2))) % subscribers.max(2);
            GroundTruthCall {
                call_id: i as u64 + 1,
                correlation_id,
                caller: subscriber(caller),
                callee: subscriber(callee),
                start_time_ms: window.start_ms + offset,
                duration_s: rng.gen_range(0..=MAX_CALL_SECONDS),
                signal_strength_dbm: rng.gen_range(-110..=-50),
                snr_db: rng.gen_range(0..=30),
                account_before: Money::from_minor(rng.gen_range(10_000..=200_000)),
            }
        })
        .collect()
}
