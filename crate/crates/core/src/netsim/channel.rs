use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::envelope::{MamoMessage, Source};

/// Uniform delay bounds in milliseconds (inclusive).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DelayRange {
    pub min_ms: u64,
    pub max_ms: u64,
}

impl Default for DelayRange {
    fn default() -> Self {
        DelayRange {
            min_ms: 5,
            max_ms: 250,
        }
    }
}

/// Lossy, reordering path from handsets and the IN to the billing party.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub in_drop_probability: f64,
    pub handset_loss_probability: f64,
    /// Maximum number of positions a message may move from emission order.
    pub reorder_window: usize,
    pub delay: DelayRange,
    pub seed: u64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            in_drop_probability: 0.0,
            handset_loss_probability: 0.0,
            reorder_window: 0,
            delay: DelayRange::default(),
            seed: 0,
        }
    }
}

impl ChannelConfig {
    pub fn lossless(seed: u64) -> Self {
        ChannelConfig {
            seed,
            ..Self::default()
        }
    }

    /// Field name and complaint for every invalid setting.
    pub fn problems(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        for (field, p) in [
            ("in_drop_probability", self.in_drop_probability),
            ("handset_loss_probability", self.handset_loss_probability),
        ] {
            if !(0.0..=1.0).contains(&p) {
                out.push((field, format!("probability {p} outside [0, 1]")));
            }
        }
        if self.delay.min_ms > self.delay.max_ms {
            out.push((
                "delay",
                format!("min_ms {} exceeds max_ms {}", self.delay.min_ms, self.delay.max_ms),
            ));
        }
        out
    }
}

/// A message leaving its source at `sent_at_ms`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outbound {
    pub sent_at_ms: u64,
    pub message: MamoMessage,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Delivered {
    pub arrival_ms: u64,
    pub message: MamoMessage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dropped {
    pub correlation_id: u64,
    pub source: Source,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DeliveryLog {
    /// In arrival order; arrival times never decrease.
    pub delivered: Vec<Delivered>,
    pub dropped: Vec<Dropped>,
}

impl DeliveryLog {
    pub fn dropped_from(&self, source: Source) -> usize {
        self.dropped.iter().filter(|d| d.source == source).count()
    }
}

/// Pushes `messages` through the channel.
///
/// IN and handset messages are dropped independently with their configured
/// probabilities; switch messages are never dropped. Survivors move at most
/// `reorder_window` places from their input position and arrive after a
/// uniform delay (held back further when an earlier-arriving message was
/// delayed more).
pub fn deliver(messages: Vec<Outbound>, channel: &ChannelConfig) -> DeliveryLog {
    let mut rng = ChaCha8Rng::seed_from_u64(channel.seed);
    let mut log = DeliveryLog::default();
    let mut survivors: Vec<(f64, u64, MamoMessage)> = Vec::with_capacity(messages.len());

    for (i, out) in messages.into_iter().enumerate() {
        let loss = match out.message.source() {
            Source::BaseStationIN => channel.in_drop_probability,
            Source::Handset => channel.handset_loss_probability,
            Source::Switch => 0.0,
        };
        if loss > 0.0 && rng.gen_bool(loss) {
            log.dropped.push(Dropped {
                correlation_id: out.message.correlation_id(),
                source: out.message.source(),
            });
            continue;
        }
        let jitter = if channel.reorder_window > 0 {
            rng.gen_range(0.0..=channel.reorder_window as f64)
        } else {
            0.0
        };
        let delay = rng.gen_range(channel.delay.min_ms..=channel.delay.max_ms);
        survivors.push((i as f64 + jitter, out.sent_at_ms + delay, out.message));
    }

    survivors.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut clock = 0u64;
    log.delivered = survivors
        .into_iter()
        .map(|(_, due, message)| {
            clock = clock.max(due);
            Delivered {
                arrival_ms: clock,
                message,
            }
        })
        .collect();
    log
}
