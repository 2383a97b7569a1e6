use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::assurance::Tariff;
use crate::authz::SegmentText;
use crate::envelope::{
    compose_message, handset_policy, housekeeping_policy, network_policy, owners, seal_segment,
    EnvelopeError, Keyring, MamoMessage, OwnerKey, Source,
};

use super::calls::GroundTruthCall;
use super::record::CallRecord;

pub const DEFAULT_PADDING: u16 = 8;

/// Builds and seals the messages each source emits for a call.
///
/// Every message carries all three sections; sections a source has nothing
/// to say in are sealed empty. All sections of a message are sealed by the
/// emitting source's key.
#[derive(Debug, Clone)]
pub struct MessageFactory {
    keys: Keyring,
    tariff: Tariff,
    padding_len: u16,
    rng: ChaCha8Rng,
}

impl MessageFactory {
    pub fn new(keys: Keyring, tariff: Tariff, padding_len: u16, seed: u64) -> Self {
        MessageFactory {
            keys,
            tariff,
            padding_len,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn tariff(&self) -> &Tariff {
        &self.tariff
    }

    fn seal_message(
        &mut self,
        source: Source,
        owner: &str,
        correlation_id: u64,
        network: String,
        handset: String,
    ) -> Result<MamoMessage, EnvelopeError> {
        let key: OwnerKey = self.keys.get(owner)?.clone();
        let sections = vec![
            seal_segment(&SegmentText::new(network), network_policy(), &key, self.padding_len, &mut self.rng)?,
            seal_segment(&SegmentText::new(handset), handset_policy(), &key, self.padding_len, &mut self.rng)?,
            seal_segment(&SegmentText::empty(), housekeeping_policy(), &key, self.padding_len, &mut self.rng)?,
        ];
        compose_message(correlation_id, source, sections)
    }

    pub fn handset_emit(&mut self, call: &GroundTruthCall) -> Result<MamoMessage, EnvelopeError> {
        let metrics = call.handset_metrics().to_line(call.correlation_id);
        self.seal_message(Source::Handset, owners::HANDSET, call.correlation_id, String::new(), metrics)
    }

    pub fn in_emit(&mut self, call: &GroundTruthCall) -> Result<MamoMessage, EnvelopeError> {
        let record = CallRecord::from_call(call, &self.tariff);
        self.seal_message(Source::BaseStationIN, owners::IN, call.correlation_id, record.to_line(), String::new())
    }

    /// The AD switch's sealed copy of a call record.
    pub fn switch_emit(&mut self, record: &CallRecord) -> Result<MamoMessage, EnvelopeError> {
        self.seal_message(Source::Switch, owners::SWITCH, record.correlation_id, record.to_line(), String::new())
    }

    pub fn record_for(&self, call: &GroundTruthCall) -> CallRecord {
        CallRecord::from_call(call, &self.tariff)
    }
}
