//! Deterministic simulation of the call workflow: ground-truth calls, the
//! messages handsets and the IN emit for them, the channel carrying those
//! messages to billing, and the switch's lossless archive.

mod calls;
mod channel;
mod emit;
mod record;
mod switch;

pub use calls::{
    generate_calls, subscriber_count, subscriber_number, CallWindow, GroundTruthCall,
    DEFAULT_EPOCH_MS, MAX_CALL_SECONDS,
};
pub use channel::{deliver, ChannelConfig, DelayRange, Delivered, DeliveryLog, Dropped, Outbound};
pub use emit::{MessageFactory, DEFAULT_PADDING};
pub use record::{annotation_lines, CallRecord, HandsetMetrics, RecordFormatError};
pub use switch::{
    AdSwitch, ScheduleBatch, ScheduleId, ScheduleWindow, SealedScheduleBatch, SwitchConfig,
    SwitchError, TrafficTrace, DEFAULT_BUFFER_X, DEFAULT_LOW_TRAFFIC_THRESHOLD,
    DEFAULT_RESTORATIONS_N,
};
