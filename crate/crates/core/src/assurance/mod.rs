//! Switch-versus-billing comparison and the revenue it recovers.
//!
//! Each closed switch schedule T_i is merged by call id with the billing
//! records tagged T'_i for the same window. Count, id and parameter
//! discrepancies are marked in an [`AssuranceFile`]; the files then feed a
//! [`RevenueReport`] that bills from the switch wherever the two disagree.

mod account;
mod merge;
mod rating;
mod report;

use thiserror::Error;

use crate::netsim::{ScheduleId, ScheduleWindow};
use crate::money::Money;

pub use account::{adjust_balance, generate_accounts, Account, Recharge};
pub use merge::{
    contrast_parameters, merge_archives, sort_archive, AssuranceFile, BillingBatch, CountMark,
    FieldValue, MergedEntry, ParameterMark, Presence, UnmatchedMark, CONTRASTABLE_FIELDS,
    DEFAULT_CONTRAST_FIELDS,
};
pub use rating::{rate_call, Rounding, Tariff};
pub use report::{revenue_report, RevenueReport, REPORT_CSV_HEADER};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AssuranceError {
    #[error("tariff fees must not be negative")]
    InvalidTariff,
    #[error("switch schedule {switch} covers {switch_window:?}, billing schedule {billing} covers {billing_window:?}")]
    ScheduleMismatch {
        switch: ScheduleId,
        billing: ScheduleId,
        switch_window: (u64, u64),
        billing_window: (u64, u64),
    },
    #[error("call id {0} appears twice on one side")]
    DuplicateCallId(u64),
    #[error("unknown record field {0:?}")]
    UnknownField(String),
    #[error("charge {charge} would take the balance of {subscriber} from {balance} below {floor}")]
    InsufficientBalance {
        subscriber: String,
        balance: Money,
        charge: Money,
        floor: Money,
    },
    #[error("charges must not be negative, got {0}")]
    NegativeCharge(Money),
}

impl AssuranceError {
    pub(crate) fn mismatch(switch: &ScheduleWindow, billing: &ScheduleWindow) -> Self {
        AssuranceError::ScheduleMismatch {
            switch: switch.id,
            billing: billing.id,
            switch_window: (switch.start_ms, switch.end_ms),
            billing_window: (billing.start_ms, billing.end_ms),
        }
    }
}
