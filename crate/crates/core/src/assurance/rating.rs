use serde::{Deserialize, Serialize};

use super::AssuranceError;
use crate::money::Money;
use crate::netsim::CallRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Rounding {
    PerSecond,
    /// Duration rounded up to whole minutes before rating.
    PerMinuteCeil,
}

/// Flat setup fee plus a linear per-second rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tariff {
    pub setup_fee: Money,
    pub rate_per_second: Money,
    pub rounding: Rounding,
}

impl Tariff {
    pub fn new(setup_fee: Money, rate_per_second: Money, rounding: Rounding) -> Result<Self, AssuranceError> {
        let t = Tariff {
            setup_fee,
            rate_per_second,
            rounding,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), AssuranceError> {
        if self.setup_fee.is_negative() || self.rate_per_second.is_negative() {
            return Err(AssuranceError::InvalidTariff);
        }
        Ok(())
    }

    pub fn billable_seconds(&self, duration_s: u32) -> i64 {
        let d = i64::from(duration_s);
        match self.rounding {
            Rounding::PerSecond => d,
            Rounding::PerMinuteCeil => (d + 59) / 60 * 60,
        }
    }
}

impl Default for Tariff {
    fn default() -> Self {
        Tariff {
            setup_fee: Money::from_minor(100),
            rate_per_second: Money::from_minor(2),
            rounding: Rounding::PerSecond,
        }
    }
}

pub fn rate_call(record: &CallRecord, tariff: &Tariff) -> Money {
    tariff.setup_fee + tariff.rate_per_second * tariff.billable_seconds(record.charged_duration)
}
