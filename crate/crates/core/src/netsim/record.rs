//! Call-record fields and their text form inside message sections.
//!
//! Section text is a `;`-separated list of `key=value` pairs on a single
//! line. Housekeeping added by the billing party goes on its own lines: in
//! front of the network core line, after the handset core line.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assurance::{rate_call, Tariff};
use crate::money::Money;

use super::calls::GroundTruthCall;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RecordFormatError {
    #[error("missing field {0:?}")]
    MissingField(&'static str),
    #[error("field {field:?} has unparseable value {value:?}")]
    BadValue { field: &'static str, value: String },
    #[error("malformed pair {0:?}")]
    MalformedPair(String),
}

/// Billing attributes of one call, as stored by the IN and the switch.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CallRecord {
    pub call_id: u64,
    pub correlation_id: u64,
    pub start_time_ms: u64,
    /// Seconds.
    pub charged_duration: u32,
    pub final_charge: Money,
    pub account_before: Money,
    pub account_after: Money,
    pub caller: String,
    pub callee: String,
}

impl CallRecord {
    /// Rates `call` and derives the prepaid balance after it.
    pub fn from_call(call: &GroundTruthCall, tariff: &Tariff) -> Self {
        let mut record = CallRecord {
            call_id: call.call_id,
            correlation_id: call.correlation_id,
            start_time_ms: call.start_time_ms,
            charged_duration: call.duration_s,
            final_charge: Money::ZERO,
            account_before: call.account_before,
            account_after: call.account_before,
            caller: call.caller.clone(),
            callee: call.callee.clone(),
        };
        record.final_charge = rate_call(&record, tariff);
        record.account_after = record.account_before - record.final_charge;
        record
    }

    pub fn to_line(&self) -> String {
        let mut s = String::with_capacity(160);
        write!(
            s,
            "call_id={};correlation_id={};start_ms={};charged_duration={};final_charge={};account_before={};account_after={};caller={};callee={}",
            self.call_id,
            self.correlation_id,
            self.start_time_ms,
            self.charged_duration,
            self.final_charge.minor(),
            self.account_before.minor(),
            self.account_after.minor(),
            self.caller,
            self.callee,
        )
        .unwrap();
        s
    }

    pub fn parse_line(line: &str) -> Result<Self, RecordFormatError> {
        let mut f = Fields::parse(line)?;
        Ok(CallRecord {
            call_id: f.num("call_id")?,
            correlation_id: f.num("correlation_id")?,
            start_time_ms: f.num("start_ms")?,
            charged_duration: f.num("charged_duration")?,
            final_charge: Money::from_minor(f.num("final_charge")?),
            account_before: Money::from_minor(f.num("account_before")?),
            account_after: Money::from_minor(f.num("account_after")?),
            caller: f.text("caller")?,
            callee: f.text("callee")?,
        })
    }

    /// Parses the core line of a network section, i.e. its last line.
    pub fn from_network_section(text: &str) -> Result<Self, RecordFormatError> {
        Self::parse_line(text.rsplit('\n').next().unwrap_or(""))
    }
}

/// Handset-side measurements of one call.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HandsetMetrics {
    pub signal_strength_dbm: i32,
    pub snr_db: i32,
}

impl HandsetMetrics {
    pub fn to_line(&self, correlation_id: u64) -> String {
        format!(
            "correlation_id={correlation_id};signal_dbm={};snr_db={}",
            self.signal_strength_dbm, self.snr_db
        )
    }

    /// Parses the core line of a handset section, i.e. its first line.
    pub fn from_handset_section(text: &str) -> Result<(u64, Self), RecordFormatError> {
        let mut f = Fields::parse(text.split('\n').next().unwrap_or(""))?;
        Ok((
            f.num("correlation_id")?,
            HandsetMetrics {
                signal_strength_dbm: f.num("signal_dbm")?,
                snr_db: f.num("snr_db")?,
            },
        ))
    }
}

/// `key=value` lines, as used in housekeeping text.
pub fn annotation_lines(pairs: &[(&str, String)]) -> String {
    pairs
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join("\n")
}

struct Fields(BTreeMap<String, String>);

impl Fields {
    fn parse(line: &str) -> Result<Self, RecordFormatError> {
        let mut map = BTreeMap::new();
        for pair in line.split(';').filter(|p| !p.is_empty()) {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| RecordFormatError::MalformedPair(pair.to_owned()))?;
            map.insert(k.to_owned(), v.to_owned());
        }
        Ok(Fields(map))
    }

    fn text(&mut self, field: &'static str) -> Result<String, RecordFormatError> {
        self.0.remove(field).ok_or(RecordFormatError::MissingField(field))
    }

    fn num<T: std::str::FromStr>(&mut self, field: &'static str) -> Result<T, RecordFormatError> {
        let value = self.text(field)?;
        value
            .parse()
            .map_err(|_| RecordFormatError::BadValue { field, value })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> CallRecord {
        CallRecord {
            call_id: 7,
            correlation_id: 0xdead_beef,
            start_time_ms: 1_300_000_000_123,
            charged_duration: 61,
            final_charge: Money::from_minor(6100),
            account_before: Money::from_minor(50_000),
            account_after: Money::from_minor(43_900),
            caller: "9830012345".into(),
            callee: "9830054321".into(),
        }
    }

    #[test]
    fn line_round_trip() {
        let r = sample();
        assert_eq!(CallRecord::parse_line(&r.to_line()).unwrap(), r);
    }

    #[test]
    fn network_core_is_last_line() {
        let r = sample();
        let text = format!("rx_ms=5\noperator=x\n{}", r.to_line());
        assert_eq!(CallRecord::from_network_section(&text).unwrap(), r);
    }

    #[test]
    fn handset_core_is_first_line() {
        let m = HandsetMetrics {
            signal_strength_dbm: -71,
            snr_db: 23,
        };
        let text = format!("{}\nrx_ms=9", m.to_line(42));
        assert_eq!(HandsetMetrics::from_handset_section(&text).unwrap(), (42, m));
    }

    #[test]
    fn missing_and_bad_fields() {
        assert_eq!(
            CallRecord::parse_line("call_id=1").unwrap_err(),
            RecordFormatError::MissingField("correlation_id")
        );
        assert!(matches!(
            HandsetMetrics::from_handset_section("correlation_id=x;signal_dbm=1;snr_db=2"),
            Err(RecordFormatError::BadValue { field: "correlation_id", .. })
        ));
    }
}
