use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::account::{adjust_balance, Account};
use super::merge::AssuranceFile;
use super::rating::{rate_call, Tariff};
use crate::money::Money;

pub const REPORT_CSV_HEADER: [&str; 7] = [
    "recharge_count",
    "total_transaction_amount",
    "net_calculation_amount",
    "before",
    "after",
    "recovered",
    "recovered_pct",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RevenueReport {
    pub recharge_count: u64,
    pub total_transaction_amount: Money,
    /// Billable amount less the charges no account could cover.
    pub net_calculation_amount: Money,
    /// Rated from billing-side records alone.
    pub balance_before_extended_mamo: Money,
    /// Rated from the switch-authoritative union.
    pub balance_after_extended_mamo: Money,
    pub recovered_amount: Money,
    /// `None` when nothing was billed before.
    pub recovered_percentage: Option<f64>,
    pub calls_before: u64,
    pub calls_after: u64,
    pub uncollectible_calls: u64,
}

impl RevenueReport {
    /// Values in [`REPORT_CSV_HEADER`] order; money in major units.
    pub fn csv_row(&self) -> [String; 7] {
        [
            self.recharge_count.to_string(),
            self.total_transaction_amount.to_string(),
            self.net_calculation_amount.to_string(),
            self.balance_before_extended_mamo.to_string(),
            self.balance_after_extended_mamo.to_string(),
            self.recovered_amount.to_string(),
            self.recovered_percentage.map(|p| format!("{p:.6}")).unwrap_or_default(),
        ]
    }
}

pub(crate) fn percentage(part: Money, whole: Money) -> Option<f64> {
    (whole != Money::ZERO).then(|| 100.0 * part.minor() as f64 / whole.minor() as f64)
}

/// Revenue before and after billing from the switch archive.
///
/// Charges are debited from the callers' accounts in call start order, with
/// recharges credited first when they share a timestamp, so the result does
/// not depend on the order of `files`. A caller without an account counts as
/// uncollectible.
pub fn revenue_report(files: &[AssuranceFile], tariff: &Tariff, accounts: &[Account]) -> RevenueReport {
    let mut before = Money::ZERO;
    let mut after = Money::ZERO;
    let (mut calls_before, mut calls_after) = (0u64, 0u64);
    let mut charges = Vec::new();
    for entry in files.iter().flat_map(|f| &f.merged) {
        if let Some(b) = &entry.reconciled_record {
            before = before + rate_call(&b.in_fields, tariff);
            calls_before += 1;
        }
        let billed = entry.authoritative();
        let charge = rate_call(billed, tariff);
        after = after + charge;
        calls_after += 1;
        charges.push((billed.start_time_ms, billed.call_id, billed.caller.as_str(), charge));
    }
    charges.sort();

    // (time, 0 = recharge | 1 = charge, tiebreak, subscriber, amount)
    let mut events: Vec<(u64, u8, u64, &str, Money)> = Vec::new();
    for a in accounts {
        for (i, r) in a.recharge_log.iter().enumerate() {
            events.push((r.time_ms, 0, i as u64, a.subscriber_number.as_str(), r.amount));
        }
    }
    events.extend(charges.into_iter().map(|(t, id, caller, c)| (t, 1, id, caller, c)));
    events.sort();

    let mut ledger: BTreeMap<&str, Account> =
        accounts.iter().map(|a| (a.subscriber_number.as_str(), a.clone())).collect();
    let mut uncollectible = Money::ZERO;
    let mut uncollectible_calls = 0;
    for (_, kind, _, subscriber, amount) in events {
        let Some(account) = ledger.get_mut(subscriber) else {
            uncollectible = uncollectible + amount;
            uncollectible_calls += 1;
            continue;
        };
        if kind == 0 {
            account.balance = account.balance + amount;
            continue;
        }
        match adjust_balance(account, amount) {
            Ok(a) => *account = a,
            Err(_) => {
                uncollectible = uncollectible + amount;
                uncollectible_calls += 1;
            }
        }
    }

    let recovered = after - before;
    RevenueReport {
        recharge_count: accounts.iter().map(|a| a.recharge_log.len() as u64).sum(),
        total_transaction_amount: after,
        net_calculation_amount: after - uncollectible,
        balance_before_extended_mamo: before,
        balance_after_extended_mamo: after,
        recovered_amount: recovered,
        recovered_percentage: percentage(recovered, before),
        calls_before,
        calls_after,
        uncollectible_calls,
    }
}
