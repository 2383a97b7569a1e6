use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::AssuranceError;
use crate::money::Money;
use crate::netsim::{subscriber_number, CallWindow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Recharge {
    pub time_ms: u64,
    pub amount: Money,
}

/// A prepaid account. `balance` is the opening balance; recharges in the
/// log are credited at their time when charges are folded in.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Account {
    pub subscriber_number: String,
    pub balance: Money,
    pub recharge_log: Vec<Recharge>,
    /// Lowest balance a charge may leave.
    #[serde(default)]
    pub floor: Money,
}

impl Account {
    pub fn new(subscriber_number: impl Into<String>, balance: Money) -> Self {
        Account {
            subscriber_number: subscriber_number.into(),
            balance,
            recharge_log: Vec::new(),
            floor: Money::ZERO,
        }
    }
}

/// Debits `charge`. Fails, leaving the caller's account as it was, when the
/// balance would drop below the floor.
pub fn adjust_balance(account: &Account, charge: Money) -> Result<Account, AssuranceError> {
    if charge.is_negative() {
        return Err(AssuranceError::NegativeCharge(charge));
    }
    let after = account.balance - charge;
    if after < account.floor {
        return Err(AssuranceError::InsufficientBalance {
            subscriber: account.subscriber_number.clone(),
            balance: account.balance,
            charge,
            floor: account.floor,
        });
    }
    Ok(Account {
        balance: after,
        ..account.clone()
    })
}

/// One account per subscriber, with opening balances of 0..=200.00 and up
/// to three recharges of 10.00..=100.00 inside `window`.
pub fn generate_accounts(subscribers: usize, window: &CallWindow, seed: u64) -> Vec<Account> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..subscribers)
        .map(|i| {
            let mut account = Account::new(subscriber_number(i), Money::from_minor(rng.gen_range(0..=20_000)));
            let recharges = rng.gen_range(0..=3);
            account.recharge_log = (0..recharges)
                .map(|_| Recharge {
                    time_ms: window.start_ms + rng.gen_range(0..window.length_ms.max(1)),
                    amount: Money::from_minor(rng.gen_range(10..=100) * 100),
                })
                .collect();
            account.recharge_log.sort_by_key(|r| r.time_ms);
            account
        })
        .collect()
}
