use std::fmt;

use chrono::NaiveDate;

use super::day::Gas;
use super::units::CoinAmount;

/// Opaque identifier of an accounting entity (fund, wallet cluster, desk…).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntityId(pub String);

impl EntityId {
    pub fn new(id: impl Into<String>) -> Self {
        EntityId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Average balance an entity held over one UTC day.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HoldingRecord {
    pub entity_id: EntityId,
    pub date: NaiveDate,
    pub amount: CoinAmount,
}

impl HoldingRecord {
    pub fn new(entity_id: impl Into<String>, date: NaiveDate, amount: CoinAmount) -> Self {
        HoldingRecord {
            entity_id: EntityId::new(entity_id),
            date,
            amount,
        }
    }
}

/// Transactions an entity executed on one day. Any of the three basis
/// quantities may be given; `tx_count` defaults to 1 when the count basis is
/// used. `app_id` tags transactions executed against a layer-1 application.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransactionRecord {
    pub entity_id: EntityId,
    pub date: NaiveDate,
    pub fee_paid: Option<CoinAmount>,
    pub gas_used: Option<Gas>,
    pub tx_count: Option<u64>,
    pub app_id: Option<String>,
}

impl TransactionRecord {
    pub fn new(entity_id: impl Into<String>, date: NaiveDate) -> Self {
        TransactionRecord {
            entity_id: EntityId::new(entity_id),
            date,
            fee_paid: None,
            gas_used: None,
            tx_count: None,
            app_id: None,
        }
    }

    pub fn with_fee(mut self, fee: CoinAmount) -> Self {
        self.fee_paid = Some(fee);
        self
    }

    pub fn with_gas(mut self, gas: Gas) -> Self {
        self.gas_used = Some(gas);
        self
    }

    pub fn with_count(mut self, count: u64) -> Self {
        self.tx_count = Some(count);
        self
    }

    pub fn in_app(mut self, app_id: impl Into<String>) -> Self {
        self.app_id = Some(app_id.into());
        self
    }

    pub fn has_basis(&self) -> bool {
        self.fee_paid.is_some() || self.gas_used.is_some() || self.tx_count.is_some()
    }
}

/// An entity's (or several entities') dated activity on one network.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Portfolio {
    pub schema_version: String,
    pub network_id: String,
    pub holdings: Vec<HoldingRecord>,
    pub transactions: Vec<TransactionRecord>,
}

impl Portfolio {
    pub fn new(network_id: impl Into<String>) -> Self {
        Portfolio {
            schema_version: "1".to_string(),
            network_id: network_id.into(),
            holdings: Vec::new(),
            transactions: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.holdings.is_empty() && self.transactions.is_empty()
    }

    /// Every distinct date the portfolio touches, ascending.
    pub fn dates(&self) -> Vec<NaiveDate> {
        let mut dates: Vec<NaiveDate> = self
            .holdings
            .iter()
            .map(|h| h.date)
            .chain(self.transactions.iter().map(|t| t.date))
            .collect();
        dates.sort_unstable();
        dates.dedup();
        dates
    }
}
