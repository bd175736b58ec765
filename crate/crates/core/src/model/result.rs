use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use num::{BigRational, One};

use super::day::DayOrigin;
use super::records::EntityId;
use super::units::{Carbon, Energy, Fraction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    HoldingBased,
    TransactionBased,
    Hybrid,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::HoldingBased, Method::TransactionBased, Method::Hybrid];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::HoldingBased => "holding",
            Method::TransactionBased => "transaction",
            Method::Hybrid => "hybrid",
        }
    }

    /// Whether the method attributes anything to the given activity.
    pub fn covers(self, activity: Activity) -> bool {
        !matches!(
            (self, activity),
            (Method::HoldingBased, Activity::Transaction) | (Method::TransactionBased, Activity::Holding)
        )
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "holding" | "holding-based" => Ok(Method::HoldingBased),
            "transaction" | "transaction-based" => Ok(Method::TransactionBased),
            "hybrid" => Ok(Method::Hybrid),
            other => Err(format!("unknown method `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Activity {
    Holding,
    Transaction,
}

impl Activity {
    pub fn as_str(self) -> &'static str {
        match self {
            Activity::Holding => "holding",
            Activity::Transaction => "transaction",
        }
    }
}

impl fmt::Display for Activity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The quantity an entity's share of a pool was measured in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ShareBasis {
    Holding,
    TokenHolding,
    Fee,
    Gas,
    Count,
}

impl ShareBasis {
    pub fn as_str(self) -> &'static str {
        match self {
            ShareBasis::Holding => "holding",
            ShareBasis::TokenHolding => "token_holding",
            ShareBasis::Fee => "fee",
            ShareBasis::Gas => "gas",
            ShareBasis::Count => "count",
        }
    }
}

impl fmt::Display for ShareBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What set a day's transaction weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WeightSource {
    /// Fees over total miner revenue.
    FeeShare,
    /// Marginal transaction processing over total consumption.
    PosTxShare,
}

impl WeightSource {
    pub fn as_str(self) -> &'static str {
        match self {
            WeightSource::FeeShare => "fee_share",
            WeightSource::PosTxShare => "pos_tx_share",
        }
    }
}

/// A multiplicative step from the day's energy down to the pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FactorKind {
    /// Network holding weight (hybrid only).
    HoldingWeight,
    /// Network transaction weight (hybrid, and every application pool).
    TransactionWeight,
    /// An application's share of network fees or gas.
    AppFeeShare,
    /// Host holding weight reused inside an application.
    AppHoldingWeight,
    /// Host transaction weight reused inside an application.
    AppTransactionWeight,
}

impl FactorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FactorKind::HoldingWeight => "holding_weight",
            FactorKind::TransactionWeight => "transaction_weight",
            FactorKind::AppFeeShare => "app_fee_share",
            FactorKind::AppHoldingWeight => "app_holding_weight",
            FactorKind::AppTransactionWeight => "app_transaction_weight",
        }
    }

    fn is_network_weight(self) -> bool {
        matches!(self, FactorKind::HoldingWeight | FactorKind::TransactionWeight)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditFactor {
    pub kind: FactorKind,
    pub value: BigRational,
}

/// Everything needed to recompute an allocation from its inputs.
///
/// `pool = network_energy × Π factors` and `energy = pool × entity_share`,
/// both exact.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Audit {
    pub network_energy: Energy,
    /// The day's fee share or PoS transaction share, when a hybrid split was applied.
    pub transaction_weight: Option<(WeightSource, Fraction)>,
    pub factors: Vec<AuditFactor>,
    pub pool: Energy,
    pub basis: ShareBasis,
    pub entity_quantity: BigRational,
    pub basis_total: BigRational,
    pub entity_share: BigRational,
    pub origin: DayOrigin,
}

impl Audit {
    fn factor_product(&self, keep: impl Fn(FactorKind) -> bool) -> BigRational {
        self.factors
            .iter()
            .filter(|f| keep(f.kind))
            .fold(BigRational::one(), |acc, f| acc * &f.value)
    }

    pub fn replay_pool(&self) -> Energy {
        self.network_energy.scale(&self.factor_product(|_| true))
    }

    /// Recomputes the allocated energy from the recorded shares alone.
    pub fn replay(&self) -> Energy {
        self.replay_pool().scale(&self.entity_share)
    }

    /// Product of the network-level hybrid weights applied (1 for pure methods).
    pub fn network_weight(&self) -> BigRational {
        self.factor_product(FactorKind::is_network_weight)
    }

    /// The allocation with the network hybrid weight removed.
    pub fn unweighted_energy(&self) -> Energy {
        self.network_energy
            .scale(&self.factor_product(|k| !k.is_network_weight()))
            .scale(&self.entity_share)
    }
}

/// Energy and carbon attributed to one entity's activity on one day.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AllocationResult {
    pub entity_id: EntityId,
    pub date: NaiveDate,
    pub method: Method,
    pub activity: Activity,
    /// Set for allocations drawn from a layer-1 application's pool.
    pub app_id: Option<String>,
    pub energy: Energy,
    pub carbon: Option<Carbon>,
    pub audit: Audit,
}

impl AllocationResult {
    pub fn sort_key(&self) -> (NaiveDate, &EntityId, Activity) {
        (self.date, &self.entity_id, self.activity)
    }
}
