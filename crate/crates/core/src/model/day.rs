use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use num::{BigRational, Signed, Zero};

use super::units::{CoinAmount, EmissionFactor, Energy, Fraction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ConsensusKind {
    ProofOfWork,
    ProofOfStake,
}

impl fmt::Display for ConsensusKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConsensusKind::ProofOfWork => "pow",
            ConsensusKind::ProofOfStake => "pos",
        })
    }
}

impl FromStr for ConsensusKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "pow" | "proof-of-work" => Ok(ConsensusKind::ProofOfWork),
            "pos" | "proof-of-stake" => Ok(ConsensusKind::ProofOfStake),
            other => Err(format!("unknown consensus `{other}` (expected pow or pos)")),
        }
    }
}

/// Consensus designation of a network. Weighting inputs for either kind are
/// carried on each [`NetworkDay`], so the kind alone decides which columns
/// are mandatory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ConsensusParams {
    pub kind: ConsensusKind,
}

impl ConsensusParams {
    pub const POW: ConsensusParams = ConsensusParams {
        kind: ConsensusKind::ProofOfWork,
    };
    pub const POS: ConsensusParams = ConsensusParams {
        kind: ConsensusKind::ProofOfStake,
    };
}

/// Gas or other transaction-complexity units.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Gas(BigRational);

impl Gas {
    pub fn new(value: BigRational) -> Result<Self, super::units::QuantityError> {
        if value.is_negative() {
            Err(super::units::QuantityError::Negative)
        } else {
            Ok(Gas(value))
        }
    }

    pub fn from_integer(n: u64) -> Self {
        Gas(BigRational::from_integer(n.into()))
    }

    pub fn value(&self) -> &BigRational {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }
}

/// Where a day's telemetry came from.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum DayOrigin {
    #[default]
    Observed,
    /// Copied from the last observed day before a gap.
    FilledForward { source: NaiveDate },
    /// Built from a host network's attribution, e.g. a layer-2 day. The chain
    /// lists every network from the layer-1 down to this one.
    Synthetic { chain: Vec<String> },
}

impl fmt::Display for DayOrigin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DayOrigin::Observed => f.write_str("observed"),
            DayOrigin::FilledForward { source } => write!(f, "filled-forward:{source}"),
            DayOrigin::Synthetic { chain } => write!(f, "synthetic:{}", chain.join(">")),
        }
    }
}

/// One UTC day of network telemetry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkDay {
    pub date: NaiveDate,
    pub energy: Energy,
    pub block_reward: Option<CoinAmount>,
    pub tx_fees_total: Option<CoinAmount>,
    pub coin_supply: CoinAmount,
    pub lost_coin_fraction: Option<Fraction>,
    pub tx_count: u64,
    pub gas_total: Option<Gas>,
    pub pos_tx_share: Option<Fraction>,
    pub emission_factor: Option<EmissionFactor>,
    pub origin: DayOrigin,
}

/// A broken day-level invariant, addressed by column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DayViolation {
    pub column: &'static str,
    pub reason: String,
}

impl DayViolation {
    fn new(column: &'static str, reason: impl Into<String>) -> Self {
        DayViolation {
            column,
            reason: reason.into(),
        }
    }
}

impl fmt::Display for DayViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.column, self.reason)
    }
}

impl NetworkDay {
    pub fn new(date: NaiveDate, energy: Energy, coin_supply: CoinAmount, tx_count: u64) -> Self {
        NetworkDay {
            date,
            energy,
            block_reward: None,
            tx_fees_total: None,
            coin_supply,
            lost_coin_fraction: None,
            tx_count,
            gas_total: None,
            pos_tx_share: None,
            emission_factor: None,
            origin: DayOrigin::Observed,
        }
    }

    pub fn with_revenue(mut self, block_reward: CoinAmount, tx_fees_total: CoinAmount) -> Self {
        self.block_reward = Some(block_reward);
        self.tx_fees_total = Some(tx_fees_total);
        self
    }

    pub fn with_pos_tx_share(mut self, share: Fraction) -> Self {
        self.pos_tx_share = Some(share);
        self
    }

    pub fn with_gas_total(mut self, gas: Gas) -> Self {
        self.gas_total = Some(gas);
        self
    }

    pub fn with_lost_coins(mut self, fraction: Fraction) -> Self {
        self.lost_coin_fraction = Some(fraction);
        self
    }

    pub fn with_emission_factor(mut self, factor: EmissionFactor) -> Self {
        self.emission_factor = Some(factor);
        self
    }

    pub fn lost_coin_fraction(&self) -> Fraction {
        self.lost_coin_fraction.clone().unwrap_or_else(Fraction::zero)
    }

    /// Supply net of lost coins.
    pub fn effective_supply(&self) -> BigRational {
        self.coin_supply.value() * self.lost_coin_fraction().complement().value()
    }

    /// Checks every row-level invariant for a day of the given consensus kind.
    pub fn validate(&self, kind: ConsensusKind) -> Result<(), DayViolation> {
        if self.coin_supply.is_zero() {
            return Err(DayViolation::new("coin_supply", "must be greater than zero"));
        }
        if let Some(lost) = &self.lost_coin_fraction {
            if lost == &Fraction::one() {
                return Err(DayViolation::new("lost_coin_fraction", "must be less than 1"));
            }
        }
        if self.tx_count == 0 {
            if self.tx_fees_total.as_ref().is_some_and(|f| !f.is_zero()) {
                return Err(DayViolation::new("tx_fees_total", "must be 0 when tx_count is 0"));
            }
            if self.gas_total.as_ref().is_some_and(|g| !g.is_zero()) {
                return Err(DayViolation::new("gas_total", "must be 0 when tx_count is 0"));
            }
        }
        match kind {
            ConsensusKind::ProofOfWork => {
                let reward = self
                    .block_reward
                    .as_ref()
                    .ok_or_else(|| DayViolation::new("block_reward", "required for pow"))?;
                let fees = self
                    .tx_fees_total
                    .as_ref()
                    .ok_or_else(|| DayViolation::new("tx_fees_total", "required for pow"))?;
                if reward.is_zero() && fees.is_zero() {
                    return Err(DayViolation::new(
                        "block_reward",
                        "zero miner revenue (block_reward + tx_fees_total = 0)",
                    ));
                }
            }
            ConsensusKind::ProofOfStake => {
                let share = self
                    .pos_tx_share
                    .as_ref()
                    .ok_or_else(|| DayViolation::new("pos_tx_share", "required for pos"))?;
                if self.tx_count == 0 && !share.is_zero() {
                    return Err(DayViolation::new("pos_tx_share", "must be 0 when tx_count is 0"));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decimal::parse_signed;

    fn r(t: &str) -> BigRational {
        parse_signed(t).unwrap().value
    }

    fn base() -> NetworkDay {
        NetworkDay::new(
            NaiveDate::from_ymd_opt(2021, 1, 1).unwrap(),
            Energy::from_wh(r("1000")).unwrap(),
            CoinAmount::from_integer(100),
            10,
        )
    }

    #[test]
    fn pow_requires_revenue_columns() {
        let day = base();
        assert_eq!(
            day.validate(ConsensusKind::ProofOfWork).unwrap_err().column,
            "block_reward"
        );
        let day = base().with_revenue(CoinAmount::zero(), CoinAmount::zero());
        let err = day.validate(ConsensusKind::ProofOfWork).unwrap_err();
        assert!(err.reason.contains("zero miner revenue"));
        let day = base().with_revenue(CoinAmount::zero(), CoinAmount::from_integer(1));
        assert!(day.validate(ConsensusKind::ProofOfWork).is_ok());
    }

    #[test]
    fn pos_requires_share_and_zero_share_on_idle_days() {
        assert_eq!(
            base().validate(ConsensusKind::ProofOfStake).unwrap_err().column,
            "pos_tx_share"
        );
        let mut idle = base().with_pos_tx_share(Fraction::parse("0.1").unwrap());
        idle.tx_count = 0;
        assert_eq!(
            idle.validate(ConsensusKind::ProofOfStake).unwrap_err().column,
            "pos_tx_share"
        );
        idle.pos_tx_share = Some(Fraction::zero());
        assert!(idle.validate(ConsensusKind::ProofOfStake).is_ok());
    }

    #[test]
    fn idle_days_cannot_carry_fees_or_gas() {
        let mut day = base().with_revenue(CoinAmount::from_integer(1), CoinAmount::from_integer(1));
        day.tx_count = 0;
        assert_eq!(
            day.validate(ConsensusKind::ProofOfWork).unwrap_err().column,
            "tx_fees_total"
        );
        let mut day = base()
            .with_revenue(CoinAmount::from_integer(1), CoinAmount::zero())
            .with_gas_total(Gas::from_integer(5));
        day.tx_count = 0;
        assert_eq!(
            day.validate(ConsensusKind::ProofOfWork).unwrap_err().column,
            "gas_total"
        );
    }

    #[test]
    fn supply_and_lost_coins() {
        let mut day = base().with_revenue(CoinAmount::from_integer(1), CoinAmount::zero());
        day.coin_supply = CoinAmount::zero();
        assert_eq!(
            day.validate(ConsensusKind::ProofOfWork).unwrap_err().column,
            "coin_supply"
        );
        let day = base()
            .with_revenue(CoinAmount::from_integer(1), CoinAmount::zero())
            .with_lost_coins(Fraction::one());
        assert_eq!(
            day.validate(ConsensusKind::ProofOfWork).unwrap_err().column,
            "lost_coin_fraction"
        );
        let day = base().with_lost_coins(Fraction::parse("0.2").unwrap());
        assert_eq!(day.effective_supply(), r("80"));
    }
}
