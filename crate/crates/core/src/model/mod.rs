//! Domain types shared by every part of the engine.
//!
//! Quantities are exact rationals: energy in Wh, carbon in grams CO2e, coin
//! amounts in whole native units. Rounding only happens on output.

mod day;
mod records;
mod result;
mod units;

pub use day::{ConsensusKind, ConsensusParams, DayOrigin, DayViolation, Gas, NetworkDay};
pub use records::{EntityId, HoldingRecord, Portfolio, TransactionRecord};
pub use result::{Activity, AllocationResult, Audit, AuditFactor, FactorKind, Method, ShareBasis, WeightSource};
pub use units::{
    carbonize, convert_energy, Carbon, CoinAmount, DisplayEnergy, EmissionFactor, Energy, EnergyUnit, Fraction,
    QuantityError, DEFAULT_SIGNIFICANT_DIGITS,
};
