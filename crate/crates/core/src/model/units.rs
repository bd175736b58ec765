use std::fmt;
use std::iter::Sum;
use std::ops::Add;
use std::str::FromStr;

use num::{BigRational, One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::decimal::{self, DecimalError};

/// Rejection of an out-of-range quantity.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum QuantityError {
    #[error("negative")]
    Negative,
    #[error("outside [0, 1]")]
    OutOfUnitInterval,
    #[error("{0}")]
    Decimal(#[from] DecimalError),
}

fn non_negative(value: BigRational) -> Result<BigRational, QuantityError> {
    if value.is_negative() {
        Err(QuantityError::Negative)
    } else {
        Ok(value)
    }
}

/// Energy, stored exactly in watt-hours.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Energy(BigRational);

impl Energy {
    pub fn from_wh(value: BigRational) -> Result<Self, QuantityError> {
        non_negative(value).map(Energy)
    }

    pub fn from_unit(value: BigRational, unit: EnergyUnit) -> Result<Self, QuantityError> {
        Self::from_wh(value * BigRational::from_integer(unit.wh_per_unit()))
    }

    /// Parses a decimal token in Wh.
    pub fn parse_wh(token: &str) -> Result<Self, QuantityError> {
        Ok(Energy(decimal::parse_non_negative(token)?.value))
    }

    pub fn zero() -> Self {
        Energy(BigRational::zero())
    }

    pub fn wh(&self) -> &BigRational {
        &self.0
    }

    pub fn kwh(&self) -> BigRational {
        self.in_unit(EnergyUnit::KWh)
    }

    pub fn in_unit(&self, unit: EnergyUnit) -> BigRational {
        &self.0 / BigRational::from_integer(unit.wh_per_unit())
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    /// Scales by a non-negative exact factor.
    pub fn scale(&self, factor: &BigRational) -> Energy {
        debug_assert!(!factor.is_negative());
        Energy(&self.0 * factor)
    }

    pub fn times(&self, fraction: &Fraction) -> Energy {
        self.scale(fraction.value())
    }

    /// Picks the largest unit in which the value is at least 1, falling back
    /// to Wh for small values.
    pub fn natural_unit(&self) -> EnergyUnit {
        EnergyUnit::ALL
            .iter()
            .rev()
            .copied()
            .find(|u| self.in_unit(*u) >= BigRational::one())
            .unwrap_or(EnergyUnit::Wh)
    }
}

impl Add for Energy {
    type Output = Energy;
    fn add(self, rhs: Energy) -> Energy {
        Energy(self.0 + rhs.0)
    }
}

impl<'a> Add<&'a Energy> for &'a Energy {
    type Output = Energy;
    fn add(self, rhs: &Energy) -> Energy {
        Energy(&self.0 + &rhs.0)
    }
}

impl Sum for Energy {
    fn sum<I: Iterator<Item = Energy>>(iter: I) -> Energy {
        iter.fold(Energy::zero(), |a, b| a + b)
    }
}

impl<'a> Sum<&'a Energy> for Energy {
    fn sum<I: Iterator<Item = &'a Energy>>(iter: I) -> Energy {
        Energy(iter.map(|e| &e.0).sum())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EnergyUnit {
    Wh,
    KWh,
    MWh,
    GWh,
    TWh,
}

impl EnergyUnit {
    pub const ALL: [EnergyUnit; 5] = [
        EnergyUnit::Wh,
        EnergyUnit::KWh,
        EnergyUnit::MWh,
        EnergyUnit::GWh,
        EnergyUnit::TWh,
    ];

    pub fn wh_per_unit(self) -> num::BigInt {
        let exp = match self {
            EnergyUnit::Wh => 0,
            EnergyUnit::KWh => 3,
            EnergyUnit::MWh => 6,
            EnergyUnit::GWh => 9,
            EnergyUnit::TWh => 12,
        };
        decimal::pow10(exp)
    }

    pub fn symbol(self) -> &'static str {
        match self {
            EnergyUnit::Wh => "Wh",
            EnergyUnit::KWh => "kWh",
            EnergyUnit::MWh => "MWh",
            EnergyUnit::GWh => "GWh",
            EnergyUnit::TWh => "TWh",
        }
    }
}

impl fmt::Display for EnergyUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

impl FromStr for EnergyUnit {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EnergyUnit::ALL
            .iter()
            .copied()
            .find(|u| u.symbol().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown energy unit `{s}`"))
    }
}

/// An energy value scaled to a display unit and rounded for presentation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DisplayEnergy {
    pub exact: BigRational,
    pub rounded: BigRational,
    pub unit: EnergyUnit,
}

impl fmt::Display for DisplayEnergy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let text = decimal::to_decimal_string(&self.rounded).expect("rounded values terminate");
        write!(f, "{text} {}", self.unit)
    }
}

pub const DEFAULT_SIGNIFICANT_DIGITS: u32 = 6;

/// Scales to `unit` exactly, then rounds half-even to `significant_digits`
/// for display.
pub fn convert_energy(energy: &Energy, unit: EnergyUnit, significant_digits: u32) -> DisplayEnergy {
    let exact = energy.in_unit(unit);
    let rounded = decimal::round_significant(&exact, significant_digits);
    DisplayEnergy { exact, rounded, unit }
}

/// Mass of CO2-equivalent, in grams.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Carbon(BigRational);

impl Carbon {
    pub fn from_grams(value: BigRational) -> Result<Self, QuantityError> {
        non_negative(value).map(Carbon)
    }

    pub fn zero() -> Self {
        Carbon(BigRational::zero())
    }

    pub fn grams(&self) -> &BigRational {
        &self.0
    }
}

impl Add for Carbon {
    type Output = Carbon;
    fn add(self, rhs: Carbon) -> Carbon {
        Carbon(self.0 + rhs.0)
    }
}

impl Sum for Carbon {
    fn sum<I: Iterator<Item = Carbon>>(iter: I) -> Carbon {
        iter.fold(Carbon::zero(), |a, b| a + b)
    }
}

/// Grid intensity in grams CO2e per kWh.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EmissionFactor(BigRational);

impl EmissionFactor {
    pub fn new(g_per_kwh: BigRational) -> Result<Self, QuantityError> {
        non_negative(g_per_kwh).map(EmissionFactor)
    }

    pub fn parse(token: &str) -> Result<Self, QuantityError> {
        Ok(EmissionFactor(decimal::parse_non_negative(token)?.value))
    }

    pub fn g_per_kwh(&self) -> &BigRational {
        &self.0
    }
}

/// carbon = energy in kWh × factor.
pub fn carbonize(energy: &Energy, factor: &EmissionFactor) -> Carbon {
    Carbon(energy.kwh() * &factor.0)
}

/// An exact value in [0, 1].
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Fraction(BigRational);

impl Fraction {
    pub fn new(value: BigRational) -> Result<Self, QuantityError> {
        if value.is_negative() || value > BigRational::one() {
            Err(QuantityError::OutOfUnitInterval)
        } else {
            Ok(Fraction(value))
        }
    }

    pub fn parse(token: &str) -> Result<Self, QuantityError> {
        let value = decimal::parse_signed(token)?.value;
        Self::new(value)
    }

    pub fn zero() -> Self {
        Fraction(BigRational::zero())
    }

    pub fn one() -> Self {
        Fraction(BigRational::one())
    }

    pub fn value(&self) -> &BigRational {
        &self.0
    }

    /// 1 − self.
    pub fn complement(&self) -> Fraction {
        Fraction(BigRational::one() - &self.0)
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }
}

/// A non-negative amount of coins or tokens in whole native units.
///
/// Denomination limits are a property of the network and are checked where
/// tokens are parsed (see [`CoinAmount::parse`]).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct CoinAmount(BigRational);

impl CoinAmount {
    pub fn new(value: BigRational) -> Result<Self, QuantityError> {
        non_negative(value).map(CoinAmount)
    }

    /// Parses a token carrying at most `decimals` fractional digits.
    pub fn parse(token: &str, decimals: u32) -> Result<Self, QuantityError> {
        Ok(CoinAmount(decimal::parse_with_places(token, decimals)?))
    }

    pub fn from_integer(n: u64) -> Self {
        CoinAmount(BigRational::from_integer(n.into()))
    }

    pub fn zero() -> Self {
        CoinAmount(BigRational::zero())
    }

    pub fn value(&self) -> &BigRational {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }
}
