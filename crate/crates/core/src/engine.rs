//! Layer-1 allocation under the holding-based, transaction-based and hybrid
//! methods.
//!
//! A day's energy is split into a holding pool and a transaction pool by the
//! day's [`MethodWeights`]. Holdings draw from the holding pool in proportion
//! to their share of lost-coin-adjusted supply; transactions draw from the
//! transaction pool in proportion to fees, gas or count.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use num::{BigRational, Zero};
use rayon::prelude::*;

use crate::error::AllocationError;
use crate::model::{
    carbonize, Activity, AllocationResult, Audit, AuditFactor, Carbon, ConsensusKind, ConsensusParams, Energy,
    FactorKind, Fraction, HoldingRecord, Method, NetworkDay, Portfolio, ShareBasis, TransactionRecord, WeightSource,
};

/// Split of one day's footprint between holdings and transactions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MethodWeights {
    pub date: NaiveDate,
    pub holding_weight: Fraction,
    pub transaction_weight: Fraction,
    pub consensus: ConsensusKind,
}

impl MethodWeights {
    pub fn from_transaction_weight(date: NaiveDate, transaction_weight: Fraction, consensus: ConsensusKind) -> Self {
        MethodWeights {
            date,
            holding_weight: transaction_weight.complement(),
            transaction_weight,
            consensus,
        }
    }

    pub fn source(&self) -> WeightSource {
        match self.consensus {
            ConsensusKind::ProofOfWork => WeightSource::FeeShare,
            ConsensusKind::ProofOfStake => WeightSource::PosTxShare,
        }
    }

    /// The split a method effectively applies: everything to holdings for
    /// the holding-based method, everything to transactions for the
    /// transaction-based one.
    pub fn for_method(&self, method: Method) -> MethodWeights {
        let transaction_weight = match method {
            Method::HoldingBased => Fraction::zero(),
            Method::TransactionBased => Fraction::one(),
            Method::Hybrid => return self.clone(),
        };
        MethodWeights::from_transaction_weight(self.date, transaction_weight, self.consensus)
    }

    pub fn weight_for(&self, activity: Activity) -> &Fraction {
        match activity {
            Activity::Holding => &self.holding_weight,
            Activity::Transaction => &self.transaction_weight,
        }
    }
}

/// Fees over total miner revenue for a PoW day.
pub fn fee_share(day: &NetworkDay) -> Result<Fraction, AllocationError> {
    let reward = day.block_reward.as_ref().ok_or(AllocationError::MissingColumn {
        date: day.date,
        column: "block_reward",
    })?;
    let fees = day.tx_fees_total.as_ref().ok_or(AllocationError::MissingColumn {
        date: day.date,
        column: "tx_fees_total",
    })?;
    let revenue = reward.value() + fees.value();
    if revenue.is_zero() {
        return Err(AllocationError::MalformedDay {
            date: day.date,
            reason: "zero miner revenue".into(),
        });
    }
    Ok(Fraction::new(fees.value() / revenue).expect("fees never exceed revenue"))
}

pub fn method_weights(day: &NetworkDay, params: &ConsensusParams) -> Result<MethodWeights, AllocationError> {
    let transaction_weight = match params.kind {
        ConsensusKind::ProofOfWork => fee_share(day)?,
        ConsensusKind::ProofOfStake => day.pos_tx_share.clone().ok_or(AllocationError::MissingColumn {
            date: day.date,
            column: "pos_tx_share",
        })?,
    };
    Ok(MethodWeights::from_transaction_weight(
        day.date,
        transaction_weight,
        params.kind,
    ))
}

pub fn holding_pool(day: &NetworkDay, weights: &MethodWeights) -> Energy {
    day.energy.times(&weights.holding_weight)
}

pub fn transaction_pool(day: &NetworkDay, weights: &MethodWeights) -> Energy {
    day.energy.times(&weights.transaction_weight)
}

fn check_date(day: &NetworkDay, date: NaiveDate) -> Result<(), AllocationError> {
    if day.date != date {
        return Err(AllocationError::DateMismatch {
            expected: day.date,
            found: date,
        });
    }
    Ok(())
}

fn check_method(method: Method, activity: Activity) -> Result<(), AllocationError> {
    if !method.covers(activity) {
        return Err(AllocationError::MethodMismatch { method, activity });
    }
    Ok(())
}

pub(crate) fn carbon_for(day: &NetworkDay, energy: &Energy) -> Option<Carbon> {
    day.emission_factor.as_ref().map(|f| carbonize(energy, f))
}

/// Pool selection shared by the network and application allocators.
pub(crate) struct PoolSpec {
    pub network_energy: Energy,
    pub transaction_weight: Option<(WeightSource, Fraction)>,
    pub factors: Vec<AuditFactor>,
}

impl PoolSpec {
    pub(crate) fn network(day: &NetworkDay, weights: &MethodWeights, method: Method, activity: Activity) -> Self {
        let mut spec = PoolSpec {
            network_energy: day.energy.clone(),
            transaction_weight: None,
            factors: Vec::new(),
        };
        if method == Method::Hybrid {
            spec.transaction_weight = Some((weights.source(), weights.transaction_weight.clone()));
            let kind = match activity {
                Activity::Holding => FactorKind::HoldingWeight,
                Activity::Transaction => FactorKind::TransactionWeight,
            };
            spec.factors.push(AuditFactor {
                kind,
                value: weights.weight_for(activity).value().clone(),
            });
        }
        spec
    }

    pub(crate) fn with_factor(mut self, kind: FactorKind, value: BigRational) -> Self {
        self.factors.push(AuditFactor { kind, value });
        self
    }

    pub(crate) fn pool(&self) -> Energy {
        self.factors
            .iter()
            .fold(self.network_energy.clone(), |e, f| e.scale(&f.value))
    }
}

/// A measured share of a pool.
pub(crate) struct EntityShare {
    pub basis: ShareBasis,
    pub quantity: BigRational,
    pub total: BigRational,
}

impl EntityShare {
    pub(crate) fn ratio(&self) -> BigRational {
        if self.total.is_zero() {
            BigRational::zero()
        } else {
            &self.quantity / &self.total
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn build_result(
    day: &NetworkDay,
    entity_id: &crate::model::EntityId,
    method: Method,
    activity: Activity,
    app_id: Option<String>,
    spec: PoolSpec,
    share: EntityShare,
) -> AllocationResult {
    let pool = spec.pool();
    let entity_share = share.ratio();
    let energy = pool.scale(&entity_share);
    let carbon = carbon_for(day, &energy);
    AllocationResult {
        entity_id: entity_id.clone(),
        date: day.date,
        method,
        activity,
        app_id,
        energy,
        carbon,
        audit: Audit {
            network_energy: spec.network_energy,
            transaction_weight: spec.transaction_weight,
            factors: spec.factors,
            pool,
            basis: share.basis,
            entity_quantity: share.quantity,
            basis_total: share.total,
            entity_share,
            origin: day.origin.clone(),
        },
    }
}

pub(crate) fn overflow(date: NaiveDate, entity: &str, quantity: &BigRational, total: &BigRational) -> AllocationError {
    AllocationError::ShareOverflow {
        date,
        entity: entity.to_string(),
        quantity: crate::decimal::to_exact_string(quantity),
        total: crate::decimal::to_exact_string(total),
    }
}

/// Allocates one holding. The pool is the whole day for the holding-based
/// method and the hybrid holding pool otherwise.
pub fn allocate_holding(
    day: &NetworkDay,
    weights: &MethodWeights,
    holding: &HoldingRecord,
    method: Method,
) -> Result<AllocationResult, AllocationError> {
    check_date(day, holding.date)?;
    check_method(method, Activity::Holding)?;
    let effective_supply = day.effective_supply();
    let amount = holding.amount.value();
    if *amount > effective_supply {
        return Err(overflow(
            day.date,
            holding.entity_id.as_str(),
            amount,
            &effective_supply,
        ));
    }
    let spec = PoolSpec::network(day, weights, method, Activity::Holding);
    let share = EntityShare {
        basis: ShareBasis::Holding,
        quantity: amount.clone(),
        total: effective_supply,
    };
    Ok(build_result(
        day,
        &holding.entity_id,
        method,
        Activity::Holding,
        None,
        spec,
        share,
    ))
}

/// Totals a transaction's share can be measured against.
pub(crate) struct BasisTotals {
    pub fees: Option<BigRational>,
    pub gas: Option<BigRational>,
    pub count: u64,
}

impl BasisTotals {
    fn of_day(day: &NetworkDay) -> Self {
        BasisTotals {
            fees: day.tx_fees_total.as_ref().map(|f| f.value().clone()),
            gas: day.gas_total.as_ref().map(|g| g.value().clone()),
            count: day.tx_count,
        }
    }
}

/// Fee, then gas, then count on PoW; gas, then fee, then count on PoS. A
/// basis is usable when the record carries it and the day total is positive.
pub(crate) fn select_basis(
    consensus: ConsensusKind,
    totals: &BasisTotals,
    tx: &TransactionRecord,
    scope: Option<&str>,
) -> Result<EntityShare, AllocationError> {
    if totals.count == 0 {
        return Err(AllocationError::NoTransactions {
            date: tx.date,
            entity: tx.entity_id.to_string(),
            scope: scope.map(str::to_string),
        });
    }
    if !tx.has_basis() {
        return Err(AllocationError::BasisUnavailable {
            date: tx.date,
            entity: tx.entity_id.to_string(),
        });
    }
    let order = match consensus {
        ConsensusKind::ProofOfWork => [ShareBasis::Fee, ShareBasis::Gas, ShareBasis::Count],
        ConsensusKind::ProofOfStake => [ShareBasis::Gas, ShareBasis::Fee, ShareBasis::Count],
    };
    let usable = |q: Option<BigRational>, t: &Option<BigRational>| match (q, t) {
        (Some(q), Some(t)) if !t.is_zero() => Some((q, t.clone())),
        _ => None,
    };
    let (basis, quantity, total) = order
        .iter()
        .find_map(|basis| {
            let pair = match basis {
                ShareBasis::Fee => usable(tx.fee_paid.as_ref().map(|f| f.value().clone()), &totals.fees),
                ShareBasis::Gas => usable(tx.gas_used.as_ref().map(|g| g.value().clone()), &totals.gas),
                ShareBasis::Count => Some((
                    BigRational::from_integer(tx.tx_count.unwrap_or(1).into()),
                    BigRational::from_integer(totals.count.into()),
                )),
                _ => None,
            };
            pair.map(|(q, t)| (*basis, q, t))
        })
        .expect("count basis is always usable");
    if quantity > total {
        return Err(overflow(tx.date, tx.entity_id.as_str(), &quantity, &total));
    }
    Ok(EntityShare { basis, quantity, total })
}

/// Allocates one transaction record. The pool is the whole day for the
/// transaction-based method and the hybrid transaction pool otherwise.
pub fn allocate_transaction(
    day: &NetworkDay,
    weights: &MethodWeights,
    tx: &TransactionRecord,
    method: Method,
) -> Result<AllocationResult, AllocationError> {
    check_date(day, tx.date)?;
    check_method(method, Activity::Transaction)?;
    let share = select_basis(weights.consensus, &BasisTotals::of_day(day), tx, None)?;
    let spec = PoolSpec::network(day, weights, method, Activity::Transaction);
    Ok(build_result(
        day,
        &tx.entity_id,
        method,
        Activity::Transaction,
        None,
        spec,
        share,
    ))
}

/// Period totals for one activity under one method.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SummaryRow {
    pub method: Method,
    pub activity: Activity,
    pub total: Energy,
    /// Mean of per-day allocations over every day of the period.
    pub daily_mean: Energy,
    /// Mean unweighted allocation times mean weight; equals `daily_mean`
    /// when weights are constant. Kept for reconciling against figures
    /// computed from annual averages.
    pub ratio_of_averages: Energy,
    pub total_carbon: Option<Carbon>,
    pub daily_mean_carbon: Option<Carbon>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PeriodSummary {
    pub days: usize,
    pub rows: Vec<SummaryRow>,
}

impl PeriodSummary {
    /// Summarises results over the period spanned by `weights` (one entry
    /// per day of the period).
    pub fn from_results(method: Method, results: &[AllocationResult], weights: &[MethodWeights]) -> Self {
        let days = weights.len();
        let divisor = BigRational::from_integer(days.max(1).into());
        let activities = [Activity::Holding, Activity::Transaction];
        let rows = activities
            .into_iter()
            .filter(|a| method.covers(*a) || results.iter().any(|r| r.activity == *a))
            .map(|activity| {
                let mine: Vec<&AllocationResult> = results.iter().filter(|r| r.activity == activity).collect();
                let total: Energy = mine.iter().map(|r| &r.energy).sum();
                let unweighted: Energy = mine.iter().map(|r| r.audit.unweighted_energy()).sum();
                let weight_sum: BigRational = weights
                    .iter()
                    .map(|w| w.for_method(method).weight_for(activity).value().clone())
                    .sum();
                let mean_weight = &weight_sum / &divisor;
                let total_carbon = mine
                    .iter()
                    .map(|r| r.carbon.clone())
                    .collect::<Option<Vec<Carbon>>>()
                    .map(|c| c.into_iter().sum::<Carbon>());
                let per_day = |e: &Energy| e.scale(&(BigRational::from_integer(1.into()) / &divisor));
                SummaryRow {
                    method,
                    activity,
                    daily_mean: per_day(&total),
                    ratio_of_averages: per_day(&unweighted).scale(&mean_weight),
                    daily_mean_carbon: total_carbon
                        .as_ref()
                        .map(|c| Carbon::from_grams(c.grams() / &divisor).expect("non-negative")),
                    total_carbon,
                    total,
                }
            })
            .collect();
        PeriodSummary { days, rows }
    }

    pub fn row(&self, activity: Activity) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.activity == activity)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PortfolioAllocation {
    pub results: Vec<AllocationResult>,
    pub summary: PeriodSummary,
}

pub(crate) fn check_ordered(days: &[NetworkDay]) -> Result<(), AllocationError> {
    for pair in days.windows(2) {
        if pair[1].date <= pair[0].date {
            return Err(AllocationError::UnorderedDays { date: pair[1].date });
        }
    }
    Ok(())
}

/// Allocates every record of a portfolio over a period of days.
///
/// Days are evaluated in parallel; results are ordered by
/// (date, entity, activity) with input order kept among equal keys.
pub fn allocate_portfolio(
    days: &[NetworkDay],
    params: &ConsensusParams,
    portfolio: &Portfolio,
    method: Method,
) -> Result<PortfolioAllocation, AllocationError> {
    check_ordered(days)?;
    let by_date: BTreeMap<NaiveDate, usize> = days.iter().enumerate().map(|(i, d)| (d.date, i)).collect();
    let missing: Vec<NaiveDate> = portfolio
        .dates()
        .into_iter()
        .filter(|d| !by_date.contains_key(d))
        .collect();
    if !missing.is_empty() {
        return Err(AllocationError::MissingDay { dates: missing });
    }

    let weights = days
        .iter()
        .map(|d| method_weights(d, params))
        .collect::<Result<Vec<_>, _>>()?;

    let mut holdings_by_day: Vec<Vec<&HoldingRecord>> = vec![Vec::new(); days.len()];
    for h in &portfolio.holdings {
        holdings_by_day[by_date[&h.date]].push(h);
    }
    let mut txs_by_day: Vec<Vec<&TransactionRecord>> = vec![Vec::new(); days.len()];
    for t in &portfolio.transactions {
        txs_by_day[by_date[&t.date]].push(t);
    }

    let per_day: Vec<Vec<AllocationResult>> = days
        .par_iter()
        .enumerate()
        .map(|(i, day)| {
            let mut out = Vec::new();
            if method.covers(Activity::Holding) {
                for h in &holdings_by_day[i] {
                    out.push(allocate_holding(day, &weights[i], h, method)?);
                }
            }
            if method.covers(Activity::Transaction) {
                for t in &txs_by_day[i] {
                    out.push(allocate_transaction(day, &weights[i], t, method)?);
                }
            }
            Ok(out)
        })
        .collect::<Result<_, AllocationError>>()?;

    let mut results: Vec<AllocationResult> = per_day.into_iter().flatten().collect();
    results.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    let summary = PeriodSummary::from_results(method, &results, &weights);
    Ok(PortfolioAllocation { results, summary })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decimal::parse_signed;
    use crate::model::{CoinAmount, EmissionFactor, EnergyUnit, Gas};
    use num::Signed;

    fn r(t: &str) -> BigRational {
        parse_signed(t).unwrap().value
    }

    fn coins(t: &str) -> CoinAmount {
        CoinAmount::new(r(t)).unwrap()
    }

    fn date() -> NaiveDate {
        NaiveDate::from_ymd_opt(2021, 6, 1).unwrap()
    }

    fn pow_day(energy_wh: &str, reward: &str, fees: &str, supply: &str, tx_count: u64) -> NetworkDay {
        NetworkDay::new(date(), Energy::from_wh(r(energy_wh)).unwrap(), coins(supply), tx_count)
            .with_revenue(coins(reward), coins(fees))
    }

    /// 283.75 GWh, fee share 0.0601, 18.716M coins, 263,260 transactions.
    fn btc_day() -> NetworkDay {
        pow_day("283750000000", "939.9", "60.1", "18716000", 263_260)
    }

    #[test]
    fn fee_share_examples() {
        assert!(fee_share(&pow_day("1", "6.25", "0", "1", 1)).unwrap().is_zero());
        assert_eq!(
            fee_share(&pow_day("1", "9.5", "0.5", "1", 1)).unwrap().value(),
            &r("0.05")
        );
        assert_eq!(fee_share(&btc_day()).unwrap().value(), &r("0.0601"));
    }

    #[test]
    fn fee_share_rejects_zero_revenue_and_missing_columns() {
        let day = pow_day("1", "0", "0", "1", 0);
        assert!(matches!(fee_share(&day), Err(AllocationError::MalformedDay { .. })));
        let day = NetworkDay::new(date(), Energy::zero(), coins("1"), 1);
        assert!(matches!(
            fee_share(&day),
            Err(AllocationError::MissingColumn {
                column: "block_reward",
                ..
            })
        ));
    }

    #[test]
    fn weights_examples() {
        let w = method_weights(&pow_day("1", "6.25", "0", "1", 1), &ConsensusParams::POW).unwrap();
        assert_eq!(
            (w.holding_weight, w.transaction_weight),
            (Fraction::one(), Fraction::zero())
        );

        let pos =
            NetworkDay::new(date(), Energy::zero(), coins("1"), 1).with_pos_tx_share(Fraction::parse("0.022").unwrap());
        let w = method_weights(&pos, &ConsensusParams::POS).unwrap();
        assert_eq!(w.holding_weight.value(), &r("0.978"));
        assert_eq!(w.transaction_weight.value(), &r("0.022"));

        let w = method_weights(&pow_day("1", "3", "3", "1", 1), &ConsensusParams::POW).unwrap();
        assert_eq!(w.holding_weight.value(), &r("0.5"));
        assert_eq!(w.transaction_weight.value(), &r("0.5"));

        let missing = NetworkDay::new(date(), Energy::zero(), coins("1"), 1);
        assert!(matches!(
            method_weights(&missing, &ConsensusParams::POS),
            Err(AllocationError::MissingColumn {
                column: "pos_tx_share",
                ..
            })
        ));
    }

    #[test]
    fn pools_examples() {
        let day = pow_day("100000", "1", "0", "1", 1);
        let w = method_weights(&day, &ConsensusParams::POW).unwrap();
        assert_eq!(holding_pool(&day, &w).wh(), &r("100000"));
        assert!(transaction_pool(&day, &w).is_zero());

        let day = btc_day();
        let w = method_weights(&day, &ConsensusParams::POW).unwrap();
        let h = holding_pool(&day, &w);
        let t = transaction_pool(&day, &w);
        // Oracle: independent decimal products.
        assert_eq!(h.wh(), &(r("283750000000") * r("0.9399")));
        assert_eq!(t.wh(), &(r("283750000000") * r("0.0601")));
        assert_eq!(crate::decimal::format_fixed(&h.in_unit(EnergyUnit::GWh), 2), "266.70");
        assert_eq!(crate::decimal::format_fixed(&t.in_unit(EnergyUnit::GWh), 2), "17.05");
        assert_eq!(&h + &t, day.energy);

        let zero = pow_day("0", "1", "1", "1", 1);
        let w = method_weights(&zero, &ConsensusParams::POW).unwrap();
        assert!(holding_pool(&zero, &w).is_zero() && transaction_pool(&zero, &w).is_zero());
    }

    #[test]
    fn whole_supply_holder_gets_whole_day() {
        let day = btc_day();
        let w = method_weights(&day, &ConsensusParams::POW).unwrap();
        let h = HoldingRecord::new("whale", date(), coins("18716000"));
        let res = allocate_holding(&day, &w, &h, Method::HoldingBased).unwrap();
        assert_eq!(res.energy, day.energy);
    }

    #[test]
    fn one_bitcoin_for_one_day() {
        let day = btc_day();
        let w = method_weights(&day, &ConsensusParams::POW).unwrap();
        let h = HoldingRecord::new("e", date(), coins("1"));
        let pure = allocate_holding(&day, &w, &h, Method::HoldingBased).unwrap();
        assert_eq!(pure.energy.wh(), &(r("283750000000") / r("18716000")));
        assert_eq!(crate::decimal::format_fixed(&pure.energy.kwh(), 2), "15.16");

        let hybrid = allocate_holding(&day, &w, &h, Method::Hybrid).unwrap();
        assert_eq!(hybrid.energy.wh(), &(pure.energy.wh() * r("0.9399")));
        assert_eq!(crate::decimal::format_fixed(&hybrid.energy.kwh(), 2), "14.25");
        // Within 1% of the published 14.21 kWh.
        let rel = (hybrid.energy.kwh() - r("14.21")) / r("14.21");
        assert!(rel < r("0.01"));
    }

    #[test]
    fn one_bitcoin_transaction() {
        let day = btc_day();
        let w = method_weights(&day, &ConsensusParams::POW).unwrap();
        let tx = TransactionRecord::new("e", date()).with_count(1);
        let pure = allocate_transaction(&day, &w, &tx, Method::TransactionBased).unwrap();
        assert_eq!(pure.audit.basis, ShareBasis::Count);
        // 283.75 GWh / 263,260 = 1,077.84 kWh; within 0.05% of 1,077.83.
        let rel = (pure.energy.kwh() - r("1077.83")) / r("1077.83");
        assert!(rel.abs() < r("0.0005"));

        let fee = r("60.1") / r("263260");
        let tx = TransactionRecord::new("e", date()).with_fee(CoinAmount::new(fee).unwrap());
        let hybrid = allocate_transaction(&day, &w, &tx, Method::Hybrid).unwrap();
        assert_eq!(hybrid.audit.basis, ShareBasis::Fee);
        assert_eq!(hybrid.energy.wh(), &(pure.energy.wh() * r("0.0601")));
        assert_eq!(crate::decimal::format_fixed(&hybrid.energy.kwh(), 2), "64.78");
        let rel = (hybrid.energy.kwh() - r("63.33")) / r("63.33");
        assert!(rel < r("0.03"));

        let all_fees = TransactionRecord::new("e", date()).with_fee(coins("60.1"));
        let res = allocate_transaction(&day, &w, &all_fees, Method::Hybrid).unwrap();
        assert_eq!(res.energy, transaction_pool(&day, &w));
    }

    #[test]
    fn basis_hierarchy_by_consensus() {
        let day = pow_day("1000", "1", "1", "10", 10).with_gas_total(Gas::from_integer(100));
        let w = method_weights(&day, &ConsensusParams::POW).unwrap();
        let tx = TransactionRecord::new("e", date())
            .with_fee(coins("0.5"))
            .with_gas(Gas::from_integer(10))
            .with_count(2);
        let res = allocate_transaction(&day, &w, &tx, Method::TransactionBased).unwrap();
        assert_eq!(res.audit.basis, ShareBasis::Fee);

        let pos_w = MethodWeights::from_transaction_weight(
            date(),
            Fraction::parse("0.5").unwrap(),
            ConsensusKind::ProofOfStake,
        );
        let res = allocate_transaction(&day, &pos_w, &tx, Method::TransactionBased).unwrap();
        assert_eq!(res.audit.basis, ShareBasis::Gas);
        assert_eq!(res.audit.entity_share, r("0.1"));

        // Gas missing on the day: PoS falls to fee, then count.
        let mut no_gas = day.clone();
        no_gas.gas_total = None;
        let res = allocate_transaction(&no_gas, &pos_w, &tx, Method::TransactionBased).unwrap();
        assert_eq!(res.audit.basis, ShareBasis::Fee);
        no_gas.tx_fees_total = None;
        let res = allocate_transaction(&no_gas, &pos_w, &tx, Method::TransactionBased).unwrap();
        assert_eq!(res.audit.basis, ShareBasis::Count);
        assert_eq!(res.audit.entity_share, r("0.2"));
    }

    #[test]
    fn transaction_errors() {
        let mut day = pow_day("1000", "1", "0", "10", 0);
        let w = method_weights(&day, &ConsensusParams::POW).unwrap();
        let tx = TransactionRecord::new("e", date()).with_count(1);
        assert!(matches!(
            allocate_transaction(&day, &w, &tx, Method::TransactionBased),
            Err(AllocationError::NoTransactions { .. })
        ));
        day.tx_count = 5;
        let bare = TransactionRecord::new("e", date());
        assert!(matches!(
            allocate_transaction(&day, &w, &bare, Method::TransactionBased),
            Err(AllocationError::BasisUnavailable { .. })
        ));
        let too_many = TransactionRecord::new("e", date()).with_count(6);
        assert!(matches!(
            allocate_transaction(&day, &w, &too_many, Method::TransactionBased),
            Err(AllocationError::ShareOverflow { .. })
        ));
        assert!(matches!(
            allocate_transaction(&day, &w, &tx, Method::HoldingBased),
            Err(AllocationError::MethodMismatch { .. })
        ));
        let other_day = TransactionRecord::new("e", date().succ_opt().unwrap()).with_count(1);
        assert!(matches!(
            allocate_transaction(&day, &w, &other_day, Method::TransactionBased),
            Err(AllocationError::DateMismatch { .. })
        ));
    }

    #[test]
    fn holding_errors_and_lost_coins() {
        let day = pow_day("1000", "1", "0", "100", 1).with_lost_coins(Fraction::parse("0.2").unwrap());
        let w = method_weights(&day, &ConsensusParams::POW).unwrap();
        let h = HoldingRecord::new("e", date(), coins("8"));
        let res = allocate_holding(&day, &w, &h, Method::HoldingBased).unwrap();
        assert_eq!(res.energy.wh(), &r("100"));
        let too_big = HoldingRecord::new("e", date(), coins("81"));
        assert!(matches!(
            allocate_holding(&day, &w, &too_big, Method::HoldingBased),
            Err(AllocationError::ShareOverflow { .. })
        ));
        assert!(matches!(
            allocate_holding(&day, &w, &h, Method::TransactionBased),
            Err(AllocationError::MethodMismatch { .. })
        ));
    }

    #[test]
    fn carbon_and_audit_replay() {
        let day = btc_day().with_emission_factor(EmissionFactor::parse("400").unwrap());
        let w = method_weights(&day, &ConsensusParams::POW).unwrap();
        let h = HoldingRecord::new("e", date(), coins("3.5"));
        let res = allocate_holding(&day, &w, &h, Method::Hybrid).unwrap();
        assert_eq!(res.carbon.as_ref().unwrap().grams(), &(res.energy.kwh() * r("400")));
        assert_eq!(res.audit.replay(), res.energy);
        assert_eq!(res.audit.replay_pool(), res.audit.pool);
        let (source, tw) = res.audit.transaction_weight.clone().unwrap();
        assert_eq!(source, WeightSource::FeeShare);
        assert_eq!(tw.value(), &r("0.0601"));

        let plain = allocate_holding(&btc_day(), &w, &h, Method::Hybrid).unwrap();
        assert!(plain.carbon.is_none());
    }

    #[test]
    fn portfolio_missing_days_and_ordering() {
        let day = btc_day();
        let mut p = Portfolio::new("bitcoin");
        let later = date().succ_opt().unwrap();
        p.holdings.push(HoldingRecord::new("e", later, coins("1")));
        let err =
            allocate_portfolio(std::slice::from_ref(&day), &ConsensusParams::POW, &p, Method::Hybrid).unwrap_err();
        assert_eq!(err, AllocationError::MissingDay { dates: vec![later] });

        let err =
            allocate_portfolio(&[day.clone(), day.clone()], &ConsensusParams::POW, &p, Method::Hybrid).unwrap_err();
        assert!(matches!(err, AllocationError::UnorderedDays { .. }));

        let empty = allocate_portfolio(
            std::slice::from_ref(&day),
            &ConsensusParams::POW,
            &Portfolio::new("bitcoin"),
            Method::Hybrid,
        )
        .unwrap();
        assert!(empty.results.is_empty());
        assert_eq!(empty.summary.rows.len(), 2);
        assert!(empty
            .summary
            .rows
            .iter()
            .all(|r| r.total.is_zero() && r.daily_mean.is_zero()));
    }

    #[test]
    fn portfolio_sorted_and_summarised() {
        let day = btc_day();
        let mut p = Portfolio::new("bitcoin");
        p.transactions.push(TransactionRecord::new("b", date()).with_count(1));
        p.holdings.push(HoldingRecord::new("b", date(), coins("2")));
        p.holdings.push(HoldingRecord::new("a", date(), coins("1")));
        let out = allocate_portfolio(std::slice::from_ref(&day), &ConsensusParams::POW, &p, Method::Hybrid).unwrap();
        let keys: Vec<(String, Activity)> = out
            .results
            .iter()
            .map(|r| (r.entity_id.to_string(), r.activity))
            .collect();
        assert_eq!(
            keys,
            vec![
                ("a".into(), Activity::Holding),
                ("b".into(), Activity::Holding),
                ("b".into(), Activity::Transaction)
            ]
        );
        let holding = out.summary.row(Activity::Holding).unwrap();
        assert_eq!(holding.total, &out.results[0].energy + &out.results[1].energy);
        assert_eq!(holding.daily_mean, holding.total);
        assert_eq!(holding.ratio_of_averages, holding.daily_mean);

        let pure = allocate_portfolio(
            std::slice::from_ref(&day),
            &ConsensusParams::POW,
            &p,
            Method::HoldingBased,
        )
        .unwrap();
        assert_eq!(pure.results.len(), 2);
        assert!(pure.summary.row(Activity::Transaction).is_none());
    }

    #[test]
    fn ratio_of_averages_differs_when_weights_vary() {
        let d1 = pow_day("1000", "1", "0", "10", 1);
        let mut d2 = pow_day("3000", "1", "1", "10", 1);
        d2.date = date().succ_opt().unwrap();
        let mut p = Portfolio::new("x");
        p.holdings.push(HoldingRecord::new("e", d1.date, coins("1")));
        p.holdings.push(HoldingRecord::new("e", d2.date, coins("1")));
        let out = allocate_portfolio(&[d1, d2], &ConsensusParams::POW, &p, Method::Hybrid).unwrap();
        let row = out.summary.row(Activity::Holding).unwrap();
        // Per-day: 100×1 and 300×0.5 → mean 125. Product of means: 200 × 0.75 = 150.
        assert_eq!(row.daily_mean.wh(), &r("125"));
        assert_eq!(row.ratio_of_averages.wh(), &r("150"));
    }
}
