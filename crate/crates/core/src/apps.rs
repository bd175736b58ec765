//! Allocation of a network's transaction pool to layer-1 applications,
//! fungible tokens and NFTs.
//!
//! An application's pool is its share of the host's transaction pool. It is
//! an overlay: whatever registered applications do not claim stays with the
//! network-level transaction allocation, and nothing is ever drawn from the
//! holding pool. NFTs are tokens whose supply is the number of items.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use num::{BigRational, One, Zero};

use crate::engine::{
    build_result, check_ordered, method_weights, overflow, select_basis, transaction_pool, BasisTotals, EntityShare,
    MethodWeights, PoolSpec,
};
use crate::error::AllocationError;
use crate::model::{
    Activity, AllocationResult, CoinAmount, ConsensusKind, ConsensusParams, Energy, EntityId, FactorKind, Fraction,
    Method, NetworkDay, ShareBasis, TransactionRecord,
};

/// One day of an application's footprint inputs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AppDay {
    pub app_id: String,
    pub date: NaiveDate,
    /// Share of the network's fees (PoW) or gas (PoS) spent on this app.
    pub app_fee_share: Fraction,
    /// Absent for applications without a token.
    pub token_supply: Option<CoinAmount>,
    pub app_tx_count: u64,
}

/// Average token balance held over one day.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenHolding {
    pub entity_id: EntityId,
    pub app_id: String,
    pub date: NaiveDate,
    pub amount: CoinAmount,
}

impl TokenHolding {
    pub fn new(entity_id: impl Into<String>, app_id: impl Into<String>, date: NaiveDate, amount: CoinAmount) -> Self {
        TokenHolding {
            entity_id: EntityId::new(entity_id),
            app_id: app_id.into(),
            date,
            amount,
        }
    }
}

/// Which of the three application approaches to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AppApproach {
    /// Only app transactions carry the app's footprint.
    Transaction,
    /// Token holders carry the app's footprint in proportion to supply held.
    TokenHolding,
    /// The app pool is split by the host's weights between the two.
    Hybrid,
}

impl std::str::FromStr for AppApproach {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "transaction" => Ok(AppApproach::Transaction),
            "token" | "token-holding" => Ok(AppApproach::TokenHolding),
            "hybrid" => Ok(AppApproach::Hybrid),
            other => Err(format!("unknown application approach `{other}`")),
        }
    }
}

/// app pool = transaction pool × app fee share.
pub fn app_pool(day: &NetworkDay, weights: &MethodWeights, app: &AppDay) -> Result<Energy, AllocationError> {
    if app.date != day.date {
        return Err(AllocationError::DateMismatch {
            expected: day.date,
            found: app.date,
        });
    }
    Ok(transaction_pool(day, weights).times(&app.app_fee_share))
}

/// Transaction-pool energy left after every registered app has taken its
/// share.
pub fn unattributed_remainder(
    day: &NetworkDay,
    weights: &MethodWeights,
    apps: &[AppDay],
) -> Result<Energy, AllocationError> {
    let claimed: BigRational = apps.iter().map(|a| a.app_fee_share.value().clone()).sum();
    if claimed > BigRational::one() {
        return Err(AllocationError::MalformedDay {
            date: day.date,
            reason: "application fee shares sum to more than 1".into(),
        });
    }
    let pools = apps
        .iter()
        .map(|a| app_pool(day, weights, a))
        .collect::<Result<Vec<_>, _>>()?;
    let total = transaction_pool(day, weights);
    let used: Energy = pools.iter().sum();
    Ok(Energy::from_wh(total.wh() - used.wh()).expect("shares sum to at most 1"))
}

/// An application's pool on one day together with the totals its
/// transactions are measured against.
#[derive(Debug, Clone)]
pub struct AppScope<'a> {
    day: &'a NetworkDay,
    app: &'a AppDay,
    weights: MethodWeights,
}

impl<'a> AppScope<'a> {
    /// `weights` decides the transaction pool the app draws from; pass the
    /// host's hybrid weights, or [`MethodWeights::for_method`] for a pure
    /// method.
    pub fn new(day: &'a NetworkDay, weights: &MethodWeights, app: &'a AppDay) -> Result<Self, AllocationError> {
        if app.date != day.date {
            return Err(AllocationError::DateMismatch {
                expected: day.date,
                found: app.date,
            });
        }
        Ok(AppScope {
            day,
            app,
            weights: weights.clone(),
        })
    }

    pub fn pool(&self) -> Energy {
        transaction_pool(self.day, &self.weights).times(&self.app.app_fee_share)
    }

    pub fn app(&self) -> &AppDay {
        self.app
    }

    fn spec(&self) -> PoolSpec {
        PoolSpec {
            network_energy: self.day.energy.clone(),
            transaction_weight: Some((self.weights.source(), self.weights.transaction_weight.clone())),
            factors: Vec::new(),
        }
        .with_factor(
            FactorKind::TransactionWeight,
            self.weights.transaction_weight.value().clone(),
        )
        .with_factor(FactorKind::AppFeeShare, self.app.app_fee_share.value().clone())
    }

    /// The app's fees (PoW) or gas (PoS) follow from its share of the day's
    /// totals; the count basis uses the app's own transaction count.
    fn totals(&self) -> BasisTotals {
        let share = self.app.app_fee_share.value();
        match self.weights.consensus {
            ConsensusKind::ProofOfWork => BasisTotals {
                fees: self.day.tx_fees_total.as_ref().map(|f| f.value() * share),
                gas: None,
                count: self.app.app_tx_count,
            },
            ConsensusKind::ProofOfStake => BasisTotals {
                fees: None,
                gas: self.day.gas_total.as_ref().map(|g| g.value() * share),
                count: self.app.app_tx_count,
            },
        }
    }

    fn check_tx(&self, tx: &TransactionRecord) -> Result<(), AllocationError> {
        if tx.date != self.day.date {
            return Err(AllocationError::DateMismatch {
                expected: self.day.date,
                found: tx.date,
            });
        }
        Ok(())
    }

    fn tx_result(
        &self,
        tx: &TransactionRecord,
        method: Method,
        extra: Option<(FactorKind, BigRational)>,
    ) -> Result<AllocationResult, AllocationError> {
        self.check_tx(tx)?;
        let share = select_basis(self.weights.consensus, &self.totals(), tx, Some(&self.app.app_id))?;
        let mut spec = self.spec();
        if let Some((kind, value)) = extra {
            spec = spec.with_factor(kind, value);
        }
        Ok(build_result(
            self.day,
            &tx.entity_id,
            method,
            Activity::Transaction,
            Some(self.app.app_id.clone()),
            spec,
            share,
        ))
    }

    fn holding_result(
        &self,
        holding: &TokenHolding,
        method: Method,
        extra: Option<(FactorKind, BigRational)>,
    ) -> Result<AllocationResult, AllocationError> {
        if holding.date != self.day.date {
            return Err(AllocationError::DateMismatch {
                expected: self.day.date,
                found: holding.date,
            });
        }
        let supply = match &self.app.token_supply {
            Some(s) if !s.is_zero() => s.value().clone(),
            _ => {
                return Err(AllocationError::NotAToken {
                    app_id: self.app.app_id.clone(),
                    date: self.app.date,
                })
            }
        };
        let amount = holding.amount.value();
        if *amount > supply {
            return Err(overflow(holding.date, holding.entity_id.as_str(), amount, &supply));
        }
        let mut spec = self.spec();
        if let Some((kind, value)) = extra {
            spec = spec.with_factor(kind, value);
        }
        let share = EntityShare {
            basis: ShareBasis::TokenHolding,
            quantity: amount.clone(),
            total: supply,
        };
        Ok(build_result(
            self.day,
            &holding.entity_id,
            method,
            Activity::Holding,
            Some(self.app.app_id.clone()),
            spec,
            share,
        ))
    }
}

/// Transaction-only approach: the whole app pool by share of the app's
/// fees, gas or transactions.
pub fn allocate_app_transaction(
    scope: &AppScope<'_>,
    tx: &TransactionRecord,
) -> Result<AllocationResult, AllocationError> {
    scope.tx_result(tx, Method::TransactionBased, None)
}

/// Token-holding approach: the whole app pool by share of token supply.
pub fn allocate_token_holding(
    scope: &AppScope<'_>,
    holding: &TokenHolding,
) -> Result<AllocationResult, AllocationError> {
    scope.holding_result(holding, Method::HoldingBased, None)
}

/// Hybrid approach: the app pool is split by the host's weights, the holding
/// slice going to token holders and the transaction slice to app
/// transactions. Applications without a token fall back to the
/// transaction-only approach and holdings receive nothing.
pub fn allocate_app_hybrid(
    scope: &AppScope<'_>,
    host_weights: &MethodWeights,
    holdings: &[TokenHolding],
    txs: &[TransactionRecord],
) -> Result<Vec<AllocationResult>, AllocationError> {
    if scope.app.token_supply.is_none() {
        return txs.iter().map(|t| allocate_app_transaction(scope, t)).collect();
    }
    let holding_weight = (
        FactorKind::AppHoldingWeight,
        host_weights.holding_weight.value().clone(),
    );
    let tx_weight = (
        FactorKind::AppTransactionWeight,
        host_weights.transaction_weight.value().clone(),
    );
    let mut out = Vec::with_capacity(holdings.len() + txs.len());
    for h in holdings {
        out.push(scope.holding_result(h, Method::Hybrid, Some(holding_weight.clone()))?);
    }
    for t in txs {
        out.push(scope.tx_result(t, Method::Hybrid, Some(tx_weight.clone()))?);
    }
    Ok(out)
}

/// Runs one application approach over a period.
///
/// `network_method` selects the transaction pool apps draw from (none under
/// the holding-based method); the hybrid approach splits within the app by
/// the host's hybrid weights. Results are sorted like
/// [`crate::allocate_portfolio`].
pub fn allocate_apps(
    days: &[NetworkDay],
    params: &ConsensusParams,
    apps: &[AppDay],
    token_holdings: &[TokenHolding],
    app_txs: &[TransactionRecord],
    network_method: Method,
    approach: AppApproach,
) -> Result<Vec<AllocationResult>, AllocationError> {
    check_ordered(days)?;
    let days_by_date: BTreeMap<NaiveDate, &NetworkDay> = days.iter().map(|d| (d.date, d)).collect();
    let apps_by_key: BTreeMap<(&str, NaiveDate), &AppDay> = apps
        .iter()
        .map(|a| (a.app_id.as_str(), a.date))
        .zip(apps.iter())
        .collect();

    let mut missing: Vec<NaiveDate> = token_holdings
        .iter()
        .map(|h| h.date)
        .chain(app_txs.iter().map(|t| t.date))
        .filter(|d| !days_by_date.contains_key(d))
        .collect();
    missing.sort_unstable();
    missing.dedup();
    if !missing.is_empty() {
        return Err(AllocationError::MissingDay { dates: missing });
    }

    type Group<'r> = (Vec<&'r TokenHolding>, Vec<&'r TransactionRecord>);
    let mut groups: BTreeMap<(NaiveDate, &str), Group<'_>> = BTreeMap::new();
    for h in token_holdings {
        groups.entry((h.date, h.app_id.as_str())).or_default().0.push(h);
    }
    for t in app_txs {
        let app_id = t.app_id.as_deref().unwrap_or_default();
        groups.entry((t.date, app_id)).or_default().1.push(t);
    }

    let mut results = Vec::new();
    for ((date, app_id), (holdings, txs)) in groups {
        let app = apps_by_key
            .get(&(app_id, date))
            .ok_or_else(|| AllocationError::UnknownApp {
                app_id: app_id.to_string(),
                date,
            })?;
        let day = days_by_date[&date];
        let host = method_weights(day, params)?;
        let scope = AppScope::new(day, &host.for_method(network_method), app)?;
        match approach {
            AppApproach::Transaction => {
                for t in txs {
                    results.push(allocate_app_transaction(&scope, t)?);
                }
            }
            AppApproach::TokenHolding => {
                for h in holdings {
                    results.push(allocate_token_holding(&scope, h)?);
                }
            }
            AppApproach::Hybrid => {
                let holdings: Vec<TokenHolding> = holdings.into_iter().cloned().collect();
                let txs: Vec<TransactionRecord> = txs.into_iter().cloned().collect();
                results.extend(allocate_app_hybrid(&scope, &host, &holdings, &txs)?);
            }
        }
    }
    results.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    Ok(results)
}

/// Whether application fee shares sum to at most one on every day.
pub fn fee_shares_within_bounds(apps: &[AppDay]) -> bool {
    let mut per_day: BTreeMap<NaiveDate, BigRational> = BTreeMap::new();
    for a in apps {
        *per_day.entry(a.date).or_insert_with(BigRational::zero) += a.app_fee_share.value();
    }
    per_day.values().all(|s| *s <= BigRational::one())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decimal::parse_signed;
    use crate::model::Gas;

    fn r(t: &str) -> BigRational {
        parse_signed(t).unwrap().value
    }

    fn coins(t: &str) -> CoinAmount {
        CoinAmount::new(r(t)).unwrap()
    }

    fn date() -> NaiveDate {
        NaiveDate::from_ymd_opt(2021, 3, 1).unwrap()
    }

    /// 1000 Wh, fee share 0.266 (Ethereum 2021), 1000 transactions.
    fn eth_day() -> NetworkDay {
        NetworkDay::new(date(), Energy::from_wh(r("1000")).unwrap(), coins("115000000"), 1000)
            .with_revenue(coins("734"), coins("266"))
    }

    fn app(share: &str, supply: Option<&str>, txs: u64) -> AppDay {
        AppDay {
            app_id: "uniswap".into(),
            date: date(),
            app_fee_share: Fraction::parse(share).unwrap(),
            token_supply: supply.map(coins),
            app_tx_count: txs,
        }
    }

    #[test]
    fn pool_examples() {
        let day = eth_day();
        let w = method_weights(&day, &ConsensusParams::POW).unwrap();
        assert!(app_pool(&day, &w, &app("0", None, 0)).unwrap().is_zero());
        // Transaction pool of exactly 100 Wh.
        let tw =
            MethodWeights::from_transaction_weight(date(), Fraction::parse("0.1").unwrap(), ConsensusKind::ProofOfWork);
        assert_eq!(app_pool(&day, &tw, &app("0.5", None, 1)).unwrap().wh(), &r("50"));
    }

    #[test]
    fn token_example_five_percent_of_transaction_pool() {
        let day = eth_day();
        let w = method_weights(&day, &ConsensusParams::POW).unwrap();
        let a = app("0.5", Some("1000000"), 10);
        let scope = AppScope::new(&day, &w, &a).unwrap();
        let h = TokenHolding::new("fund", "uniswap", date(), coins("100000"));
        let res = allocate_token_holding(&scope, &h).unwrap();
        assert_eq!(res.energy, transaction_pool(&day, &w).scale(&r("0.05")));
        assert_eq!(res.audit.replay(), res.energy);

        let whole = TokenHolding::new("fund", "uniswap", date(), coins("1000000"));
        assert_eq!(allocate_token_holding(&scope, &whole).unwrap().energy, scope.pool());
        let none = TokenHolding::new("fund", "uniswap", date(), coins("0"));
        assert!(allocate_token_holding(&scope, &none).unwrap().energy.is_zero());
    }

    #[test]
    fn app_transactions() {
        let day = eth_day();
        let w = method_weights(&day, &ConsensusParams::POW).unwrap();
        let a = app("0.5", None, 1);
        let scope = AppScope::new(&day, &w, &a).unwrap();
        let only = TransactionRecord::new("e", date()).with_count(1).in_app("uniswap");
        assert_eq!(allocate_app_transaction(&scope, &only).unwrap().energy, scope.pool());

        // 1% of the app's fees (app fees = 0.5 × 266 = 133).
        let a = app("0.5", None, 50);
        let scope = AppScope::new(&day, &w, &a).unwrap();
        let tx = TransactionRecord::new("e", date()).with_fee(coins("1.33"));
        let res = allocate_app_transaction(&scope, &tx).unwrap();
        assert_eq!(res.audit.basis, ShareBasis::Fee);
        assert_eq!(res.energy, scope.pool().scale(&r("0.01")));

        let idle = app("0.5", None, 0);
        let scope = AppScope::new(&day, &w, &idle).unwrap();
        assert!(matches!(
            allocate_app_transaction(&scope, &only),
            Err(AllocationError::NoTransactions { .. })
        ));
    }

    #[test]
    fn pos_apps_use_gas() {
        let day = NetworkDay::new(date(), Energy::from_wh(r("1000")).unwrap(), coins("100"), 100)
            .with_pos_tx_share(Fraction::parse("0.022").unwrap())
            .with_gas_total(Gas::from_integer(10_000));
        let w = method_weights(&day, &ConsensusParams::POS).unwrap();
        let a = app("0.25", None, 20);
        let scope = AppScope::new(&day, &w, &a).unwrap();
        let tx = TransactionRecord::new("e", date())
            .with_gas(Gas::from_integer(250))
            .with_fee(coins("1"));
        let res = allocate_app_transaction(&scope, &tx).unwrap();
        assert_eq!(res.audit.basis, ShareBasis::Gas);
        assert_eq!(res.audit.entity_share, r("0.1"));
    }

    #[test]
    fn not_a_token() {
        let day = eth_day();
        let w = method_weights(&day, &ConsensusParams::POW).unwrap();
        let a = app("0.5", None, 1);
        let scope = AppScope::new(&day, &w, &a).unwrap();
        let h = TokenHolding::new("fund", "uniswap", date(), coins("1"));
        assert!(matches!(
            allocate_token_holding(&scope, &h),
            Err(AllocationError::NotAToken { .. })
        ));
    }

    #[test]
    fn hybrid_boundaries_and_ethereum_weights() {
        let day = eth_day();
        let host = method_weights(&day, &ConsensusParams::POW).unwrap();
        let a = app("0.5", Some("1000"), 4);
        let scope = AppScope::new(&day, &host, &a).unwrap();
        let h = TokenHolding::new("fund", "uniswap", date(), coins("100"));
        let tx = TransactionRecord::new("t", date()).with_count(1);

        let all_hold = MethodWeights::from_transaction_weight(date(), Fraction::zero(), ConsensusKind::ProofOfWork);
        let res = allocate_app_hybrid(&scope, &all_hold, std::slice::from_ref(&h), std::slice::from_ref(&tx)).unwrap();
        assert_eq!(res[0].energy, allocate_token_holding(&scope, &h).unwrap().energy);
        assert!(res[1].energy.is_zero());

        let all_tx = MethodWeights::from_transaction_weight(date(), Fraction::one(), ConsensusKind::ProofOfWork);
        let res = allocate_app_hybrid(&scope, &all_tx, std::slice::from_ref(&h), std::slice::from_ref(&tx)).unwrap();
        assert!(res[0].energy.is_zero());
        assert_eq!(res[1].energy, allocate_app_transaction(&scope, &tx).unwrap().energy);

        // Host weights (0.734, 0.266): 10% of tokens, no transactions.
        let res = allocate_app_hybrid(&scope, &host, std::slice::from_ref(&h), &[]).unwrap();
        assert_eq!(res[0].energy, scope.pool().scale(&(r("0.10") * r("0.734"))));
        assert_eq!(res[0].audit.replay(), res[0].energy);
    }

    #[test]
    fn hybrid_falls_back_without_token() {
        let day = eth_day();
        let host = method_weights(&day, &ConsensusParams::POW).unwrap();
        let a = app("0.5", None, 4);
        let scope = AppScope::new(&day, &host, &a).unwrap();
        let tx = TransactionRecord::new("t", date()).with_count(1);
        let hybrid = allocate_app_hybrid(&scope, &host, &[], std::slice::from_ref(&tx)).unwrap();
        assert_eq!(hybrid, vec![allocate_app_transaction(&scope, &tx).unwrap()]);
    }

    #[test]
    fn remainder_closes_transaction_pool() {
        let day = eth_day();
        let w = method_weights(&day, &ConsensusParams::POW).unwrap();
        let mut b = app("0.2", None, 1);
        b.app_id = "opensea".into();
        let apps = vec![app("0.5", None, 1), b];
        let rem = unattributed_remainder(&day, &w, &apps).unwrap();
        let pools: Energy = apps.iter().map(|a| app_pool(&day, &w, a).unwrap()).sum();
        assert_eq!(pools + rem, transaction_pool(&day, &w));
        assert!(fee_shares_within_bounds(&apps));

        let over = vec![app("0.6", None, 1), app("0.6", None, 1)];
        assert!(!fee_shares_within_bounds(&over));
        assert!(unattributed_remainder(&day, &w, &over).is_err());
    }

    #[test]
    fn period_run_routes_by_approach() {
        let day = eth_day();
        let a = app("0.5", Some("1000"), 4);
        let h = TokenHolding::new("fund", "uniswap", date(), coins("100"));
        let tx = TransactionRecord::new("t", date()).with_count(1).in_app("uniswap");
        let run = |approach| {
            allocate_apps(
                std::slice::from_ref(&day),
                &ConsensusParams::POW,
                std::slice::from_ref(&a),
                std::slice::from_ref(&h),
                std::slice::from_ref(&tx),
                Method::Hybrid,
                approach,
            )
            .unwrap()
        };
        assert_eq!(run(AppApproach::Hybrid).len(), 2);
        let only_tx = run(AppApproach::Transaction);
        assert_eq!(only_tx.len(), 1);
        assert_eq!(only_tx[0].activity, Activity::Transaction);
        assert_eq!(run(AppApproach::TokenHolding)[0].activity, Activity::Holding);

        let holding_only = allocate_apps(
            std::slice::from_ref(&day),
            &ConsensusParams::POW,
            std::slice::from_ref(&a),
            std::slice::from_ref(&h),
            &[],
            Method::HoldingBased,
            AppApproach::Hybrid,
        )
        .unwrap();
        assert!(holding_only[0].energy.is_zero());

        let stray = TokenHolding::new("fund", "sushi", date(), coins("1"));
        let err = allocate_apps(
            std::slice::from_ref(&day),
            &ConsensusParams::POW,
            std::slice::from_ref(&a),
            std::slice::from_ref(&stray),
            &[],
            Method::Hybrid,
            AppApproach::Hybrid,
        )
        .unwrap_err();
        assert!(matches!(err, AllocationError::UnknownApp { .. }));
    }
}
