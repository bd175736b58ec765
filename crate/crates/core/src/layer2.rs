//! Layer-2 networks and token networks.
//!
//! A layer-2 inherits the part of its host's transaction pool caused by its
//! anchoring transactions, adds its own infrastructure consumption, and then
//! allocates that total internally exactly as a layer-1 would. Hosts may
//! themselves be layer-2s, so L1 → L2 → L3 chains resolve by repetition.

use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;

use crate::engine::{allocate_portfolio, method_weights, transaction_pool, MethodWeights, PortfolioAllocation};
use crate::error::AllocationError;
use crate::model::{AllocationResult, ConsensusParams, DayOrigin, Energy, Fraction, Method, NetworkDay, Portfolio};

/// One day of a layer-2 (or token network).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layer2Day {
    pub l2_id: String,
    pub date: NaiveDate,
    /// Share of the host's fees (or gas) paid by this network's anchoring
    /// transactions.
    pub l1_fee_share: Fraction,
    pub infra_energy: Energy,
    pub params: ConsensusParams,
    /// Fractional digits of the network's coin.
    pub decimals: u32,
    /// Host network id; `None` for the dataset's layer-1.
    pub host: Option<String>,
    /// The network's own telemetry. Its energy is replaced by the computed
    /// total when allocating.
    pub internal: NetworkDay,
}

fn check_dates(host: &NetworkDay, l2: &Layer2Day) -> Result<(), AllocationError> {
    if host.date != l2.date {
        return Err(AllocationError::DateMismatch {
            expected: host.date,
            found: l2.date,
        });
    }
    Ok(())
}

/// Host transaction pool × the network's fee share on the host.
pub fn l2_inherited(
    host_day: &NetworkDay,
    host_weights: &MethodWeights,
    l2: &Layer2Day,
) -> Result<Energy, AllocationError> {
    check_dates(host_day, l2)?;
    Ok(transaction_pool(host_day, host_weights).times(&l2.l1_fee_share))
}

/// Inherited slice plus own infrastructure.
pub fn l2_total_footprint(
    host_day: &NetworkDay,
    host_weights: &MethodWeights,
    l2: &Layer2Day,
) -> Result<Energy, AllocationError> {
    Ok(l2_inherited(host_day, host_weights, l2)? + l2.infra_energy.clone())
}

/// The network's own day with its energy set to `total`, tagged with the
/// chain of networks it was derived from.
pub fn synthetic_day(l2: &Layer2Day, total: Energy, host_chain: &[String]) -> NetworkDay {
    let mut chain = host_chain.to_vec();
    chain.push(l2.l2_id.clone());
    NetworkDay {
        date: l2.date,
        energy: total,
        origin: DayOrigin::Synthetic { chain },
        ..l2.internal.clone()
    }
}

fn chain_of(day: &NetworkDay, fallback: &str) -> Vec<String> {
    match &day.origin {
        DayOrigin::Synthetic { chain } => chain.clone(),
        _ => vec![fallback.to_string()],
    }
}

/// Allocates a portfolio held on the layer-2 against its total footprint.
/// This is the layer-1 engine run on the synthetic day.
pub fn allocate_within_l2(
    total: Energy,
    l2_day: &Layer2Day,
    portfolio: &Portfolio,
    method: Method,
) -> Result<Vec<AllocationResult>, AllocationError> {
    let day = synthetic_day(l2_day, total, &[]);
    Ok(allocate_portfolio(std::slice::from_ref(&day), &l2_day.params, portfolio, method)?.results)
}

/// Resolves synthetic days for layer-2s (and their descendants) hosted on a
/// layer-1 dataset.
pub struct Layer2Resolver<'a> {
    network_id: &'a str,
    params: ConsensusParams,
    days: BTreeMap<NaiveDate, &'a NetworkDay>,
    l2s: BTreeMap<(&'a str, NaiveDate), &'a Layer2Day>,
}

impl<'a> Layer2Resolver<'a> {
    pub fn new(network_id: &'a str, params: ConsensusParams, days: &'a [NetworkDay], l2s: &'a [Layer2Day]) -> Self {
        Layer2Resolver {
            network_id,
            params,
            days: days.iter().map(|d| (d.date, d)).collect(),
            l2s: l2s.iter().map(|l| ((l.l2_id.as_str(), l.date), l)).collect(),
        }
    }

    pub fn knows(&self, l2_id: &str) -> bool {
        self.l2s.keys().any(|(id, _)| *id == l2_id)
    }

    pub fn params_of(&self, l2_id: &str) -> Option<ConsensusParams> {
        self.l2s.iter().find(|((id, _), _)| *id == l2_id).map(|(_, l)| l.params)
    }

    pub fn decimals_of(&self, l2_id: &str) -> Option<u32> {
        self.l2s
            .iter()
            .find(|((id, _), _)| *id == l2_id)
            .map(|(_, l)| l.decimals)
    }

    /// Dates on which the layer-2 has telemetry, ascending.
    pub fn dates_of(&self, l2_id: &str) -> Vec<NaiveDate> {
        self.l2s
            .keys()
            .filter(|(id, _)| *id == l2_id)
            .map(|(_, d)| *d)
            .collect()
    }

    fn host_day(
        &self,
        host: Option<&str>,
        date: NaiveDate,
        visiting: &mut BTreeSet<String>,
    ) -> Result<(NetworkDay, ConsensusParams), AllocationError> {
        match host {
            None => {
                let day = self
                    .days
                    .get(&date)
                    .ok_or(AllocationError::MissingDay { dates: vec![date] })?;
                Ok(((*day).clone(), self.params))
            }
            Some(id) => {
                let l2 = self.lookup(id, date)?;
                Ok((self.resolve(l2, visiting)?, l2.params))
            }
        }
    }

    fn lookup(&self, l2_id: &str, date: NaiveDate) -> Result<&'a Layer2Day, AllocationError> {
        if !self.knows(l2_id) {
            return Err(AllocationError::UnknownLayer2(l2_id.to_string()));
        }
        self.l2s
            .get(&(l2_id, date))
            .copied()
            .ok_or(AllocationError::MissingDay { dates: vec![date] })
    }

    fn resolve(&self, l2: &Layer2Day, visiting: &mut BTreeSet<String>) -> Result<NetworkDay, AllocationError> {
        if !visiting.insert(l2.l2_id.clone()) {
            return Err(AllocationError::CyclicLayer2(l2.l2_id.clone()));
        }
        let (host_day, host_params) = self.host_day(l2.host.as_deref(), l2.date, visiting)?;
        let host_weights = method_weights(&host_day, &host_params)?;
        let total = l2_total_footprint(&host_day, &host_weights, l2)?;
        visiting.remove(&l2.l2_id);
        Ok(synthetic_day(l2, total, &chain_of(&host_day, self.network_id)))
    }

    /// The layer-2's synthetic day for `date`.
    pub fn synthetic_day(&self, l2_id: &str, date: NaiveDate) -> Result<NetworkDay, AllocationError> {
        let l2 = self.lookup(l2_id, date)?;
        self.resolve(l2, &mut BTreeSet::new())
    }

    /// Allocates a layer-2 portfolio over the given dates.
    pub fn allocate(
        &self,
        l2_id: &str,
        dates: &[NaiveDate],
        portfolio: &Portfolio,
        method: Method,
    ) -> Result<PortfolioAllocation, AllocationError> {
        let params = self
            .params_of(l2_id)
            .ok_or_else(|| AllocationError::UnknownLayer2(l2_id.to_string()))?;
        let days = dates
            .iter()
            .map(|d| self.synthetic_day(l2_id, *d))
            .collect::<Result<Vec<_>, _>>()?;
        allocate_portfolio(&days, &params, portfolio, method)
    }
}
