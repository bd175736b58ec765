//! Python bindings. Quantities cross the boundary as decimal strings (or
//! `p/q` when a value has no finite decimal expansion) so nothing is lost to
//! floating point.

use std::collections::BTreeMap;
use std::path::PathBuf;

use chrono::NaiveDate;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use carbon_ledger::apps::{allocate_apps, AppApproach};
use carbon_ledger::decimal::{self, parse_exact_string, to_exact_string};
use carbon_ledger::engine::{self, method_weights, PeriodSummary};
use carbon_ledger::ingest::{
    self, fill_forward, parse_apps_json, parse_l2_json, parse_portfolio_json, read_network_csv, write_network_csv,
    write_portfolio_json, Dataset, IngestError, NetworkProfile,
};
use carbon_ledger::layer2::Layer2Resolver;
use carbon_ledger::model::{
    self as m, AllocationResult, CoinAmount, EmissionFactor, Energy, EnergyUnit, Gas, HoldingRecord, Method, Portfolio,
    TransactionRecord,
};
use carbon_ledger::report::{self, ComparisonTable, Format};
use carbon_ledger::AllocationError;

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn ingest_error(e: IngestError) -> PyErr {
    if e.is_io() {
        PyIOError::new_err(e.to_string())
    } else {
        value_error(e)
    }
}

fn alloc_error(e: AllocationError) -> PyErr {
    value_error(e)
}

fn parse_date(token: &str) -> PyResult<NaiveDate> {
    NaiveDate::parse_from_str(token, "%Y-%m-%d").map_err(|_| value_error(format!("`{token}` is not a YYYY-MM-DD date")))
}

fn opt_date(token: Option<&str>) -> PyResult<Option<NaiveDate>> {
    token.map(parse_date).transpose()
}

fn rational(token: &str) -> PyResult<num::BigRational> {
    decimal::parse_non_negative(token).map(|p| p.value).map_err(value_error)
}

fn parse_method(token: &str) -> PyResult<Method> {
    token.parse().map_err(value_error)
}

/// Validated telemetry for one network.
#[pyclass(name = "Dataset", module = "carbon_ledger_py", frozen)]
struct PyDataset {
    inner: Dataset,
}

#[pymethods]
impl PyDataset {
    /// Loads a network CSV. `network` is `bitcoin`, `ethereum`,
    /// `ethereum-pos`, or `<id>:<pow|pos>[:<decimals>]`.
    #[staticmethod]
    fn load_csv(path: PathBuf, network: &str) -> PyResult<Self> {
        let profile = NetworkProfile::resolve(network).map_err(value_error)?;
        let inner = ingest::load_network_csv(&path, &profile).map_err(ingest_error)?;
        Ok(PyDataset { inner })
    }

    #[staticmethod]
    fn from_csv(text: &str, network: &str) -> PyResult<Self> {
        let profile = NetworkProfile::resolve(network).map_err(value_error)?;
        let inner = read_network_csv(text.as_bytes(), &profile).map_err(ingest_error)?;
        Ok(PyDataset { inner })
    }

    #[getter]
    fn network_id(&self) -> &str {
        &self.inner.network_id
    }

    #[getter]
    fn consensus(&self) -> String {
        self.inner.consensus.kind.to_string()
    }

    fn __len__(&self) -> usize {
        self.inner.days.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(network_id={:?}, days={})",
            self.inner.network_id,
            self.inner.days.len()
        )
    }

    fn dates(&self) -> Vec<String> {
        self.inner.days.iter().map(|d| d.date.to_string()).collect()
    }

    /// Days within an inclusive range.
    #[pyo3(signature = (start=None, end=None))]
    fn between(&self, start: Option<&str>, end: Option<&str>) -> PyResult<Self> {
        let mut inner = self.inner.clone();
        inner.days = inner.days_between(opt_date(start)?, opt_date(end)?);
        Ok(PyDataset { inner })
    }

    /// Copies the last earlier day into gaps; copies are marked in the audit.
    #[pyo3(signature = (start=None, end=None))]
    fn fill_forward(&self, start: Option<&str>, end: Option<&str>) -> PyResult<Self> {
        let mut inner = self.inner.clone();
        inner.days = fill_forward(&inner.days, opt_date(start)?, opt_date(end)?);
        Ok(PyDataset { inner })
    }

    /// Canonical CSV text.
    fn to_csv(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        write_network_csv(&mut buf, &self.inner.days).map_err(|e| PyIOError::new_err(e.to_string()))?;
        Ok(String::from_utf8(buf).expect("utf-8"))
    }

    /// `(date, transaction_weight)` per day, exact.
    fn weights(&self) -> PyResult<Vec<(String, String)>> {
        let series = report::weight_series(&self.inner.days, &self.inner.consensus).map_err(alloc_error)?;
        Ok(series
            .iter()
            .map(|w| (w.date.to_string(), to_exact_string(w.transaction_weight.value())))
            .collect())
    }

    /// One-coin and one-average-transaction daily means in Wh, keyed by
    /// column; `None` where a method does not cover the activity.
    fn compare(&self) -> PyResult<BTreeMap<String, Option<String>>> {
        let row =
            report::compare(&self.inner.network_id, &self.inner.days, &self.inner.consensus).map_err(alloc_error)?;
        Ok(row
            .cells
            .iter()
            .map(|c| (c.column(), c.energy.as_ref().map(|e| to_exact_string(e.wh()))))
            .collect())
    }

    /// The comparison as an aligned text table (or `csv` / `json`).
    #[pyo3(signature = (format="text", carbon=false))]
    fn compare_table(&self, format: &str, carbon: bool) -> PyResult<String> {
        let format: Format = format.parse().map_err(value_error)?;
        let row =
            report::compare(&self.inner.network_id, &self.inner.days, &self.inner.consensus).map_err(alloc_error)?;
        Ok(ComparisonTable { rows: vec![row] }.render(format, carbon))
    }
}

/// Holdings and transactions of one or more entities on one network.
#[pyclass(name = "Portfolio", module = "carbon_ledger_py")]
struct PyPortfolio {
    inner: Portfolio,
}

#[pymethods]
impl PyPortfolio {
    #[new]
    fn new(network_id: &str) -> Self {
        PyPortfolio {
            inner: Portfolio::new(network_id),
        }
    }

    /// Parses portfolio JSON using the dataset's coin denomination.
    #[staticmethod]
    fn from_json(text: &str, dataset: &PyDataset) -> PyResult<Self> {
        let inner = parse_portfolio_json(text, &dataset.inner.profile()).map_err(ingest_error)?;
        Ok(PyPortfolio { inner })
    }

    fn add_holding(&mut self, entity_id: &str, date: &str, amount: &str) -> PyResult<()> {
        let amount = CoinAmount::new(rational(amount)?).map_err(value_error)?;
        self.inner
            .holdings
            .push(HoldingRecord::new(entity_id, parse_date(date)?, amount));
        Ok(())
    }

    #[pyo3(signature = (entity_id, date, fee_paid=None, gas_used=None, tx_count=None, app_id=None))]
    fn add_transaction(
        &mut self,
        entity_id: &str,
        date: &str,
        fee_paid: Option<&str>,
        gas_used: Option<&str>,
        tx_count: Option<u64>,
        app_id: Option<&str>,
    ) -> PyResult<()> {
        let mut tx = TransactionRecord::new(entity_id, parse_date(date)?);
        if let Some(f) = fee_paid {
            tx = tx.with_fee(CoinAmount::new(rational(f)?).map_err(value_error)?);
        }
        if let Some(g) = gas_used {
            tx = tx.with_gas(Gas::new(rational(g)?).map_err(value_error)?);
        }
        if let Some(c) = tx_count {
            tx = tx.with_count(c);
        }
        if let Some(a) = app_id {
            tx = tx.in_app(a);
        }
        self.inner.transactions.push(tx);
        Ok(())
    }

    #[getter]
    fn network_id(&self) -> &str {
        &self.inner.network_id
    }

    fn __len__(&self) -> usize {
        self.inner.holdings.len() + self.inner.transactions.len()
    }

    fn to_json(&self) -> String {
        write_portfolio_json(&self.inner)
    }
}

/// Energy (and carbon) attributed to one entity's activity on one day.
#[pyclass(name = "AllocationResult", module = "carbon_ledger_py", frozen)]
struct PyAllocationResult {
    inner: AllocationResult,
}

#[pymethods]
impl PyAllocationResult {
    #[getter]
    fn entity_id(&self) -> &str {
        self.inner.entity_id.as_str()
    }

    #[getter]
    fn date(&self) -> String {
        self.inner.date.to_string()
    }

    #[getter]
    fn method(&self) -> &'static str {
        self.inner.method.as_str()
    }

    #[getter]
    fn activity(&self) -> &'static str {
        self.inner.activity.as_str()
    }

    #[getter]
    fn app_id(&self) -> Option<&str> {
        self.inner.app_id.as_deref()
    }

    /// Exact energy in Wh.
    #[getter]
    fn energy_wh(&self) -> String {
        to_exact_string(self.inner.energy.wh())
    }

    /// Exact carbon in grams CO2e, if the day has an emission factor.
    #[getter]
    fn carbon_g(&self) -> Option<String> {
        self.inner.carbon.as_ref().map(|c| to_exact_string(c.grams()))
    }

    /// Energy for display, six significant digits in its natural unit.
    fn display(&self) -> String {
        let e = &self.inner.energy;
        m::convert_energy(e, e.natural_unit(), m::DEFAULT_SIGNIFICANT_DIGITS).to_string()
    }

    /// Energy recomputed from the audit trail alone, exact.
    fn replay_wh(&self) -> String {
        to_exact_string(self.inner.audit.replay().wh())
    }

    /// The audit trail as exact strings.
    fn audit(&self) -> BTreeMap<String, String> {
        let a = &self.inner.audit;
        let mut out = BTreeMap::new();
        out.insert("network_energy_wh".into(), to_exact_string(a.network_energy.wh()));
        if let Some((source, w)) = &a.transaction_weight {
            out.insert("weight_source".into(), source.as_str().into());
            out.insert("transaction_weight".into(), to_exact_string(w.value()));
        }
        for f in &a.factors {
            out.insert(format!("factor.{}", f.kind.as_str()), to_exact_string(&f.value));
        }
        out.insert("pool_wh".into(), to_exact_string(a.pool.wh()));
        out.insert("basis".into(), a.basis.as_str().into());
        out.insert("entity_quantity".into(), to_exact_string(&a.entity_quantity));
        out.insert("basis_total".into(), to_exact_string(&a.basis_total));
        out.insert("entity_share".into(), to_exact_string(&a.entity_share));
        out.insert("origin".into(), a.origin.to_string());
        out
    }

    fn __repr__(&self) -> String {
        format!(
            "AllocationResult({} {} {} {} = {})",
            self.inner.date,
            self.inner.entity_id,
            self.inner.method,
            self.inner.activity,
            self.display()
        )
    }
}

fn summary_rows(summary: &PeriodSummary) -> Vec<BTreeMap<String, String>> {
    summary
        .rows
        .iter()
        .map(|r| {
            let mut o = BTreeMap::new();
            o.insert("method".into(), r.method.as_str().to_string());
            o.insert("activity".into(), r.activity.as_str().to_string());
            o.insert("days".into(), summary.days.to_string());
            o.insert("total_wh".into(), to_exact_string(r.total.wh()));
            o.insert("daily_mean_wh".into(), to_exact_string(r.daily_mean.wh()));
            o.insert("ratio_of_averages_wh".into(), to_exact_string(r.ratio_of_averages.wh()));
            if let Some(c) = &r.total_carbon {
                o.insert("total_carbon_g".into(), to_exact_string(c.grams()));
            }
            o
        })
        .collect()
}

type Allocation = (Vec<PyAllocationResult>, Vec<BTreeMap<String, String>>);

fn wrap(results: Vec<AllocationResult>) -> Vec<PyAllocationResult> {
    results.into_iter().map(|inner| PyAllocationResult { inner }).collect()
}

/// Allocates a portfolio over every day of the dataset. `method` is
/// `holding`, `transaction` or `hybrid`. Returns `(results, summary_rows)`.
#[pyfunction]
#[pyo3(name = "allocate")]
fn py_allocate(dataset: &PyDataset, portfolio: &PyPortfolio, method: &str) -> PyResult<Allocation> {
    let ds = &dataset.inner;
    let allocation =
        engine::allocate_portfolio(&ds.days, &ds.consensus, &portfolio.inner, parse_method(method)?).map_err(alloc_error)?;
    Ok((wrap(allocation.results), summary_rows(&allocation.summary)))
}

/// Allocates application pools from apps JSON to app-tagged transactions
/// and token balances. `approach` is `transaction`, `token` or `hybrid`.
#[pyfunction]
#[pyo3(name = "allocate_apps", signature = (dataset, apps_json, portfolio, method="hybrid", approach="hybrid"))]
fn py_allocate_apps(
    dataset: &PyDataset,
    apps_json: &str,
    portfolio: &PyPortfolio,
    method: &str,
    approach: &str,
) -> PyResult<Vec<PyAllocationResult>> {
    let ds = &dataset.inner;
    let file = parse_apps_json(apps_json).map_err(ingest_error)?;
    let approach: AppApproach = approach.parse().map_err(value_error)?;
    let txs: Vec<TransactionRecord> = portfolio
        .inner
        .transactions
        .iter()
        .filter(|t| t.app_id.is_some())
        .cloned()
        .collect();
    let results = allocate_apps(
        &ds.days,
        &ds.consensus,
        &file.apps,
        &file.token_holdings,
        &txs,
        parse_method(method)?,
        approach,
    )
    .map_err(alloc_error)?;
    Ok(wrap(results))
}

/// Allocates a layer-2 portfolio against the layer-2's footprint derived
/// from this (host) dataset and layer-2 descriptors JSON.
#[pyfunction]
#[pyo3(name = "allocate_layer2", signature = (dataset, l2_json, portfolio, method="hybrid"))]
fn py_allocate_layer2(
    dataset: &PyDataset,
    l2_json: &str,
    portfolio: &PyPortfolio,
    method: &str,
) -> PyResult<Allocation> {
    let ds = &dataset.inner;
    let l2s = parse_l2_json(l2_json).map_err(ingest_error)?;
    let resolver = Layer2Resolver::new(&ds.network_id, ds.consensus, &ds.days, &l2s);
    let id = &portfolio.inner.network_id;
    let allocation = resolver
        .allocate(id, &resolver.dates_of(id), &portfolio.inner, parse_method(method)?)
        .map_err(alloc_error)?;
    Ok((wrap(allocation.results), summary_rows(&allocation.summary)))
}

/// Fee share of miner revenue, exact.
#[pyfunction]
fn fee_share(block_reward: &str, tx_fees_total: &str) -> PyResult<String> {
    let reward = CoinAmount::new(rational(block_reward)?).map_err(value_error)?;
    let fees = CoinAmount::new(rational(tx_fees_total)?).map_err(value_error)?;
    let day =
        m::NetworkDay::new(NaiveDate::MIN, Energy::zero(), CoinAmount::from_integer(1), 1).with_revenue(reward, fees);
    Ok(to_exact_string(engine::fee_share(&day).map_err(alloc_error)?.value()))
}

/// Per-day transaction weights of a dataset as `(date, weight)` pairs.
#[pyfunction]
fn transaction_weights(dataset: &PyDataset) -> PyResult<Vec<(String, String)>> {
    dataset
        .inner
        .days
        .iter()
        .map(|d| {
            method_weights(d, &dataset.inner.consensus)
                .map(|w| (d.date.to_string(), to_exact_string(w.transaction_weight.value())))
                .map_err(alloc_error)
        })
        .collect()
}

/// Converts Wh (decimal or `p/q`) to `unit`, rounded half-even for display.
#[pyfunction]
#[pyo3(signature = (wh, unit, significant_digits=6))]
fn convert_energy(wh: &str, unit: &str, significant_digits: u32) -> PyResult<String> {
    if significant_digits == 0 {
        return Err(value_error("significant_digits must be at least 1"));
    }
    let energy = Energy::from_wh(parse_exact_string(wh).map_err(value_error)?).map_err(value_error)?;
    let unit: EnergyUnit = unit.parse().map_err(value_error)?;
    Ok(m::convert_energy(&energy, unit, significant_digits).to_string())
}

/// Grams CO2e for an energy in Wh at a factor in g/kWh, exact.
#[pyfunction]
fn carbonize(wh: &str, g_per_kwh: &str) -> PyResult<String> {
    let energy = Energy::from_wh(parse_exact_string(wh).map_err(value_error)?).map_err(value_error)?;
    let factor = EmissionFactor::new(rational(g_per_kwh)?).map_err(value_error)?;
    Ok(to_exact_string(m::carbonize(&energy, &factor).grams()))
}

#[pymodule]
fn carbon_ledger_py(module: &Bound<'_, PyModule>) -> PyResult<()> {
    module.add_class::<PyDataset>()?;
    module.add_class::<PyPortfolio>()?;
    module.add_class::<PyAllocationResult>()?;
    module.add_function(wrap_pyfunction!(py_allocate, module)?)?;
    module.add_function(wrap_pyfunction!(py_allocate_apps, module)?)?;
    module.add_function(wrap_pyfunction!(py_allocate_layer2, module)?)?;
    module.add_function(wrap_pyfunction!(fee_share, module)?)?;
    module.add_function(wrap_pyfunction!(transaction_weights, module)?)?;
    module.add_function(wrap_pyfunction!(convert_energy, module)?)?;
    module.add_function(wrap_pyfunction!(carbonize, module)?)?;
    Ok(())
}
