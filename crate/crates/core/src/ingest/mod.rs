//! Loading and validating input datasets.
//!
//! Network telemetry is CSV, one row per UTC day. Portfolios, application
//! sets and layer-2 descriptors are JSON with decimals written as strings.
//! Every loader reports all row-level problems it finds, not just the first.

mod csv_io;
#[cfg(feature = "remote")]
mod http;
mod json_io;
pub mod remote;

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use chrono::NaiveDate;
use serde::Serialize;

use crate::apps::{AppDay, TokenHolding};
use crate::decimal::{self, DecimalError};
use crate::layer2::Layer2Day;
use crate::model::{
    CoinAmount, ConsensusKind, ConsensusParams, DayOrigin, EmissionFactor, Energy, Fraction, Gas, NetworkDay, Portfolio,
};

pub use csv_io::{load_network_csv, read_network_csv, write_network_csv, NETWORK_COLUMNS};
#[cfg(feature = "remote")]
pub use http::HttpTransport;
pub use json_io::{
    load_apps_json, load_l2_json, load_portfolio_json, parse_apps_json, parse_l2_json, parse_portfolio_json,
    portfolio_network_id, write_portfolio_json, AppsFile,
};

pub const SCHEMA_VERSION: &str = "1";

/// Consensus and denomination of a network, selected by id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkProfile {
    pub network_id: String,
    pub params: ConsensusParams,
    /// Fractional digits of the smallest coin denomination.
    pub decimals: u32,
}

impl NetworkProfile {
    pub fn new(network_id: impl Into<String>, kind: ConsensusKind, decimals: u32) -> Self {
        NetworkProfile {
            network_id: network_id.into(),
            params: ConsensusParams { kind },
            decimals,
        }
    }

    /// Resolves `bitcoin`, `ethereum`, `ethereum-pos`, or an explicit
    /// `<id>:<pow|pos>[:<decimals>]`.
    pub fn resolve(spec: &str) -> Result<Self, String> {
        let mut parts = spec.split(':');
        let id = parts.next().filter(|s| !s.is_empty()).ok_or("empty network id")?;
        match (parts.next(), parts.next(), parts.next()) {
            (None, _, _) => match id {
                "bitcoin" | "btc" => Ok(Self::new(id, ConsensusKind::ProofOfWork, 8)),
                "ethereum" | "eth" | "ethereum-pow" => Ok(Self::new(id, ConsensusKind::ProofOfWork, 18)),
                "ethereum-pos" | "eth-pos" => Ok(Self::new(id, ConsensusKind::ProofOfStake, 18)),
                other => Err(format!(
                    "unknown network `{other}`; use <id>:<pow|pos>[:<decimals>] for other networks"
                )),
            },
            (Some(kind), decimals, None) => {
                let kind: ConsensusKind = kind.parse()?;
                let decimals = match decimals {
                    Some(d) => d.parse().map_err(|_| format!("bad decimals `{d}`"))?,
                    None => 18,
                };
                Ok(Self::new(id, kind, decimals))
            }
            _ => Err(format!("malformed network spec `{spec}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RowErrorKind {
    RowInvalid,
    DuplicateDate,
}

/// A problem with one input row. `row` is 1-based within its section (data
/// rows of a CSV, or array entries of a JSON section).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RowError {
    pub kind: RowErrorKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub section: Option<String>,
    pub row: usize,
    pub column: String,
    pub reason: String,
}

impl RowError {
    pub fn invalid(row: usize, column: impl Into<String>, reason: impl Into<String>) -> Self {
        RowError {
            kind: RowErrorKind::RowInvalid,
            section: None,
            row,
            column: column.into(),
            reason: reason.into(),
        }
    }

    pub fn duplicate(row: usize, date: NaiveDate, first_row: usize) -> Self {
        RowError {
            kind: RowErrorKind::DuplicateDate,
            section: None,
            row,
            column: "date".into(),
            reason: format!("duplicate date {date} (first seen in row {first_row})"),
        }
    }

    pub fn in_section(mut self, section: impl Into<String>) -> Self {
        self.section = Some(section.into());
        self
    }
}

impl fmt::Display for RowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.section {
            Some(s) => write!(f, "{s} row {}, column {}: {}", self.row, self.column, self.reason),
            None => write!(f, "row {}, column {}: {}", self.row, self.column, self.reason),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error("header mismatch: expected `{expected}`, found `{found}`")]
    SchemaMismatch { expected: String, found: String },

    #[error("unsupported schema version `{0}` (supported major version: {SCHEMA_VERSION})")]
    SchemaVersion(String),

    #[error("malformed JSON: {0}")]
    Json(String),

    #[error("{} invalid row(s):\n{}", .0.len(), .0.iter().map(|e| format!("  {e}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<RowError>),

    #[error(transparent)]
    Remote(#[from] remote::RemoteError),
}

impl IngestError {
    /// Row errors carried by this failure, if any.
    pub fn row_errors(&self) -> &[RowError] {
        match self {
            IngestError::Invalid(rows) => rows,
            IngestError::Remote(remote::RemoteError::MalformedResponse(rows)) => rows,
            _ => &[],
        }
    }

    pub fn is_io(&self) -> bool {
        matches!(self, IngestError::Io { .. })
    }
}

pub(crate) fn check_schema_version(version: &str) -> Result<(), IngestError> {
    let major = version.split('.').next().unwrap_or_default();
    if major != SCHEMA_VERSION {
        return Err(IngestError::SchemaVersion(version.to_string()));
    }
    Ok(())
}

/// A day row before typing: column name → non-empty token.
pub(crate) type RawDay<'a> = BTreeMap<&'static str, &'a str>;

fn decimal_reason(e: DecimalError) -> String {
    e.to_string()
}

pub(crate) fn parse_date(token: &str) -> Result<NaiveDate, String> {
    if token.len() != 10 {
        return Err(format!("`{token}` is not a YYYY-MM-DD date"));
    }
    NaiveDate::parse_from_str(token, "%Y-%m-%d").map_err(|_| format!("`{token}` is not a YYYY-MM-DD date"))
}

pub(crate) fn parse_count(token: &str) -> Result<u64, String> {
    if token.is_empty() || !token.bytes().all(|b| b.is_ascii_digit()) {
        return Err(if token.starts_with('-') {
            "negative".to_string()
        } else {
            format!("`{token}` is not a whole number")
        });
    }
    token.parse().map_err(|_| format!("`{token}` is out of range"))
}

/// Types a raw row and checks every day invariant. `energy_required` is
/// false for layer-2 internal records, whose energy is derived.
pub(crate) fn parse_raw_day(
    raw: &RawDay<'_>,
    profile: &NetworkProfile,
    energy_required: bool,
) -> Result<NetworkDay, (String, String)> {
    let err = |c: &str, r: String| (c.to_string(), r);
    let get = |c: &'static str| raw.get(c).copied();
    let need = |c: &'static str| get(c).ok_or_else(|| err(c, "required".into()));

    let date = parse_date(need("date")?).map_err(|r| err("date", r))?;
    let energy = match get("energy_wh") {
        Some(t) => Energy::parse_wh(t).map_err(|e| err("energy_wh", e.to_string()))?,
        None if energy_required => return Err(err("energy_wh", "required".into())),
        None => Energy::zero(),
    };
    let coins = |c: &'static str| -> Result<Option<CoinAmount>, (String, String)> {
        get(c)
            .map(|t| CoinAmount::parse(t, profile.decimals).map_err(|e| err(c, e.to_string())))
            .transpose()
    };
    let block_reward = coins("block_reward")?;
    let tx_fees_total = coins("tx_fees_total")?;
    let coin_supply = coins("coin_supply")?.ok_or_else(|| err("coin_supply", "required".into()))?;
    let fraction = |c: &'static str| -> Result<Option<Fraction>, (String, String)> {
        get(c)
            .map(|t| match decimal::parse_non_negative(t) {
                Ok(p) => Fraction::new(p.value).map_err(|e| err(c, e.to_string())),
                Err(e) => Err(err(c, decimal_reason(e))),
            })
            .transpose()
    };
    let lost_coin_fraction = fraction("lost_coin_fraction")?;
    let tx_count = parse_count(need("tx_count")?).map_err(|r| err("tx_count", r))?;
    let gas_total = get("gas_total")
        .map(|t| {
            decimal::parse_non_negative(t)
                .map(|p| Gas::new(p.value).expect("non-negative"))
                .map_err(|e| err("gas_total", decimal_reason(e)))
        })
        .transpose()?;
    let pos_tx_share = fraction("pos_tx_share")?;
    let emission_factor = get("emission_factor_g_per_kwh")
        .map(|t| EmissionFactor::parse(t).map_err(|e| err("emission_factor_g_per_kwh", e.to_string())))
        .transpose()?;

    let day = NetworkDay {
        date,
        energy,
        block_reward,
        tx_fees_total,
        coin_supply,
        lost_coin_fraction,
        tx_count,
        gas_total,
        pos_tx_share,
        emission_factor,
        origin: DayOrigin::Observed,
    };
    day.validate(profile.params.kind)
        .map_err(|v| (v.column.to_string(), v.reason))?;
    Ok(day)
}

/// Types and validates a batch of raw rows, collecting one error per bad row
/// plus duplicate-date errors. Returns days sorted by date.
pub(crate) fn collect_days<'a>(
    rows: impl IntoIterator<Item = Result<RawDay<'a>, RowError>>,
    profile: &NetworkProfile,
) -> Result<Vec<NetworkDay>, Vec<RowError>> {
    let mut errors = Vec::new();
    let mut seen: BTreeMap<NaiveDate, usize> = BTreeMap::new();
    let mut days = Vec::new();
    for (i, row) in rows.into_iter().enumerate() {
        let row_no = i + 1;
        let raw = match row {
            Ok(raw) => raw,
            Err(e) => {
                errors.push(e);
                continue;
            }
        };
        match parse_raw_day(&raw, profile, true) {
            Ok(day) => {
                if let Some(first) = seen.get(&day.date) {
                    errors.push(RowError::duplicate(row_no, day.date, *first));
                } else {
                    seen.insert(day.date, row_no);
                    days.push(day);
                }
            }
            Err((column, reason)) => errors.push(RowError::invalid(row_no, column, reason)),
        }
    }
    if !errors.is_empty() {
        return Err(errors);
    }
    days.sort_by_key(|d| d.date);
    Ok(days)
}

/// Validated inputs for one network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub network_id: String,
    pub consensus: ConsensusParams,
    pub decimals: u32,
    pub days: Vec<NetworkDay>,
    pub apps: Vec<AppDay>,
    pub token_holdings: Vec<TokenHolding>,
    pub l2s: Vec<Layer2Day>,
    pub schema_version: String,
}

impl Dataset {
    pub fn new(profile: &NetworkProfile, days: Vec<NetworkDay>) -> Self {
        Dataset {
            network_id: profile.network_id.clone(),
            consensus: profile.params,
            decimals: profile.decimals,
            days,
            apps: Vec::new(),
            token_holdings: Vec::new(),
            l2s: Vec::new(),
            schema_version: SCHEMA_VERSION.to_string(),
        }
    }

    pub fn profile(&self) -> NetworkProfile {
        NetworkProfile {
            network_id: self.network_id.clone(),
            params: self.consensus,
            decimals: self.decimals,
        }
    }

    fn day_dates(&self) -> std::collections::BTreeSet<NaiveDate> {
        self.days.iter().map(|d| d.date).collect()
    }

    /// Joins an application file; every app date must be a network day.
    pub fn attach_apps(&mut self, file: AppsFile) -> Result<(), IngestError> {
        let dates = self.day_dates();
        let errors: Vec<RowError> = file
            .apps
            .iter()
            .enumerate()
            .filter(|(_, a)| !dates.contains(&a.date))
            .map(|(i, a)| {
                RowError::invalid(
                    i + 1,
                    "date",
                    format!("no network day {} for app `{}`", a.date, a.app_id),
                )
                .in_section("apps")
            })
            .collect();
        if !errors.is_empty() {
            return Err(IngestError::Invalid(errors));
        }
        self.apps = file.apps;
        self.token_holdings = file.token_holdings;
        Ok(())
    }

    /// Joins layer-2 descriptors; layer-2s hosted on this network need a
    /// network day, nested ones need their host's day.
    pub fn attach_l2s(&mut self, l2s: Vec<Layer2Day>) -> Result<(), IngestError> {
        let dates = self.day_dates();
        let l2_dates: std::collections::BTreeSet<(&str, NaiveDate)> =
            l2s.iter().map(|l| (l.l2_id.as_str(), l.date)).collect();
        let mut errors = Vec::new();
        for (i, l) in l2s.iter().enumerate() {
            let ok = match &l.host {
                None => dates.contains(&l.date),
                Some(h) => l2_dates.contains(&(h.as_str(), l.date)),
            };
            if !ok {
                let host = l.host.as_deref().unwrap_or(&self.network_id);
                errors.push(
                    RowError::invalid(i + 1, "date", format!("host `{host}` has no day {}", l.date)).in_section("l2s"),
                );
            }
        }
        if !errors.is_empty() {
            return Err(IngestError::Invalid(errors));
        }
        self.l2s = l2s;
        Ok(())
    }

    /// Days within the inclusive range; open ends default to the data span.
    pub fn days_between(&self, from: Option<NaiveDate>, to: Option<NaiveDate>) -> Vec<NetworkDay> {
        self.days
            .iter()
            .filter(|d| from.is_none_or(|f| d.date >= f) && to.is_none_or(|t| d.date <= t))
            .cloned()
            .collect()
    }

    /// Checks portfolio records against the network days: every date must
    /// exist and no holding may exceed supply.
    pub fn validate_portfolio(&self, portfolio: &Portfolio) -> Vec<RowError> {
        let by_date: BTreeMap<NaiveDate, &NetworkDay> = self.days.iter().map(|d| (d.date, d)).collect();
        let mut errors = Vec::new();
        for (i, h) in portfolio.holdings.iter().enumerate() {
            match by_date.get(&h.date) {
                None => errors.push(
                    RowError::invalid(i + 1, "date", format!("no network day {}", h.date)).in_section("holdings"),
                ),
                Some(day) if h.amount.value() > day.coin_supply.value() => errors.push(
                    RowError::invalid(i + 1, "amount", "exceeds coin_supply of the matching day")
                        .in_section("holdings"),
                ),
                Some(_) => {}
            }
        }
        for (i, t) in portfolio.transactions.iter().enumerate() {
            if !by_date.contains_key(&t.date) {
                errors.push(
                    RowError::invalid(i + 1, "date", format!("no network day {}", t.date)).in_section("transactions"),
                );
            }
        }
        errors
    }
}

/// Fills gaps inside `[from, to]` by copying the last earlier day, marking
/// copies in their origin. Dates before the first day stay missing.
pub fn fill_forward(days: &[NetworkDay], from: Option<NaiveDate>, to: Option<NaiveDate>) -> Vec<NetworkDay> {
    let (Some(first), Some(last)) = (days.first(), days.last()) else {
        return Vec::new();
    };
    let start = from.unwrap_or(first.date).max(first.date);
    let end = to.unwrap_or(last.date);
    let by_date: BTreeMap<NaiveDate, &NetworkDay> = days.iter().map(|d| (d.date, d)).collect();
    let mut out = Vec::new();
    let mut previous: Option<&NetworkDay> = by_date.range(..start).next_back().map(|(_, d)| *d);
    let mut date = start;
    while date <= end {
        match by_date.get(&date) {
            Some(day) => {
                out.push((*day).clone());
                previous = Some(day);
            }
            None => {
                if let Some(src) = previous {
                    let source = match &src.origin {
                        DayOrigin::FilledForward { source } => *source,
                        _ => src.date,
                    };
                    out.push(NetworkDay {
                        date,
                        origin: DayOrigin::FilledForward { source },
                        ..src.clone()
                    });
                }
            }
        }
        date = match date.succ_opt() {
            Some(d) => d,
            None => break,
        };
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profiles_resolve() {
        let btc = NetworkProfile::resolve("bitcoin").unwrap();
        assert_eq!((btc.params.kind, btc.decimals), (ConsensusKind::ProofOfWork, 8));
        let pos = NetworkProfile::resolve("ethereum-pos").unwrap();
        assert_eq!(pos.params.kind, ConsensusKind::ProofOfStake);
        let custom = NetworkProfile::resolve("ada:pos:6").unwrap();
        assert_eq!((custom.network_id.as_str(), custom.decimals), ("ada", 6));
        assert!(NetworkProfile::resolve("dogecoin").is_err());
        assert!(NetworkProfile::resolve("x:pow:8:9").is_err());
        assert!(NetworkProfile::resolve("x:proof").is_err());
    }

    #[test]
    fn schema_versions() {
        assert!(check_schema_version("1").is_ok());
        assert!(check_schema_version("1.3").is_ok());
        assert!(matches!(check_schema_version("2"), Err(IngestError::SchemaVersion(_))));
    }

    #[test]
    fn counts_and_dates() {
        assert_eq!(parse_count("263260"), Ok(263_260));
        assert!(parse_count("12.0").is_err());
        assert_eq!(parse_count("-1"), Err("negative".into()));
        assert!(parse_date("2021-02-30").is_err());
        assert!(parse_date("2021-2-3").is_err());
        assert!(parse_date("2021-02-03").is_ok());
    }

    #[test]
    fn fill_forward_marks_copies() {
        let d = |m, day| NaiveDate::from_ymd_opt(2021, m, day).unwrap();
        let mk = |date| NetworkDay::new(date, Energy::zero(), CoinAmount::from_integer(1), 0);
        let days = vec![mk(d(1, 2)), mk(d(1, 5))];
        let filled = fill_forward(&days, Some(d(1, 1)), Some(d(1, 6)));
        let dates: Vec<_> = filled.iter().map(|x| x.date).collect();
        assert_eq!(dates, vec![d(1, 2), d(1, 3), d(1, 4), d(1, 5), d(1, 6)]);
        assert_eq!(filled[1].origin, DayOrigin::FilledForward { source: d(1, 2) });
        assert_eq!(filled[2].origin, DayOrigin::FilledForward { source: d(1, 2) });
        assert_eq!(filled[3].origin, DayOrigin::Observed);
        assert_eq!(filled[4].origin, DayOrigin::FilledForward { source: d(1, 5) });
    }
}
