use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use chrono::NaiveDate;
use serde_json::{Map, Value};

use super::{
    check_schema_version, parse_count, parse_date, parse_raw_day, IngestError, NetworkProfile, RawDay, RowError,
};
use crate::apps::{AppDay, TokenHolding};
use crate::decimal::{self, to_decimal_string};
use crate::layer2::Layer2Day;
use crate::model::{CoinAmount, ConsensusKind, Energy, Fraction, Gas, HoldingRecord, Portfolio, TransactionRecord};

type FieldResult<T> = Result<T, (String, String)>;

fn read_file(path: &Path) -> Result<String, IngestError> {
    fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_root(text: &str) -> Result<Map<String, Value>, IngestError> {
    match serde_json::from_str::<Value>(text) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(IngestError::Json("top level must be an object".into())),
        Err(e) => Err(IngestError::Json(e.to_string())),
    }
}

fn root_version(root: &Map<String, Value>) -> Result<String, IngestError> {
    let version = match root.get("schema_version") {
        Some(Value::String(s)) => s.clone(),
        Some(_) => return Err(IngestError::Json("schema_version must be a string".into())),
        None => return Err(IngestError::Json("missing schema_version".into())),
    };
    check_schema_version(&version)?;
    Ok(version)
}

fn root_array<'a>(root: &'a Map<String, Value>, key: &str) -> Result<&'a [Value], IngestError> {
    match root.get(key) {
        None | Some(Value::Null) => Ok(&[]),
        Some(Value::Array(items)) => Ok(items),
        Some(_) => Err(IngestError::Json(format!("`{key}` must be an array"))),
    }
}

fn err<T>(column: &str, reason: impl Into<String>) -> FieldResult<T> {
    Err((column.to_string(), reason.into()))
}

fn object(entry: &Value) -> FieldResult<&Map<String, Value>> {
    entry
        .as_object()
        .ok_or_else(|| ("*".to_string(), "entry must be an object".to_string()))
}

/// A string field; decimals must be strings so no float ever touches them.
fn text<'a>(obj: &'a Map<String, Value>, key: &str) -> FieldResult<Option<&'a str>> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) if s.is_empty() => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.as_str())),
        Some(Value::Number(_)) => err(key, "must be a JSON string (decimals are written as strings)"),
        Some(_) => err(key, "must be a string"),
    }
}

fn required<'a>(obj: &'a Map<String, Value>, key: &str) -> FieldResult<&'a str> {
    text(obj, key)?.ok_or_else(|| (key.to_string(), "required".to_string()))
}

fn date(obj: &Map<String, Value>, key: &str) -> FieldResult<NaiveDate> {
    parse_date(required(obj, key)?).map_err(|r| (key.to_string(), r))
}

fn count(obj: &Map<String, Value>, key: &str) -> FieldResult<Option<u64>> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::Number(n)) => match n.as_u64() {
            Some(v) => Ok(Some(v)),
            None => err(key, format!("`{n}` is not a whole non-negative number")),
        },
        Some(Value::String(s)) => parse_count(s).map(Some).map_err(|r| (key.to_string(), r)),
        Some(_) => err(key, "must be a whole number"),
    }
}

fn coins(obj: &Map<String, Value>, key: &str, decimals: Option<u32>) -> FieldResult<Option<CoinAmount>> {
    let Some(token) = text(obj, key)? else {
        return Ok(None);
    };
    let parsed = match decimals {
        Some(d) => CoinAmount::parse(token, d).map_err(|e| e.to_string()),
        None => decimal::parse_non_negative(token)
            .map_err(|e| e.to_string())
            .and_then(|p| CoinAmount::new(p.value).map_err(|e| e.to_string())),
    };
    parsed.map(Some).map_err(|r| (key.to_string(), r))
}

fn fraction(obj: &Map<String, Value>, key: &str) -> FieldResult<Fraction> {
    Fraction::parse(required(obj, key)?).map_err(|e| (key.to_string(), e.to_string()))
}

/// Runs `parse` on every entry of a section, collecting one error per entry.
fn parse_section<T>(
    items: &[Value],
    section: &str,
    errors: &mut Vec<RowError>,
    mut parse: impl FnMut(&Map<String, Value>) -> FieldResult<T>,
) -> Vec<(usize, T)> {
    let mut out = Vec::new();
    for (i, item) in items.iter().enumerate() {
        match object(item).and_then(&mut parse) {
            Ok(v) => out.push((i + 1, v)),
            Err((column, reason)) => errors.push(RowError::invalid(i + 1, column, reason).in_section(section)),
        }
    }
    out
}

fn finish<T>(value: T, errors: Vec<RowError>) -> Result<T, IngestError> {
    if errors.is_empty() {
        Ok(value)
    } else {
        Err(IngestError::Invalid(errors))
    }
}

/// The `network_id` a portfolio file declares, read before full parsing so
/// the matching denomination can be chosen.
pub fn portfolio_network_id(text_in: &str) -> Result<String, IngestError> {
    match parse_root(text_in)?.get("network_id") {
        Some(Value::String(s)) => Ok(s.clone()),
        _ => Err(IngestError::Json("missing network_id".into())),
    }
}

pub fn load_portfolio_json(path: &Path, profile: &NetworkProfile) -> Result<Portfolio, IngestError> {
    parse_portfolio_json(&read_file(path)?, profile)
}

/// Parses a portfolio. Holding amounts and fees may not carry more decimal
/// places than the network's smallest denomination.
pub fn parse_portfolio_json(text_in: &str, profile: &NetworkProfile) -> Result<Portfolio, IngestError> {
    let root = parse_root(text_in)?;
    let schema_version = root_version(&root)?;
    let network_id = match root.get("network_id") {
        Some(Value::String(s)) => s.clone(),
        _ => return Err(IngestError::Json("missing network_id".into())),
    };
    let decimals = Some(profile.decimals);
    let mut errors = Vec::new();
    let holdings = parse_section(root_array(&root, "holdings")?, "holdings", &mut errors, |o| {
        Ok(HoldingRecord::new(
            required(o, "entity_id")?,
            date(o, "date")?,
            coins(o, "amount", decimals)?.ok_or_else(|| ("amount".to_string(), "required".to_string()))?,
        ))
    });
    let mut seen: BTreeMap<(String, NaiveDate), usize> = BTreeMap::new();
    for (row, h) in &holdings {
        if let Some(first) = seen.insert((h.entity_id.0.clone(), h.date), *row) {
            errors.push(
                RowError::invalid(
                    *row,
                    "date",
                    format!(
                        "duplicate holding for `{}` on {} (first in row {first})",
                        h.entity_id, h.date
                    ),
                )
                .in_section("holdings"),
            );
        }
    }
    let transactions = parse_section(root_array(&root, "transactions")?, "transactions", &mut errors, |o| {
        let mut tx = TransactionRecord::new(required(o, "entity_id")?, date(o, "date")?);
        tx.fee_paid = coins(o, "fee_paid", decimals)?;
        tx.gas_used = text(o, "gas_used")?
            .map(|t| {
                decimal::parse_non_negative(t)
                    .map(|p| Gas::new(p.value).expect("non-negative"))
                    .map_err(|e| ("gas_used".to_string(), e.to_string()))
            })
            .transpose()?;
        tx.tx_count = count(o, "tx_count")?;
        tx.app_id = text(o, "app_id")?.map(str::to_string);
        Ok(tx)
    });
    let portfolio = Portfolio {
        schema_version,
        network_id,
        holdings: holdings.into_iter().map(|(_, h)| h).collect(),
        transactions: transactions.into_iter().map(|(_, t)| t).collect(),
    };
    errors.sort_by_key(|e| (e.section.clone(), e.row));
    finish(portfolio, errors)
}

fn decimal_value(v: &num::BigRational) -> Value {
    Value::String(to_decimal_string(v).unwrap_or_else(|| decimal::to_exact_string(v)))
}

/// Canonical portfolio JSON: fixed key order, records sorted by date then
/// entity, decimals as minimal strings.
pub fn write_portfolio_json(portfolio: &Portfolio) -> String {
    let mut holdings: Vec<&HoldingRecord> = portfolio.holdings.iter().collect();
    holdings.sort_by(|a, b| (a.date, &a.entity_id).cmp(&(b.date, &b.entity_id)));
    let mut txs: Vec<&TransactionRecord> = portfolio.transactions.iter().collect();
    txs.sort_by(|a, b| (a.date, &a.entity_id).cmp(&(b.date, &b.entity_id)));

    let mut root = Map::new();
    root.insert("schema_version".into(), Value::String(portfolio.schema_version.clone()));
    root.insert("network_id".into(), Value::String(portfolio.network_id.clone()));
    let holdings = holdings
        .into_iter()
        .map(|h| {
            let mut o = Map::new();
            o.insert("entity_id".into(), Value::String(h.entity_id.0.clone()));
            o.insert("date".into(), Value::String(h.date.to_string()));
            o.insert("amount".into(), decimal_value(h.amount.value()));
            Value::Object(o)
        })
        .collect();
    root.insert("holdings".into(), Value::Array(holdings));
    let txs = txs
        .into_iter()
        .map(|t| {
            let mut o = Map::new();
            o.insert("entity_id".into(), Value::String(t.entity_id.0.clone()));
            o.insert("date".into(), Value::String(t.date.to_string()));
            if let Some(f) = &t.fee_paid {
                o.insert("fee_paid".into(), decimal_value(f.value()));
            }
            if let Some(g) = &t.gas_used {
                o.insert("gas_used".into(), decimal_value(g.value()));
            }
            if let Some(c) = t.tx_count {
                o.insert("tx_count".into(), Value::from(c));
            }
            if let Some(a) = &t.app_id {
                o.insert("app_id".into(), Value::String(a.clone()));
            }
            Value::Object(o)
        })
        .collect();
    root.insert("transactions".into(), Value::Array(txs));
    let mut out = serde_json::to_string_pretty(&Value::Object(root)).expect("serializable");
    out.push('\n');
    out
}

/// Applications and token balances for one network.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AppsFile {
    /// Host network, when the file names one.
    pub network_id: Option<String>,
    pub apps: Vec<AppDay>,
    pub token_holdings: Vec<TokenHolding>,
}

pub fn load_apps_json(path: &Path) -> Result<AppsFile, IngestError> {
    parse_apps_json(&read_file(path)?)
}

/// Parses applications. Token balances must reference a tokenised app on
/// the same day and may not exceed its supply; shares of all apps on a day
/// must sum to at most one.
pub fn parse_apps_json(text_in: &str) -> Result<AppsFile, IngestError> {
    let root = parse_root(text_in)?;
    root_version(&root)?;
    let mut errors = Vec::new();
    let apps = parse_section(root_array(&root, "apps")?, "apps", &mut errors, |o| {
        let app_tx_count = count(o, "app_tx_count")?.unwrap_or(0);
        Ok(AppDay {
            app_id: required(o, "app_id")?.to_string(),
            date: date(o, "date")?,
            app_fee_share: fraction(o, "app_fee_share")?,
            token_supply: coins(o, "token_supply", None)?,
            app_tx_count,
        })
    });
    let mut by_key: BTreeMap<(String, NaiveDate), &AppDay> = BTreeMap::new();
    let mut share_by_date: BTreeMap<NaiveDate, num::BigRational> = BTreeMap::new();
    let one = Fraction::one();
    for (row, app) in &apps {
        if by_key.insert((app.app_id.clone(), app.date), app).is_some() {
            errors.push(
                RowError::invalid(
                    *row,
                    "date",
                    format!("duplicate entry for app `{}` on {}", app.app_id, app.date),
                )
                .in_section("apps"),
            );
            continue;
        }
        let sum = share_by_date.entry(app.date).or_default();
        *sum += app.app_fee_share.value();
        if &*sum > one.value() {
            errors.push(
                RowError::invalid(
                    *row,
                    "app_fee_share",
                    format!("application shares on {} sum to more than 1", app.date),
                )
                .in_section("apps"),
            );
        }
    }
    let holdings = parse_section(
        root_array(&root, "token_holdings")?,
        "token_holdings",
        &mut errors,
        |o| {
            let holding = TokenHolding::new(
                required(o, "entity_id")?,
                required(o, "app_id")?,
                date(o, "date")?,
                coins(o, "amount", None)?.ok_or_else(|| ("amount".to_string(), "required".to_string()))?,
            );
            match by_key.get(&(holding.app_id.clone(), holding.date)) {
                None => err("app_id", format!("no app `{}` on {}", holding.app_id, holding.date)),
                Some(app) => match &app.token_supply {
                    None => err("app_id", format!("app `{}` has no token", holding.app_id)),
                    Some(supply) if holding.amount.value() > supply.value() => {
                        err("amount", "exceeds token_supply of the app")
                    }
                    Some(_) => Ok(holding),
                },
            }
        },
    );
    let file = AppsFile {
        network_id: root.get("network_id").and_then(Value::as_str).map(str::to_string),
        apps: apps.iter().map(|(_, a)| a.clone()).collect(),
        token_holdings: holdings.into_iter().map(|(_, h)| h).collect(),
    };
    finish(file, errors)
}

pub fn load_l2_json(path: &Path) -> Result<Vec<Layer2Day>, IngestError> {
    parse_l2_json(&read_file(path)?)
}

/// Parses layer-2 descriptors. Each entry carries the network's own
/// telemetry under `internal`, using the network CSV column names; its
/// energy is derived and need not be given.
pub fn parse_l2_json(text_in: &str) -> Result<Vec<Layer2Day>, IngestError> {
    let root = parse_root(text_in)?;
    root_version(&root)?;
    let mut errors = Vec::new();
    let l2s = parse_section(root_array(&root, "l2s")?, "l2s", &mut errors, |o| {
        let l2_id = required(o, "l2_id")?.to_string();
        let day_date = date(o, "date")?;
        let kind: ConsensusKind = required(o, "consensus")?
            .parse()
            .map_err(|r| ("consensus".to_string(), r))?;
        let decimals = count(o, "decimals")?.unwrap_or(18);
        let decimals = u32::try_from(decimals).map_err(|_| ("decimals".to_string(), "out of range".to_string()))?;
        let profile = NetworkProfile::new(l2_id.clone(), kind, decimals);
        let infra_energy = match text(o, "infra_energy_wh")? {
            Some(t) => Energy::parse_wh(t).map_err(|e| ("infra_energy_wh".to_string(), e.to_string()))?,
            None => Energy::zero(),
        };
        let internal = match o.get("internal") {
            Some(Value::Object(m)) => m,
            _ => return err("internal", "required object"),
        };
        let date_token = day_date.to_string();
        let mut owned: Vec<(&'static str, String)> = Vec::new();
        for column in super::NETWORK_COLUMNS.iter().copied().filter(|c| *c != "date") {
            let value = match column {
                "tx_count" => count(internal, column)?.map(|c| c.to_string()),
                _ => text(internal, column)?.map(str::to_string),
            };
            if let Some(v) = value {
                owned.push((column, v));
            }
        }
        let mut raw: RawDay<'_> = owned.iter().map(|(c, v)| (*c, v.as_str())).collect();
        raw.insert("date", &date_token);
        let day = parse_raw_day(&raw, &profile, false).map_err(|(c, r)| (format!("internal.{c}"), r))?;
        Ok(Layer2Day {
            l2_id,
            date: day_date,
            l1_fee_share: fraction(o, "l1_fee_share")?,
            infra_energy,
            params: profile.params,
            decimals,
            host: text(o, "host")?.map(str::to_string),
            internal: day,
        })
    });
    let mut seen = BTreeSet::new();
    for (row, l) in &l2s {
        if !seen.insert((l.l2_id.clone(), l.date)) {
            errors.push(
                RowError::invalid(*row, "date", format!("duplicate entry for `{}` on {}", l.l2_id, l.date))
                    .in_section("l2s"),
            );
        }
    }
    finish(l2s.into_iter().map(|(_, l)| l).collect(), errors)
}
