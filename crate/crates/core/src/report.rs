//! Report emitters: methodology comparison tables, weight series, and
//! allocation results with their audit trail.
//!
//! Machine formats (CSV, JSON) carry both a display value rounded half-even
//! to a fixed number of significant digits and the exact value, so every
//! allocation can be replayed from the file alone.

use std::fmt::Write as _;

use chrono::NaiveDate;
use num::{BigRational, Zero};
use serde_json::{json, Map, Value};

use crate::decimal::{format_significant, to_decimal_string, to_exact_string};
use crate::engine::{check_ordered, holding_pool, method_weights, transaction_pool, MethodWeights, PeriodSummary};
use crate::error::AllocationError;
use crate::model::{
    carbonize, convert_energy, Activity, AllocationResult, Carbon, ConsensusParams, Energy, EnergyUnit, Method,
    NetworkDay, DEFAULT_SIGNIFICANT_DIGITS,
};

/// Significant digits of the aligned text comparison table.
pub const TEXT_TABLE_DIGITS: u32 = 4;

/// Output format of every report.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
    Text,
}

impl std::str::FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            "text" => Ok(Format::Text),
            other => Err(format!("unknown format `{other}` (expected csv, json or text)")),
        }
    }
}

/// Exact decimal when it terminates, otherwise 15 significant digits.
pub fn machine_decimal(value: &BigRational) -> String {
    to_decimal_string(value).unwrap_or_else(|| format_significant(value, 15))
}

fn display(value: &BigRational) -> String {
    format_significant(value, DEFAULT_SIGNIFICANT_DIGITS)
}

/// Carbon with an automatic unit among g, kg and t.
pub fn format_carbon(carbon: &Carbon, significant_digits: u32) -> String {
    let grams = carbon.grams();
    let thousand = BigRational::from_integer(1000.into());
    let (value, unit) = if *grams >= &thousand * &thousand {
        (grams / (&thousand * &thousand), "t")
    } else if *grams >= thousand {
        (grams / &thousand, "kg")
    } else {
        (grams.clone(), "g")
    };
    format!("{} {unit}CO2e", format_significant(&value, significant_digits))
}

fn format_energy(energy: &Energy, significant_digits: u32) -> String {
    convert_energy(energy, energy.natural_unit(), significant_digits).to_string()
}

/// One cell of the comparison table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComparisonCell {
    pub method: Method,
    pub activity: Activity,
    /// `None` where the method does not account for the activity.
    pub energy: Option<Energy>,
    pub carbon: Option<Carbon>,
}

impl ComparisonCell {
    pub fn column(&self) -> String {
        let method = match self.method {
            Method::HoldingBased => "holding_based",
            Method::TransactionBased => "transaction_based",
            Method::Hybrid => "hybrid",
        };
        let activity = match self.activity {
            Activity::Holding => "holding",
            Activity::Transaction => "tx",
        };
        format!("{method}_{activity}")
    }
}

/// Daily averages for holding one coin and for one average transaction on a
/// network, under every method.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComparisonRow {
    pub network_id: String,
    pub days: usize,
    /// Days with at least one transaction; the transaction mean runs over these.
    pub transaction_days: usize,
    pub cells: Vec<ComparisonCell>,
}

impl ComparisonRow {
    pub fn cell(&self, method: Method, activity: Activity) -> Option<&ComparisonCell> {
        self.cells.iter().find(|c| c.method == method && c.activity == activity)
    }

    /// Energy of a cell, `None` for N/A cells.
    pub fn energy(&self, method: Method, activity: Activity) -> Option<&Energy> {
        self.cell(method, activity).and_then(|c| c.energy.as_ref())
    }

    fn has_carbon(&self) -> bool {
        self.cells.iter().all(|c| c.energy.is_none() || c.carbon.is_some())
    }
}

const METHODS: [Method; 3] = [Method::HoldingBased, Method::TransactionBased, Method::Hybrid];
const ACTIVITIES: [Activity; 2] = [Activity::Holding, Activity::Transaction];

fn mean<T>(values: &[T], get: impl Fn(&T) -> BigRational) -> Option<BigRational> {
    if values.is_empty() {
        return None;
    }
    let sum: BigRational = values.iter().map(get).sum();
    Some(sum / BigRational::from_integer(values.len().into()))
}

/// Computes one comparison row. A coin's daily share is `1 / effective
/// supply`; an average transaction's is `1 / tx_count`. Each cell is the
/// mean of the per-day allocations; days without transactions are left out
/// of the transaction mean.
pub fn compare(
    network_id: &str,
    days: &[NetworkDay],
    params: &ConsensusParams,
) -> Result<ComparisonRow, AllocationError> {
    check_ordered(days)?;
    let weights = days
        .iter()
        .map(|d| method_weights(d, params))
        .collect::<Result<Vec<MethodWeights>, _>>()?;
    let mut cells = Vec::new();
    let tx_days: Vec<usize> = (0..days.len()).filter(|i| days[*i].tx_count > 0).collect();
    for method in METHODS {
        for activity in ACTIVITIES {
            if !method.covers(activity) {
                cells.push(ComparisonCell {
                    method,
                    activity,
                    energy: None,
                    carbon: None,
                });
                continue;
            }
            let per_day = |i: usize| -> Energy {
                let (day, w) = (&days[i], weights[i].for_method(method));
                match activity {
                    Activity::Holding => {
                        let supply = day.effective_supply();
                        holding_pool(day, &w).scale(&(BigRational::from_integer(1.into()) / supply))
                    }
                    Activity::Transaction => {
                        transaction_pool(day, &w).scale(&BigRational::new(1.into(), day.tx_count.into()))
                    }
                }
            };
            let indices: Vec<usize> = match activity {
                Activity::Holding => (0..days.len()).collect(),
                Activity::Transaction => tx_days.clone(),
            };
            let values: Vec<(usize, Energy)> = indices.iter().map(|&i| (i, per_day(i))).collect();
            let energy = mean(&values, |(_, e)| e.wh().clone()).map(|wh| Energy::from_wh(wh).expect("non-negative"));
            let carbon = values
                .iter()
                .map(|(i, e)| days[*i].emission_factor.as_ref().map(|f| carbonize(e, f)))
                .collect::<Option<Vec<Carbon>>>()
                .and_then(|c| mean(&c, |c| c.grams().clone()))
                .map(|g| Carbon::from_grams(g).expect("non-negative"));
            cells.push(ComparisonCell {
                method,
                activity,
                energy,
                carbon,
            });
        }
    }
    Ok(ComparisonRow {
        network_id: network_id.to_string(),
        days: days.len(),
        transaction_days: tx_days.len(),
        cells,
    })
}

/// Table 1 shaped comparison across networks.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    /// Carbon columns appear only if requested and every row has factors.
    fn carbon_columns(&self, with_carbon: bool) -> bool {
        with_carbon && !self.rows.is_empty() && self.rows.iter().all(ComparisonRow::has_carbon)
    }

    fn columns() -> Vec<String> {
        METHODS
            .iter()
            .flat_map(|m| {
                ACTIVITIES.iter().map(move |a| {
                    ComparisonCell {
                        method: *m,
                        activity: *a,
                        energy: None,
                        carbon: None,
                    }
                    .column()
                })
            })
            .collect()
    }

    /// CSV with energies in Wh; N/A cells are written as `N/A`.
    pub fn to_csv(&self, with_carbon: bool) -> String {
        let carbon = self.carbon_columns(with_carbon);
        let mut header = vec!["network_id".to_string(), "days".to_string()];
        header.extend(Self::columns().into_iter().map(|c| format!("{c}_wh")));
        if carbon {
            header.extend(Self::columns().into_iter().map(|c| format!("{c}_gco2e")));
        }
        let mut out = header.join(",");
        out.push('\n');
        for row in &self.rows {
            let mut fields = vec![row.network_id.clone(), row.days.to_string()];
            fields.extend(
                row.cells
                    .iter()
                    .map(|c| c.energy.as_ref().map_or("N/A".into(), |e| display(e.wh()))),
            );
            if carbon {
                fields.extend(
                    row.cells
                        .iter()
                        .map(|c| c.carbon.as_ref().map_or("N/A".into(), |g| display(g.grams()))),
                );
            }
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self, with_carbon: bool) -> String {
        let carbon = self.carbon_columns(with_carbon);
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|row| {
                let mut o = Map::new();
                o.insert("network_id".into(), json!(row.network_id));
                o.insert("days".into(), json!(row.days));
                o.insert("transaction_days".into(), json!(row.transaction_days));
                for c in &row.cells {
                    let energy = c.energy.as_ref().map_or(
                        Value::Null,
                        |e| json!({"wh": display(e.wh()), "wh_exact": to_exact_string(e.wh())}),
                    );
                    o.insert(c.column(), energy);
                    if carbon {
                        let grams = c.carbon.as_ref().map_or(
                            Value::Null,
                            |g| json!({"g": display(g.grams()), "g_exact": to_exact_string(g.grams())}),
                        );
                        o.insert(format!("{}_carbon", c.column()), grams);
                    }
                }
                Value::Object(o)
            })
            .collect();
        pretty(&json!({ "rows": rows }))
    }

    /// Aligned table, four significant digits. Each row uses one unit, the
    /// natural unit of its smallest cell.
    pub fn to_text(&self, with_carbon: bool) -> String {
        let carbon = self.carbon_columns(with_carbon);
        let mut header = vec!["network".to_string()];
        header.extend(Self::columns());
        let mut rows = Vec::new();
        for row in &self.rows {
            let unit = row
                .cells
                .iter()
                .filter_map(|c| c.energy.as_ref())
                .filter(|e| !e.is_zero())
                .min()
                .map_or(EnergyUnit::Wh, Energy::natural_unit);
            let mut fields = vec![row.network_id.clone()];
            fields.extend(row.cells.iter().map(|c| {
                c.energy
                    .as_ref()
                    .map_or("N/A".into(), |e| convert_energy(e, unit, TEXT_TABLE_DIGITS).to_string())
            }));
            rows.push(fields);
            if carbon {
                let mut fields = vec![String::new()];
                fields.extend(row.cells.iter().map(|c| {
                    c.carbon
                        .as_ref()
                        .map_or("N/A".into(), |g| format_carbon(g, TEXT_TABLE_DIGITS))
                }));
                rows.push(fields);
            }
        }
        aligned(&header, &rows)
    }

    pub fn render(&self, format: Format, with_carbon: bool) -> String {
        match format {
            Format::Csv => self.to_csv(with_carbon),
            Format::Json => self.to_json(with_carbon),
            Format::Text => self.to_text(with_carbon),
        }
    }
}

fn aligned(header: &[String], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, f) in widths.iter_mut().zip(row) {
            *w = (*w).max(f.len());
        }
    }
    let line = |fields: &[String]| -> String {
        let cells: Vec<String> = fields
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (f, w))| if i == 0 { format!("{f:<w$}") } else { format!("{f:>w$}") })
            .collect();
        cells.join("  ").trim_end().to_string()
    };
    let mut out = line(header);
    out.push('\n');
    out.push_str(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  "));
    out.push('\n');
    for row in rows {
        out.push_str(&line(row));
        out.push('\n');
    }
    out
}

fn pretty(value: &Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

/// Per-day transaction weight: fee share on PoW, transaction share on PoS.
pub fn weight_series(days: &[NetworkDay], params: &ConsensusParams) -> Result<Vec<MethodWeights>, AllocationError> {
    check_ordered(days)?;
    days.iter().map(|d| method_weights(d, params)).collect()
}

pub fn series_to_csv(series: &[MethodWeights]) -> String {
    let mut out = String::from("date,transaction_weight\n");
    for w in series {
        let _ = writeln!(out, "{},{}", w.date, machine_decimal(w.transaction_weight.value()));
    }
    out
}

pub fn series_to_json(network_id: &str, series: &[MethodWeights]) -> String {
    let points: Vec<Value> = series
        .iter()
        .map(|w| {
            json!({
                "date": w.date.to_string(),
                "transaction_weight": machine_decimal(w.transaction_weight.value()),
                "source": w.source().as_str(),
            })
        })
        .collect();
    pretty(&json!({"network_id": network_id, "series": points}))
}

pub fn series_to_text(network_id: &str, series: &[MethodWeights]) -> String {
    let header = vec!["date".to_string(), format!("{network_id} transaction_weight")];
    let rows: Vec<Vec<String>> = series
        .iter()
        .map(|w| {
            vec![
                w.date.to_string(),
                format_significant(w.transaction_weight.value(), TEXT_TABLE_DIGITS),
            ]
        })
        .collect();
    aligned(&header, &rows)
}

/// Columns of the allocation results CSV.
pub const RESULT_COLUMNS: [&str; 20] = [
    "date",
    "network_id",
    "entity_id",
    "method",
    "activity",
    "app_id",
    "energy_wh",
    "energy_wh_exact",
    "carbon_g",
    "carbon_g_exact",
    "network_energy_wh",
    "weight_source",
    "transaction_weight",
    "factors",
    "pool_wh",
    "basis",
    "entity_quantity",
    "basis_total",
    "entity_share",
    "origin",
];

/// A batch of results for one network (or layer-2) with its summary.
#[derive(Debug, Clone)]
pub struct ResultSet<'a> {
    pub network_id: &'a str,
    pub results: &'a [AllocationResult],
    pub summary: &'a PeriodSummary,
}

fn factors_string(r: &AllocationResult) -> String {
    r.audit
        .factors
        .iter()
        .map(|f| format!("{}={}", f.kind.as_str(), to_exact_string(&f.value)))
        .collect::<Vec<_>>()
        .join(";")
}

fn result_fields(network_id: &str, r: &AllocationResult, with_carbon: bool) -> Vec<String> {
    let carbon = r.carbon.as_ref().filter(|_| with_carbon);
    let a = &r.audit;
    vec![
        r.date.to_string(),
        network_id.to_string(),
        r.entity_id.to_string(),
        r.method.as_str().to_string(),
        r.activity.as_str().to_string(),
        r.app_id.clone().unwrap_or_default(),
        display(r.energy.wh()),
        to_exact_string(r.energy.wh()),
        carbon.map(|c| display(c.grams())).unwrap_or_default(),
        carbon.map(|c| to_exact_string(c.grams())).unwrap_or_default(),
        to_exact_string(a.network_energy.wh()),
        a.transaction_weight
            .as_ref()
            .map(|(s, _)| s.as_str().to_string())
            .unwrap_or_default(),
        a.transaction_weight
            .as_ref()
            .map(|(_, w)| to_exact_string(w.value()))
            .unwrap_or_default(),
        factors_string(r),
        to_exact_string(a.pool.wh()),
        a.basis.as_str().to_string(),
        to_exact_string(&a.entity_quantity),
        to_exact_string(&a.basis_total),
        to_exact_string(&a.entity_share),
        a.origin.to_string(),
    ]
}

fn csv_line(fields: &[String]) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(fields).expect("in-memory write");
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

pub fn results_to_csv(sets: &[ResultSet<'_>], with_carbon: bool) -> String {
    let mut out = csv_line(&RESULT_COLUMNS.map(String::from));
    for set in sets {
        for r in set.results {
            out.push_str(&csv_line(&result_fields(set.network_id, r, with_carbon)));
        }
    }
    out
}

pub const SUMMARY_COLUMNS: [&str; 9] = [
    "network_id",
    "method",
    "activity",
    "days",
    "total_wh",
    "daily_mean_wh",
    "ratio_of_averages_wh",
    "total_carbon_g",
    "daily_mean_carbon_g",
];

pub fn summary_to_csv(sets: &[ResultSet<'_>], with_carbon: bool) -> String {
    let mut out = csv_line(&SUMMARY_COLUMNS.map(String::from));
    for set in sets {
        for row in &set.summary.rows {
            let carbon = |c: &Option<Carbon>| {
                c.as_ref()
                    .filter(|_| with_carbon)
                    .map(|c| display(c.grams()))
                    .unwrap_or_default()
            };
            out.push_str(&csv_line(&[
                set.network_id.to_string(),
                row.method.as_str().to_string(),
                row.activity.as_str().to_string(),
                set.summary.days.to_string(),
                display(row.total.wh()),
                display(row.daily_mean.wh()),
                display(row.ratio_of_averages.wh()),
                carbon(&row.total_carbon),
                carbon(&row.daily_mean_carbon),
            ]));
        }
    }
    out
}

fn exact_pair(value: &BigRational, key: &str) -> (String, Value, String, Value) {
    (
        key.to_string(),
        json!(display(value)),
        format!("{key}_exact"),
        json!(to_exact_string(value)),
    )
}

fn insert_pair(o: &mut Map<String, Value>, value: &BigRational, key: &str) {
    let (k1, v1, k2, v2) = exact_pair(value, key);
    o.insert(k1, v1);
    o.insert(k2, v2);
}

fn result_json(network_id: &str, r: &AllocationResult, with_carbon: bool) -> Value {
    let a = &r.audit;
    let mut o = Map::new();
    o.insert("date".into(), json!(r.date.to_string()));
    o.insert("network_id".into(), json!(network_id));
    o.insert("entity_id".into(), json!(r.entity_id.0));
    o.insert("method".into(), json!(r.method.as_str()));
    o.insert("activity".into(), json!(r.activity.as_str()));
    o.insert("app_id".into(), r.app_id.as_ref().map_or(Value::Null, |a| json!(a)));
    insert_pair(&mut o, r.energy.wh(), "energy_wh");
    match r.carbon.as_ref().filter(|_| with_carbon) {
        Some(c) => insert_pair(&mut o, c.grams(), "carbon_g"),
        None => {
            o.insert("carbon_g".into(), Value::Null);
        }
    }
    let factors: Vec<Value> = a
        .factors
        .iter()
        .map(|f| json!({"kind": f.kind.as_str(), "value": to_exact_string(&f.value)}))
        .collect();
    let weight = a.transaction_weight.as_ref().map_or(
        Value::Null,
        |(s, w)| json!({"source": s.as_str(), "value": to_exact_string(w.value())}),
    );
    o.insert(
        "audit".into(),
        json!({
            "network_energy_wh": to_exact_string(a.network_energy.wh()),
            "transaction_weight": weight,
            "factors": factors,
            "pool_wh": to_exact_string(a.pool.wh()),
            "basis": a.basis.as_str(),
            "entity_quantity": to_exact_string(&a.entity_quantity),
            "basis_total": to_exact_string(&a.basis_total),
            "entity_share": to_exact_string(&a.entity_share),
            "origin": a.origin.to_string(),
        }),
    );
    Value::Object(o)
}

pub fn results_to_json(sets: &[ResultSet<'_>], with_carbon: bool) -> String {
    let results: Vec<Value> = sets
        .iter()
        .flat_map(|s| s.results.iter().map(|r| result_json(s.network_id, r, with_carbon)))
        .collect();
    let summaries: Vec<Value> = sets
        .iter()
        .map(|s| {
            let rows: Vec<Value> = s
                .summary
                .rows
                .iter()
                .map(|row| {
                    let mut o = Map::new();
                    o.insert("method".into(), json!(row.method.as_str()));
                    o.insert("activity".into(), json!(row.activity.as_str()));
                    insert_pair(&mut o, row.total.wh(), "total_wh");
                    insert_pair(&mut o, row.daily_mean.wh(), "daily_mean_wh");
                    insert_pair(&mut o, row.ratio_of_averages.wh(), "ratio_of_averages_wh");
                    for (key, c) in [
                        ("total_carbon_g", &row.total_carbon),
                        ("daily_mean_carbon_g", &row.daily_mean_carbon),
                    ] {
                        match c.as_ref().filter(|_| with_carbon) {
                            Some(c) => insert_pair(&mut o, c.grams(), key),
                            None => {
                                o.insert(key.into(), Value::Null);
                            }
                        }
                    }
                    Value::Object(o)
                })
                .collect();
            json!({"network_id": s.network_id, "days": s.summary.days, "rows": rows})
        })
        .collect();
    pretty(&json!({"results": results, "summary": summaries}))
}

pub fn results_to_text(sets: &[ResultSet<'_>], with_carbon: bool) -> String {
    let mut header: Vec<String> = [
        "date", "network", "entity", "method", "activity", "app", "energy", "basis", "share",
    ]
    .map(String::from)
    .to_vec();
    if with_carbon {
        header.push("carbon".into());
    }
    let mut rows = Vec::new();
    for set in sets {
        for r in set.results {
            let mut fields = vec![
                r.date.to_string(),
                set.network_id.to_string(),
                r.entity_id.to_string(),
                r.method.as_str().to_string(),
                r.activity.as_str().to_string(),
                r.app_id.clone().unwrap_or_else(|| "-".into()),
                format_energy(&r.energy, DEFAULT_SIGNIFICANT_DIGITS),
                r.audit.basis.as_str().to_string(),
                format_significant(&r.audit.entity_share, DEFAULT_SIGNIFICANT_DIGITS),
            ];
            if with_carbon {
                fields.push(
                    r.carbon
                        .as_ref()
                        .map_or("-".into(), |c| format_carbon(c, DEFAULT_SIGNIFICANT_DIGITS)),
                );
            }
            rows.push(fields);
        }
    }
    let mut out = aligned(&header, &rows);
    out.push('\n');
    let header: Vec<String> = [
        "network",
        "method",
        "activity",
        "days",
        "total",
        "daily mean",
        "ratio of averages",
    ]
    .map(String::from)
    .to_vec();
    let rows: Vec<Vec<String>> = sets
        .iter()
        .flat_map(|s| {
            s.summary.rows.iter().map(move |row| {
                vec![
                    s.network_id.to_string(),
                    row.method.as_str().to_string(),
                    row.activity.as_str().to_string(),
                    s.summary.days.to_string(),
                    format_energy(&row.total, DEFAULT_SIGNIFICANT_DIGITS),
                    format_energy(&row.daily_mean, DEFAULT_SIGNIFICANT_DIGITS),
                    format_energy(&row.ratio_of_averages, DEFAULT_SIGNIFICANT_DIGITS),
                ]
            })
        })
        .collect();
    out.push_str(&aligned(&header, &rows));
    out
}

/// Dates covered by `days`, or an error naming every date of the range that
/// has no day.
pub fn require_range(days: &[NetworkDay], from: NaiveDate, to: NaiveDate) -> Result<(), AllocationError> {
    let have: std::collections::BTreeSet<NaiveDate> = days.iter().map(|d| d.date).collect();
    let missing: Vec<NaiveDate> = from
        .iter_days()
        .take_while(|d| *d <= to)
        .filter(|d| !have.contains(d))
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(AllocationError::MissingDay { dates: missing })
    }
}

/// Sum of a result set's energy; useful for reconciliation checks.
pub fn total_energy(results: &[AllocationResult]) -> Energy {
    let wh: BigRational = results.iter().fold(BigRational::zero(), |acc, r| acc + r.energy.wh());
    Energy::from_wh(wh).expect("non-negative")
}
