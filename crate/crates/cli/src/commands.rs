use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::NaiveDate;
use serde_json::{json, Value};

use carbon_ledger::apps::{allocate_apps, AppApproach};
use carbon_ledger::engine::{allocate_portfolio, method_weights, PeriodSummary};
use carbon_ledger::ingest::{
    load_apps_json, load_l2_json, load_network_csv, parse_portfolio_json, portfolio_network_id, Dataset, IngestError,
    NetworkProfile, RowError,
};
use carbon_ledger::layer2::{Layer2Day, Layer2Resolver};
use carbon_ledger::model::{AllocationResult, Method, Portfolio};
use carbon_ledger::report::{
    compare as compare_network, results_to_csv, results_to_json, results_to_text, series_to_csv, series_to_json,
    series_to_text, summary_to_csv, weight_series, ComparisonTable, Format, ResultSet,
};

use crate::load::{assign_l2s, load_networks, profiles, read_text, CliError};
use crate::{AllocateArgs, CompareArgs, FormatArg, SeriesArgs, ValidateArgs};

fn write_output(out: Option<&Path>, content: &str) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, content).map_err(|e| CliError::Io(format!("{}: {e}", path.display()))),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

/// One problem found by `validate`.
struct Problem {
    file: String,
    message: String,
    row: Option<RowError>,
}

impl Problem {
    fn from_error(e: CliError) -> Result<Vec<Problem>, CliError> {
        match e {
            CliError::Invalid { file, message, errors } if errors.is_empty() => Ok(vec![Problem {
                file,
                message,
                row: None,
            }]),
            CliError::Invalid { file, errors, .. } => Ok(errors
                .into_iter()
                .map(|r| Problem {
                    file: file.clone(),
                    message: r.to_string(),
                    row: Some(r),
                })
                .collect()),
            CliError::Allocation(a) => Ok(vec![Problem {
                file: String::new(),
                message: a.to_string(),
                row: None,
            }]),
            other => Err(other),
        }
    }

    fn to_json(&self) -> Value {
        match &self.row {
            Some(r) => json!({
                "file": self.file,
                "kind": r.kind,
                "section": r.section,
                "row": r.row,
                "column": r.column,
                "reason": r.reason,
            }),
            None => json!({
                "file": self.file,
                "kind": "file_invalid",
                "section": null,
                "row": null,
                "column": null,
                "reason": self.message,
            }),
        }
    }
}

fn record<T>(problems: &mut Vec<Problem>, outcome: Result<T, CliError>) -> Result<Option<T>, CliError> {
    match outcome {
        Ok(v) => Ok(Some(v)),
        Err(e) => {
            problems.extend(Problem::from_error(e)?);
            Ok(None)
        }
    }
}

fn ingest<T>(path: &Path, r: Result<T, IngestError>) -> Result<T, CliError> {
    r.map_err(|e| CliError::from_ingest(path, e))
}

/// Profile for a portfolio: its layer-1 dataset, or a layer-2 known to one.
fn portfolio_profile(network_id: &str, datasets: &[Dataset], l2s: &[Vec<Layer2Day>]) -> Option<NetworkProfile> {
    if let Some(ds) = datasets.iter().find(|d| d.network_id == network_id) {
        return Some(ds.profile());
    }
    l2s.iter()
        .flatten()
        .find(|l| l.l2_id == network_id)
        .map(|l| NetworkProfile::new(network_id, l.params.kind, l.decimals))
}

fn load_portfolio(path: &Path, datasets: &[Dataset], l2s: &[Vec<Layer2Day>]) -> Result<Portfolio, CliError> {
    let text = read_text(path)?;
    let network_id = ingest(path, portfolio_network_id(&text))?;
    let profile = portfolio_profile(&network_id, datasets, l2s).ok_or_else(|| CliError::Invalid {
        file: path.display().to_string(),
        message: format!("network `{network_id}` is neither a --network nor a layer-2 from --l2"),
        errors: Vec::new(),
    })?;
    ingest(path, parse_portfolio_json(&text, &profile))
}

fn apps_target(datasets: &[Dataset], network_id: Option<&str>, path: &Path) -> Result<usize, CliError> {
    match network_id {
        None => Ok(0),
        Some(id) => datasets
            .iter()
            .position(|d| d.network_id == id)
            .ok_or_else(|| CliError::Invalid {
                file: path.display().to_string(),
                message: format!("applications are for `{id}`, which is not a --network"),
                errors: Vec::new(),
            }),
    }
}

pub fn validate(args: &ValidateArgs) -> Result<ExitCode, CliError> {
    let mut problems = Vec::new();
    let mut datasets = Vec::new();
    if args.data.remote.is_some() {
        datasets = record(&mut problems, load_networks(&args.data))?.unwrap_or_default();
    } else {
        let profiles = profiles(&args.data)?;
        if profiles.len() != args.data.data.len() {
            return Err(CliError::Usage(format!(
                "{} --network given but {} --data; pair them by position",
                profiles.len(),
                args.data.data.len()
            )));
        }
        for (p, path) in profiles.iter().zip(&args.data.data) {
            if let Some(ds) = record(&mut problems, ingest(path, load_network_csv(path, p)))? {
                datasets.push(ds);
            }
        }
    }
    let networks_ok = problems.is_empty();

    if let Some(path) = &args.apps {
        if let Some(file) = record(&mut problems, ingest(path, load_apps_json(path)))? {
            if networks_ok {
                let target = record(&mut problems, apps_target(&datasets, file.network_id.as_deref(), path))?;
                if let Some(i) = target {
                    record(&mut problems, ingest(path, datasets[i].attach_apps(file)))?;
                }
            }
        }
    }
    let mut l2s = vec![Vec::new(); datasets.len()];
    if let Some(path) = &args.l2 {
        if let Some(all) = record(&mut problems, ingest(path, load_l2_json(path)))? {
            if networks_ok {
                if let Some(assigned) = record(&mut problems, assign_l2s(&datasets, all))? {
                    for (ds, l) in datasets.iter_mut().zip(&assigned) {
                        record(&mut problems, ingest(path, ds.attach_l2s(l.clone())))?;
                    }
                    l2s = assigned;
                }
            }
        }
    }
    for path in &args.portfolios {
        if let Some(p) = record(&mut problems, load_portfolio(path, &datasets, &l2s))? {
            if let Some(ds) = datasets.iter().find(|d| d.network_id == p.network_id) {
                let errors = ds.validate_portfolio(&p);
                if !errors.is_empty() {
                    problems.extend(Problem::from_error(CliError::Invalid {
                        file: path.display().to_string(),
                        message: String::new(),
                        errors,
                    })?);
                }
            }
        }
    }

    let report = match args.format.map(Format::from) {
        Some(Format::Json) => {
            let errors: Vec<Value> = problems.iter().map(Problem::to_json).collect();
            let mut s = serde_json::to_string_pretty(&json!({"valid": problems.is_empty(), "errors": errors}))
                .expect("serializable");
            s.push('\n');
            s
        }
        _ if problems.is_empty() => "valid\n".to_string(),
        _ => problems
            .iter()
            .map(|p| match (&p.row, p.file.is_empty()) {
                (_, true) => format!("{}\n", p.message),
                _ => format!("{}: {}\n", p.file, p.message),
            })
            .collect(),
    };
    write_output(args.out.as_deref(), &report)?;
    Ok(if problems.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn in_range(date: NaiveDate, from: Option<NaiveDate>, to: Option<NaiveDate>) -> bool {
    from.is_none_or(|f| date >= f) && to.is_none_or(|t| date <= t)
}

fn restrict_portfolio(p: &Portfolio, from: Option<NaiveDate>, to: Option<NaiveDate>) -> Portfolio {
    Portfolio {
        holdings: p
            .holdings
            .iter()
            .filter(|h| in_range(h.date, from, to))
            .cloned()
            .collect(),
        transactions: p
            .transactions
            .iter()
            .filter(|t| in_range(t.date, from, to))
            .cloned()
            .collect(),
        ..p.clone()
    }
}

struct Allocated {
    network_id: String,
    results: Vec<AllocationResult>,
    summary: PeriodSummary,
}

fn allocate_layer1(
    ds: &Dataset,
    portfolio: &Portfolio,
    method: Method,
    approach: AppApproach,
    with_apps: bool,
) -> Result<Allocated, CliError> {
    let (app_txs, net_txs): (Vec<_>, Vec<_>) = portfolio
        .transactions
        .iter()
        .cloned()
        .partition(|t| with_apps && t.app_id.is_some());
    let network_part = Portfolio {
        transactions: net_txs,
        ..portfolio.clone()
    };
    let mut allocation = allocate_portfolio(&ds.days, &ds.consensus, &network_part, method)?;
    if with_apps {
        let app_results = allocate_apps(
            &ds.days,
            &ds.consensus,
            &ds.apps,
            &ds.token_holdings,
            &app_txs,
            method,
            approach,
        )?;
        if !app_results.is_empty() {
            let mut results = allocation.results;
            results.extend(app_results);
            results.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
            let weights = ds
                .days
                .iter()
                .map(|d| method_weights(d, &ds.consensus))
                .collect::<Result<Vec<_>, _>>()?;
            allocation.summary = PeriodSummary::from_results(method, &results, &weights);
            allocation.results = results;
        }
    }
    Ok(Allocated {
        network_id: portfolio.network_id.clone(),
        results: allocation.results,
        summary: allocation.summary,
    })
}

pub fn allocate(args: &AllocateArgs) -> Result<ExitCode, CliError> {
    let (from, to) = (args.data.from, args.data.to);
    let mut datasets = load_networks(&args.data)?;
    let method = Method::from(args.method);
    let approach = AppApproach::from(args.app_method);

    let mut app_owner = None;
    if let Some(path) = &args.apps {
        let mut file = ingest(path, load_apps_json(path))?;
        file.apps.retain(|a| in_range(a.date, from, to));
        file.token_holdings.retain(|h| in_range(h.date, from, to));
        let i = apps_target(&datasets, file.network_id.as_deref(), path)?;
        ingest(path, datasets[i].attach_apps(file))?;
        app_owner = Some(i);
    }
    let l2s = match &args.l2 {
        Some(path) => {
            let mut all = ingest(path, load_l2_json(path))?;
            all.retain(|l| in_range(l.date, from, to));
            assign_l2s(&datasets, all)?
        }
        None => vec![Vec::new(); datasets.len()],
    };

    let mut allocated = Vec::new();
    for path in &args.portfolios {
        let portfolio = restrict_portfolio(&load_portfolio(path, &datasets, &l2s)?, from, to);
        if let Some(i) = datasets.iter().position(|d| d.network_id == portfolio.network_id) {
            let ds = &datasets[i];
            allocated.push(allocate_layer1(ds, &portfolio, method, approach, app_owner == Some(i))?);
            continue;
        }
        let i = l2s
            .iter()
            .position(|ls| ls.iter().any(|l| l.l2_id == portfolio.network_id))
            .expect("profile lookup found this layer-2");
        let ds = &datasets[i];
        let resolver = Layer2Resolver::new(&ds.network_id, ds.consensus, &ds.days, &l2s[i]);
        let dates = resolver.dates_of(&portfolio.network_id);
        let allocation = resolver.allocate(&portfolio.network_id, &dates, &portfolio, method)?;
        allocated.push(Allocated {
            network_id: portfolio.network_id.clone(),
            results: allocation.results,
            summary: allocation.summary,
        });
    }

    let sets: Vec<ResultSet<'_>> = allocated
        .iter()
        .map(|a| ResultSet {
            network_id: &a.network_id,
            results: &a.results,
            summary: &a.summary,
        })
        .collect();
    let carbon = args.output.carbon;
    let out = args.output.out.as_deref();
    match args.output.format.map_or(Format::Csv, Format::from) {
        Format::Csv => {
            let results = results_to_csv(&sets, carbon);
            let summary = summary_to_csv(&sets, carbon);
            match out {
                Some(path) => {
                    write_output(Some(path), &results)?;
                    write_output(Some(&summary_path(path)), &summary)?;
                }
                None => write_output(None, &format!("{results}\n{summary}"))?,
            }
        }
        Format::Json => write_output(out, &results_to_json(&sets, carbon))?,
        Format::Text => write_output(out, &results_to_text(&sets, carbon))?,
    }
    Ok(ExitCode::SUCCESS)
}

/// `results.csv` → `results.summary.csv`.
pub fn summary_path(path: &Path) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.summary.csv"))
}

pub fn compare(args: &CompareArgs) -> Result<ExitCode, CliError> {
    let datasets = load_networks(&args.data)?;
    let rows = datasets
        .iter()
        .map(|ds| compare_network(&ds.network_id, &ds.days, &ds.consensus))
        .collect::<Result<Vec<_>, _>>()?;
    let table = ComparisonTable { rows };
    let format = args.output.format.map_or(Format::Text, Format::from);
    write_output(args.output.out.as_deref(), &table.render(format, args.output.carbon))?;
    Ok(ExitCode::SUCCESS)
}

pub fn series(args: &SeriesArgs) -> Result<ExitCode, CliError> {
    if args.data.networks.len() != 1 {
        return Err(CliError::Usage("series takes exactly one --network".into()));
    }
    let datasets = load_networks(&args.data)?;
    let ds = &datasets[0];
    let series = weight_series(&ds.days, &ds.consensus)?;
    let content = match args.output.format.unwrap_or(FormatArg::Csv) {
        FormatArg::Csv => series_to_csv(&series),
        FormatArg::Json => series_to_json(&ds.network_id, &series),
        FormatArg::Text => series_to_text(&ds.network_id, &series),
    };
    write_output(args.output.out.as_deref(), &content)?;
    Ok(ExitCode::SUCCESS)
}
