use std::fmt;
use std::fs;
use std::path::Path;

use chrono::NaiveDate;

use carbon_ledger::ingest::remote::RemoteError;
use carbon_ledger::ingest::{fill_forward, load_network_csv, Dataset, IngestError, NetworkProfile, RowError};
use carbon_ledger::layer2::Layer2Day;
use carbon_ledger::AllocationError;

use crate::{DataArgs, Fill};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
    /// Input failed validation; `errors` carries row-addressed details.
    Invalid {
        file: String,
        message: String,
        errors: Vec<RowError>,
    },
    Allocation(AllocationError),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Io(_) => 2,
            CliError::Invalid { .. } | CliError::Allocation(_) => 1,
        }
    }

    pub fn from_ingest(file: &Path, e: IngestError) -> Self {
        let file = file.display().to_string();
        match e {
            IngestError::Io { source, .. } => CliError::Io(format!("{file}: {source}")),
            IngestError::Remote(r) => CliError::from_remote(&file, r),
            other => CliError::Invalid {
                file,
                message: other.to_string(),
                errors: other.row_errors().to_vec(),
            },
        }
    }

    fn from_remote(source: &str, e: RemoteError) -> Self {
        match e {
            RemoteError::Unreachable(_) | RemoteError::Cache { .. } => CliError::Io(format!("{source}: {e}")),
            RemoteError::MalformedResponse(ref rows) => CliError::Invalid {
                file: source.to_string(),
                message: e.to_string(),
                errors: rows.clone(),
            },
            RemoteError::RangeUnavailable { .. } => CliError::Invalid {
                file: source.to_string(),
                message: e.to_string(),
                errors: Vec::new(),
            },
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Io(m) => f.write_str(m),
            CliError::Invalid { file, message, .. } => write!(f, "{file}: {message}"),
            CliError::Allocation(e) => write!(f, "{e}"),
        }
    }
}

impl From<AllocationError> for CliError {
    fn from(e: AllocationError) -> Self {
        CliError::Allocation(e)
    }
}

pub fn profiles(args: &DataArgs) -> Result<Vec<NetworkProfile>, CliError> {
    args.networks
        .iter()
        .map(|n| NetworkProfile::resolve(n).map_err(CliError::Usage))
        .collect()
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

#[cfg(feature = "remote")]
fn fetch(args: &DataArgs, url: &str, profile: &NetworkProfile) -> Result<Dataset, CliError> {
    use carbon_ledger::ingest::remote::RemoteClient;
    use carbon_ledger::ingest::HttpTransport;

    let (Some(from), Some(to)) = (args.from, args.to) else {
        return Err(CliError::Usage("--remote needs both --from and --to".into()));
    };
    let transport = HttpTransport::new().map_err(|e| CliError::from_remote(url, e))?;
    let client = RemoteClient::new(url, &args.cache_dir, transport);
    let days = client
        .fetch_days(profile, from, to)
        .map_err(|e| CliError::from_remote(url, e))?;
    Ok(Dataset::new(profile, days))
}

#[cfg(not(feature = "remote"))]
fn fetch(_: &DataArgs, _: &str, _: &NetworkProfile) -> Result<Dataset, CliError> {
    Err(CliError::Usage("this build has no remote support".into()))
}

/// Loads every network's data, applies `--fill`, and restricts to the
/// requested range. With an explicit range every date in it must be present.
pub fn load_networks(args: &DataArgs) -> Result<Vec<Dataset>, CliError> {
    let profiles = profiles(args)?;
    if let (Some(from), Some(to)) = (args.from, args.to) {
        if from > to {
            return Err(CliError::Usage(format!("--from {from} is after --to {to}")));
        }
    }
    let mut datasets = Vec::new();
    match &args.remote {
        Some(url) => {
            if !args.data.is_empty() {
                return Err(CliError::Usage("--data and --remote are mutually exclusive".into()));
            }
            for p in &profiles {
                datasets.push(fetch(args, url, p)?);
            }
        }
        None => {
            if args.data.len() != profiles.len() {
                return Err(CliError::Usage(format!(
                    "{} --network given but {} --data; pair them by position",
                    profiles.len(),
                    args.data.len()
                )));
            }
            for (p, path) in profiles.iter().zip(&args.data) {
                datasets.push(load_network_csv(path, p).map_err(|e| CliError::from_ingest(path, e))?);
            }
        }
    }
    for ds in &mut datasets {
        if matches!(args.fill, Some(Fill::Forward)) {
            ds.days = fill_forward(&ds.days, args.from, args.to);
        }
        ds.days = ds.days_between(args.from, args.to);
        if args.from.is_some() || args.to.is_some() {
            check_coverage(ds, args.from, args.to)?;
        }
    }
    Ok(datasets)
}

fn check_coverage(ds: &Dataset, from: Option<NaiveDate>, to: Option<NaiveDate>) -> Result<(), CliError> {
    let (Some(first), Some(last)) = (ds.days.first(), ds.days.last()) else {
        return Err(AllocationError::MissingDay {
            dates: from.into_iter().chain(to).collect(),
        }
        .into());
    };
    let from = from.unwrap_or(first.date);
    let to = to.unwrap_or(last.date);
    carbon_ledger::report::require_range(&ds.days, from, to).map_err(CliError::from)
}

/// Splits layer-2 descriptors by the layer-1 dataset at the root of their
/// host chain. Entries without a host belong to the first dataset; a host
/// naming a dataset is normalised to "no host".
pub fn assign_l2s(datasets: &[Dataset], l2s: Vec<Layer2Day>) -> Result<Vec<Vec<Layer2Day>>, CliError> {
    let mut out = vec![Vec::new(); datasets.len()];
    let host_of: std::collections::BTreeMap<String, Option<String>> =
        l2s.iter().map(|l| (l.l2_id.clone(), l.host.clone())).collect();
    for mut l in l2s {
        let mut current = l.host.clone();
        let mut steps = 0;
        let root = loop {
            match current {
                None => break Some(0),
                Some(ref h) => {
                    if let Some(i) = datasets.iter().position(|d| &d.network_id == h) {
                        break Some(i);
                    }
                    match host_of.get(h) {
                        Some(next) if steps <= host_of.len() => {
                            current = next.clone();
                            steps += 1;
                        }
                        Some(_) => return Err(AllocationError::CyclicLayer2(l.l2_id.clone()).into()),
                        None => break None,
                    }
                }
            }
        };
        let Some(root) = root else {
            return Err(AllocationError::UnknownLayer2(l.host.clone().unwrap_or_default()).into());
        };
        if l.host.as_deref() == Some(datasets[root].network_id.as_str()) {
            l.host = None;
        }
        out[root].push(l);
    }
    Ok(out)
}
