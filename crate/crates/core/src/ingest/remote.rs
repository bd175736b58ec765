//! Network telemetry from a remote HTTP source with a local CSV cache.
//!
//! The endpoint is `GET {base}/v1/networks/{id}/days?from=YYYY-MM-DD&to=YYYY-MM-DD`
//! and answers `{"network_id": "...", "days": [ {...}, ... ]}` where each day
//! object uses the network CSV column names. Fetched days are merged into
//! `<cache_dir>/<network_id>.csv`; later requests only fetch dates that are
//! not cached yet.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use chrono::NaiveDate;
use serde_json::Value;

use super::{collect_days, load_network_csv, write_network_csv, IngestError, NetworkProfile, RawDay, RowError};
use crate::model::NetworkDay;

#[derive(Debug, thiserror::Error)]
pub enum RemoteError {
    #[error("remote source unreachable: {0}")]
    Unreachable(String),

    #[error("malformed response: {}", .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "))]
    MalformedResponse(Vec<RowError>),

    #[error("range {from}..={to} unavailable{}", if .missing.is_empty() { String::new() } else { format!(" (missing {} day(s), first {})", .missing.len(), .missing[0]) })]
    RangeUnavailable {
        from: NaiveDate,
        to: NaiveDate,
        missing: Vec<NaiveDate>,
    },

    #[error("cache {}: {source}", path.display())]
    Cache { path: PathBuf, source: std::io::Error },
}

/// Minimal HTTP response.
#[derive(Debug, Clone)]
pub struct Response {
    pub status: u16,
    pub body: String,
}

/// Something that can perform a GET. Failures to connect are `Unreachable`.
pub trait Transport: Send + Sync {
    fn get(&self, url: &str) -> Result<Response, RemoteError>;
}

pub struct RemoteClient<T: Transport> {
    base_url: String,
    cache_dir: PathBuf,
    transport: T,
    fetches: AtomicUsize,
}

fn malformed(reason: impl Into<String>) -> RemoteError {
    RemoteError::MalformedResponse(vec![RowError::invalid(0, "*", reason)])
}

fn dates_in(from: NaiveDate, to: NaiveDate) -> Vec<NaiveDate> {
    from.iter_days().take_while(|d| *d <= to).collect()
}

impl<T: Transport> RemoteClient<T> {
    pub fn new(base_url: impl Into<String>, cache_dir: impl Into<PathBuf>, transport: T) -> Self {
        RemoteClient {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            cache_dir: cache_dir.into(),
            transport,
            fetches: AtomicUsize::new(0),
        }
    }

    /// Number of requests sent so far.
    pub fn fetch_count(&self) -> usize {
        self.fetches.load(Ordering::SeqCst)
    }

    pub fn cache_path(&self, network_id: &str) -> PathBuf {
        self.cache_dir.join(format!("{network_id}.csv"))
    }

    fn read_cache(&self, path: &Path, profile: &NetworkProfile) -> Result<Vec<NetworkDay>, RemoteError> {
        if !path.exists() {
            return Ok(Vec::new());
        }
        match load_network_csv(path, profile) {
            Ok(ds) => Ok(ds.days),
            Err(IngestError::Io { source, .. }) => Err(RemoteError::Cache {
                path: path.to_path_buf(),
                source,
            }),
            Err(e) => Err(RemoteError::Cache {
                path: path.to_path_buf(),
                source: std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string()),
            }),
        }
    }

    fn write_cache(&self, path: &Path, days: &[NetworkDay]) -> Result<(), RemoteError> {
        let cache_err = |source| RemoteError::Cache {
            path: path.to_path_buf(),
            source,
        };
        fs::create_dir_all(&self.cache_dir).map_err(cache_err)?;
        let mut buf = Vec::new();
        write_network_csv(&mut buf, days).map_err(cache_err)?;
        let tmp = path.with_extension("csv.tmp");
        fs::write(&tmp, buf).map_err(cache_err)?;
        fs::rename(&tmp, path).map_err(cache_err)
    }

    fn request(
        &self,
        profile: &NetworkProfile,
        from: NaiveDate,
        to: NaiveDate,
    ) -> Result<Vec<NetworkDay>, RemoteError> {
        let url = format!(
            "{}/v1/networks/{}/days?from={from}&to={to}",
            self.base_url, profile.network_id
        );
        self.fetches.fetch_add(1, Ordering::SeqCst);
        let response = self.transport.get(&url)?;
        match response.status {
            200..=299 => {}
            404 => {
                return Err(RemoteError::RangeUnavailable {
                    from,
                    to,
                    missing: dates_in(from, to),
                })
            }
            status => return Err(RemoteError::Unreachable(format!("HTTP {status} from {url}"))),
        }
        parse_days_response(&response.body, profile)
    }

    /// Days in `[from, to]`, served from cache where possible. Every date in
    /// the range must be available.
    pub fn fetch_days(
        &self,
        profile: &NetworkProfile,
        from: NaiveDate,
        to: NaiveDate,
    ) -> Result<Vec<NetworkDay>, RemoteError> {
        if from > to {
            return Ok(Vec::new());
        }
        let path = self.cache_path(&profile.network_id);
        let mut cached: BTreeMap<NaiveDate, NetworkDay> = self
            .read_cache(&path, profile)?
            .into_iter()
            .map(|d| (d.date, d))
            .collect();
        let wanted = dates_in(from, to);
        let missing: Vec<NaiveDate> = wanted.iter().copied().filter(|d| !cached.contains_key(d)).collect();
        if let (Some(first), Some(last)) = (missing.first(), missing.last()) {
            let fetched = self.request(profile, *first, *last)?;
            let before = cached.len();
            for day in fetched.into_iter().filter(|d| d.date >= *first && d.date <= *last) {
                cached.entry(day.date).or_insert(day);
            }
            if cached.len() != before {
                let all: Vec<NetworkDay> = cached.values().cloned().collect();
                self.write_cache(&path, &all)?;
            }
            let still: Vec<NaiveDate> = missing.into_iter().filter(|d| !cached.contains_key(d)).collect();
            if !still.is_empty() {
                return Err(RemoteError::RangeUnavailable {
                    from,
                    to,
                    missing: still,
                });
            }
        }
        Ok(wanted.iter().map(|d| cached[d].clone()).collect())
    }
}

/// Validates a days response body with the same rules as a CSV file.
pub fn parse_days_response(body: &str, profile: &NetworkProfile) -> Result<Vec<NetworkDay>, RemoteError> {
    let root: Value = serde_json::from_str(body).map_err(|e| malformed(format!("invalid JSON: {e}")))?;
    if let Some(id) = root.get("network_id").and_then(Value::as_str) {
        if id != profile.network_id {
            return Err(malformed(format!(
                "network_id `{id}` does not match `{}`",
                profile.network_id
            )));
        }
    }
    let items = root
        .get("days")
        .and_then(Value::as_array)
        .ok_or_else(|| malformed("missing `days` array"))?;
    let mut owned: Vec<Result<Vec<(&'static str, String)>, RowError>> = Vec::new();
    for (i, item) in items.iter().enumerate() {
        let Some(obj) = item.as_object() else {
            owned.push(Err(RowError::invalid(i + 1, "*", "day must be an object")));
            continue;
        };
        let mut cells = Vec::new();
        let mut bad = None;
        for column in super::NETWORK_COLUMNS {
            match obj.get(column) {
                None | Some(Value::Null) => {}
                Some(Value::String(s)) if s.is_empty() => {}
                Some(Value::String(s)) => cells.push((column, s.clone())),
                Some(Value::Number(n)) if column == "tx_count" => cells.push((column, n.to_string())),
                Some(_) => {
                    bad = Some(RowError::invalid(i + 1, column, "must be a JSON string"));
                    break;
                }
            }
        }
        owned.push(bad.map_or(Ok(cells), Err));
    }
    let rows = owned.iter().map(|r| match r {
        Ok(cells) => Ok(cells.iter().map(|(c, v)| (*c, v.as_str())).collect::<RawDay<'_>>()),
        Err(e) => Err(e.clone()),
    });
    collect_days(rows, profile).map_err(RemoteError::MalformedResponse)
}

/// Fetches days over HTTP with the default transport.
#[cfg(feature = "remote")]
pub fn fetch_remote_days(
    base_url: &str,
    profile: &NetworkProfile,
    from: NaiveDate,
    to: NaiveDate,
    cache_dir: &Path,
) -> Result<Vec<NetworkDay>, RemoteError> {
    RemoteClient::new(base_url, cache_dir, super::HttpTransport::new()?).fetch_days(profile, from, to)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ConsensusKind;
    use std::sync::Mutex;

    struct Canned {
        days: BTreeMap<NaiveDate, String>,
        urls: Mutex<Vec<String>>,
    }

    impl Transport for Canned {
        fn get(&self, url: &str) -> Result<Response, RemoteError> {
            self.urls.lock().unwrap().push(url.to_string());
            let q = url.split_once('?').unwrap().1;
            let mut parts = q
                .split('&')
                .map(|kv| kv.split_once('=').unwrap().1.parse::<NaiveDate>().unwrap());
            let (from, to) = (parts.next().unwrap(), parts.next().unwrap());
            let days: Vec<&str> = self.days.range(from..=to).map(|(_, v)| v.as_str()).collect();
            Ok(Response {
                status: 200,
                body: format!("{{\"network_id\":\"btc\",\"days\":[{}]}}", days.join(",")),
            })
        }
    }

    fn d(day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2021, 1, day).unwrap()
    }

    fn canned(days: &[u32]) -> Canned {
        Canned {
            days: days
                .iter()
                .map(|&n| {
                    (
                        d(n),
                        format!(
                            "{{\"date\":\"{}\",\"energy_wh\":\"100\",\"block_reward\":\"6.25\",\"tx_fees_total\":\"0.5\",\"coin_supply\":\"100\",\"tx_count\":10}}",
                            d(n)
                        ),
                    )
                })
                .collect(),
            urls: Mutex::new(Vec::new()),
        }
    }

    fn profile() -> NetworkProfile {
        NetworkProfile::new("btc", ConsensusKind::ProofOfWork, 8)
    }

    #[test]
    fn caches_and_fetches_only_gaps() {
        let dir = tempfile::tempdir().unwrap();
        let client = RemoteClient::new("http://example.test/", dir.path(), canned(&[1, 2, 3, 4, 5]));
        let days = client.fetch_days(&profile(), d(1), d(3)).unwrap();
        assert_eq!(days.len(), 3);
        assert_eq!(client.fetch_count(), 1);
        assert!(client.cache_path("btc").exists());

        client.fetch_days(&profile(), d(2), d(3)).unwrap();
        assert_eq!(client.fetch_count(), 1);

        client.fetch_days(&profile(), d(1), d(5)).unwrap();
        assert_eq!(client.fetch_count(), 2);
        let urls = client.transport.urls.lock().unwrap();
        assert_eq!(
            urls[1],
            "http://example.test/v1/networks/btc/days?from=2021-01-04&to=2021-01-05"
        );
    }

    #[test]
    fn missing_dates_are_unavailable() {
        let dir = tempfile::tempdir().unwrap();
        let client = RemoteClient::new("http://x", dir.path(), canned(&[1, 3]));
        match client.fetch_days(&profile(), d(1), d(3)) {
            Err(RemoteError::RangeUnavailable { missing, .. }) => assert_eq!(missing, vec![d(2)]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_bodies() {
        assert!(matches!(
            parse_days_response("nope", &profile()),
            Err(RemoteError::MalformedResponse(_))
        ));
        let body = r#"{"days":[{"date":"2021-01-01","energy_wh":"-1","block_reward":"1","tx_fees_total":"0","coin_supply":"1","tx_count":1}]}"#;
        match parse_days_response(body, &profile()) {
            Err(RemoteError::MalformedResponse(rows)) => assert_eq!(rows[0].column, "energy_wh"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
