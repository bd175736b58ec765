use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde_json::Value;
use tempfile::TempDir;

const HEADER: &str = "date,energy_wh,block_reward,tx_fees_total,coin_supply,lost_coin_fraction,tx_count,gas_total,pos_tx_share,emission_factor_g_per_kwh\n";

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_carbon-ledger"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn btc_csv(dir: &Path) -> PathBuf {
    write(
        dir,
        "btc.csv",
        &format!(
            "{HEADER}2021-01-01,283750000000,939.9,60.1,18716000,,263260,,,400\n2021-01-02,283750000000,939.9,60.1,18716000,,263260,,,400\n"
        ),
    )
}

fn portfolio(dir: &Path) -> PathBuf {
    write(
        dir,
        "portfolio.json",
        r#"{
  "schema_version": "1",
  "network_id": "bitcoin",
  "holdings": [
    {"entity_id": "fund", "date": "2021-01-01", "amount": "1"},
    {"entity_id": "fund", "date": "2021-01-02", "amount": "2"}
  ],
  "transactions": [
    {"entity_id": "fund", "date": "2021-01-01", "tx_count": 1},
    {"entity_id": "fund", "date": "2021-01-02", "fee_paid": "0.0001", "app_id": "dex"}
  ]
}"#,
    )
}

#[test]
fn validate_clean_bad_and_missing() {
    let dir = TempDir::new().unwrap();
    let clean = btc_csv(dir.path());
    let o = run(&["validate", "--network", "bitcoin", "--data", s(&clean)]);
    assert_eq!(o.status.code(), Some(0));

    let bad = write(
        dir.path(),
        "bad.csv",
        &format!(
            "{HEADER}2021-01-01,-1,1,1,10,,1,,,\n2021-01-02,1,0,0,10,,1,,,\n2021-01-03,1,1,1,10,,1,,,\n2021-01-03,1,1,1,10,,1,,,\n2021-01-05,1,0.000000001,1,10,,1,,,\n"
        ),
    );
    let o = run(&[
        "validate",
        "--network",
        "bitcoin",
        "--data",
        s(&bad),
        "--format",
        "json",
    ]);
    assert_eq!(o.status.code(), Some(1));
    let report: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let errors = report["errors"].as_array().unwrap();
    assert_eq!(errors.len(), 4);
    let rows: Vec<u64> = errors.iter().map(|e| e["row"].as_u64().unwrap()).collect();
    assert_eq!(rows, vec![1, 2, 4, 5]);
    assert_eq!(errors[2]["kind"], "duplicate_date");

    let o = run(&["validate", "--network", "bitcoin", "--data", "/nonexistent/x.csv"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["validate", "--network", "dogecoin", "--data", s(&clean)]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn validate_checks_portfolio_joins() {
    let dir = TempDir::new().unwrap();
    let data = btc_csv(dir.path());
    let p = write(
        dir.path(),
        "p.json",
        r#"{"schema_version":"1","network_id":"bitcoin","holdings":[
            {"entity_id":"a","date":"2021-01-09","amount":"1"},
            {"entity_id":"a","date":"2021-01-01","amount":"99999999"}]}"#,
    );
    let o = run(&[
        "validate",
        "--network",
        "bitcoin",
        "--data",
        s(&data),
        "--portfolio",
        s(&p),
        "--format",
        "json",
    ]);
    assert_eq!(o.status.code(), Some(1));
    let report: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let cols: Vec<&str> = report["errors"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["column"].as_str().unwrap())
        .collect();
    assert_eq!(cols, vec!["date", "amount"]);
}

#[test]
fn compare_reproduces_table_cells() {
    let dir = TempDir::new().unwrap();
    let data = btc_csv(dir.path());
    let o = run(&["compare", "--network", "bitcoin", "--data", s(&data)]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    for cell in ["15.16 kWh", "1078 kWh", "14.25 kWh", "64.78 kWh"] {
        assert!(text.contains(cell), "{cell} missing from\n{text}");
    }
    assert_eq!(text.matches("N/A").count(), 2);

    let o = run(&[
        "compare",
        "--network",
        "bitcoin",
        "--data",
        s(&data),
        "--format",
        "csv",
        "--carbon",
    ]);
    let csv = stdout(&o);
    assert!(csv.lines().next().unwrap().ends_with("hybrid_tx_gco2e"), "{csv}");
}

#[test]
fn series_outputs_weights() {
    let dir = TempDir::new().unwrap();
    let zero = write(
        dir.path(),
        "zero.csv",
        &format!("{HEADER}2021-01-01,1,6.25,0,10,,0,,,\n2021-01-02,1,6.25,0,10,,0,,,\n"),
    );
    let o = run(&["series", "--network", "bitcoin", "--data", s(&zero)]);
    assert_eq!(stdout(&o), "date,transaction_weight\n2021-01-01,0\n2021-01-02,0\n");

    let pos = write(
        dir.path(),
        "pos.csv",
        &format!(
            "{HEADER}2022-10-01,6246575,,,102402874,,742755,,0.022,\n2022-10-02,6246575,,,102402874,,742755,,0.022,\n"
        ),
    );
    let o = run(&["series", "--network", "ethereum-pos", "--data", s(&pos)]);
    assert_eq!(
        stdout(&o),
        "date,transaction_weight\n2022-10-01,0.022\n2022-10-02,0.022\n"
    );

    let o = run(&[
        "series",
        "--network",
        "bitcoin",
        "--data",
        s(&zero),
        "--network",
        "ethereum-pos",
        "--data",
        s(&pos),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn allocate_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let data = btc_csv(dir.path());
    let p = portfolio(dir.path());
    let out1 = dir.path().join("r1.csv");
    let out2 = dir.path().join("r2.csv");
    for out in [&out1, &out2] {
        let o = run(&[
            "allocate",
            "--network",
            "bitcoin",
            "--data",
            s(&data),
            "--portfolio",
            s(&p),
            "--method",
            "hybrid",
            "--carbon",
            "--out",
            s(out),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = fs::read(&out1).unwrap();
    assert_eq!(a, fs::read(&out2).unwrap());
    assert_eq!(
        fs::read(dir.path().join("r1.summary.csv")).unwrap(),
        fs::read(dir.path().join("r2.summary.csv")).unwrap()
    );

    let mut rdr = csv::Reader::from_reader(a.as_slice());
    let headers = rdr.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| !r[col("carbon_g")].is_empty()));
    // Holding of 1 BTC on day one under the hybrid method.
    let first = &rows[0];
    assert_eq!(&first[col("activity")], "holding");
    assert_eq!(&first[col("energy_wh")], "14249.7");
    assert_eq!(&first[col("weight_source")], "fee_share");
    assert_eq!(&first[col("transaction_weight")], "0.0601");
    assert_eq!(&first[col("basis")], "holding");
}

#[test]
fn allocate_formats_and_gaps() {
    let dir = TempDir::new().unwrap();
    let gappy = write(
        dir.path(),
        "gap.csv",
        &format!("{HEADER}2021-01-01,1000,9,1,100,,10,,,\n2021-01-03,1000,9,1,100,,10,,,\n"),
    );
    let p = write(
        dir.path(),
        "p.json",
        r#"{"schema_version":"1","network_id":"bitcoin","holdings":[{"entity_id":"a","date":"2021-01-02","amount":"10"}]}"#,
    );
    let base = [
        "allocate",
        "--network",
        "bitcoin",
        "--data",
        s(&gappy),
        "--portfolio",
        s(&p),
        "--from",
        "2021-01-01",
        "--to",
        "2021-01-03",
    ];
    let o = run(&base);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("2021-01-02"));

    let mut filled = base.to_vec();
    filled.extend(["--fill", "forward", "--format", "json"]);
    let o = run(&filled);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let r = &v["results"][0];
    assert_eq!(r["audit"]["origin"], "filled-forward:2021-01-01");
    assert_eq!(r["energy_wh_exact"], "90");
    assert_eq!(v["summary"][0]["days"], 3);

    let mut text = filled.clone();
    text.pop();
    text.push("text");
    let o = run(&text);
    assert!(stdout(&o).contains("90 Wh"), "{}", stdout(&o));
}

#[test]
fn allocate_with_apps_and_layer2() {
    let dir = TempDir::new().unwrap();
    let data = write(
        dir.path(),
        "eth.csv",
        &format!("{HEADER}2021-01-01,1000,9,1,100,,100,,,\n"),
    );
    let apps = write(
        dir.path(),
        "apps.json",
        r#"{"schema_version":"1","network_id":"ethereum",
            "apps":[{"app_id":"dex","date":"2021-01-01","app_fee_share":"0.5","token_supply":"1000","app_tx_count":10}],
            "token_holdings":[{"entity_id":"fund","app_id":"dex","date":"2021-01-01","amount":"100"}]}"#,
    );
    let p = write(
        dir.path(),
        "p.json",
        r#"{"schema_version":"1","network_id":"ethereum",
            "transactions":[{"entity_id":"fund","date":"2021-01-01","tx_count":1,"app_id":"dex"}]}"#,
    );
    let o = run(&[
        "allocate",
        "--network",
        "ethereum",
        "--data",
        s(&data),
        "--portfolio",
        s(&p),
        "--apps",
        s(&apps),
        "--app-method",
        "token",
        "--format",
        "json",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let results = v["results"].as_array().unwrap();
    // Transaction pool 100 Wh, app pool 50 Wh, 10% of the token supply.
    assert_eq!(results.len(), 1);
    assert_eq!(results[0]["app_id"], "dex");
    assert_eq!(results[0]["energy_wh_exact"], "5");

    let l2 = write(
        dir.path(),
        "l2.json",
        r#"{"schema_version":"1","l2s":[{"l2_id":"rollup","date":"2021-01-01","l1_fee_share":"0.2","infra_energy_wh":"30",
            "consensus":"pos","decimals":"18","internal":{"coin_supply":"50","tx_count":10,"pos_tx_share":"0.4"}}]}"#,
    );
    let lp = write(
        dir.path(),
        "lp.json",
        r#"{"schema_version":"1","network_id":"rollup","holdings":[{"entity_id":"h","date":"2021-01-01","amount":"50"}]}"#,
    );
    let o = run(&[
        "allocate",
        "--network",
        "ethereum",
        "--data",
        s(&data),
        "--portfolio",
        s(&lp),
        "--l2",
        s(&l2),
        "--format",
        "json",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let r = &v["results"][0];
    assert_eq!(r["network_id"], "rollup");
    assert_eq!(r["energy_wh_exact"], "30");
    assert_eq!(r["audit"]["origin"], "synthetic:ethereum>rollup");
}

/// Serves canned day responses over plain HTTP, counting requests.
fn serve(body: String, hits: Arc<AtomicUsize>) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut line = String::new();
            loop {
                line.clear();
                if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                    break;
                }
            }
            hits.fetch_add(1, Ordering::SeqCst);
            let response = format!(
                "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
                body.len(),
                body
            );
            let _ = stream.write_all(response.as_bytes());
        }
    });
    format!("http://{addr}")
}

#[test]
fn remote_source_with_cache() {
    let dir = TempDir::new().unwrap();
    let body = r#"{"network_id":"bitcoin","days":[
        {"date":"2021-01-01","energy_wh":"1000","block_reward":"9","tx_fees_total":"1","coin_supply":"100","tx_count":10},
        {"date":"2021-01-02","energy_wh":"1000","block_reward":"8","tx_fees_total":"2","coin_supply":"100","tx_count":10}]}"#;
    let hits = Arc::new(AtomicUsize::new(0));
    let url = serve(body.to_string(), hits.clone());
    let cache = dir.path().join("cache");
    let args = [
        "series",
        "--network",
        "bitcoin",
        "--remote",
        &url,
        "--cache-dir",
        s(&cache),
        "--from",
        "2021-01-01",
        "--to",
        "2021-01-02",
    ];
    let o = run(&args);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o), "date,transaction_weight\n2021-01-01,0.1\n2021-01-02,0.2\n");
    assert_eq!(hits.load(Ordering::SeqCst), 1);
    assert!(cache.join("bitcoin.csv").exists());

    let o = run(&args);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(hits.load(Ordering::SeqCst), 1, "second run is served from cache");

    let o = run(&[
        "series",
        "--network",
        "bitcoin",
        "--remote",
        "http://127.0.0.1:9",
        "--cache-dir",
        s(&dir.path().join("c2")),
        "--from",
        "2021-01-01",
        "--to",
        "2021-01-01",
    ]);
    assert_eq!(o.status.code(), Some(2));
}
