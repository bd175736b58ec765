use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{collect_days, Dataset, IngestError, NetworkProfile, RawDay, RowError};
use crate::decimal::to_decimal_string;
use crate::model::NetworkDay;

/// Column order of network CSV files.
pub const NETWORK_COLUMNS: [&str; 10] = [
    "date",
    "energy_wh",
    "block_reward",
    "tx_fees_total",
    "coin_supply",
    "lost_coin_fraction",
    "tx_count",
    "gas_total",
    "pos_tx_share",
    "emission_factor_g_per_kwh",
];

pub fn load_network_csv(path: &Path, profile: &NetworkProfile) -> Result<Dataset, IngestError> {
    let file = File::open(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_network_csv(file, profile).map_err(|e| match e {
        IngestError::Io { source, .. } => IngestError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    })
}

/// Reads network telemetry. Rows may come in any order; the result is
/// sorted by date. All invalid rows are reported together.
pub fn read_network_csv<R: Read>(reader: R, profile: &NetworkProfile) -> Result<Dataset, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let io_err = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(source) => IngestError::Io {
            path: Default::default(),
            source,
        },
        other => IngestError::Io {
            path: Default::default(),
            source: std::io::Error::new(std::io::ErrorKind::InvalidData, format!("{other:?}")),
        },
    };
    let header = rdr.headers().map_err(io_err)?.clone();
    let found: Vec<&str> = header.iter().collect();
    if found != NETWORK_COLUMNS {
        return Err(IngestError::SchemaMismatch {
            expected: NETWORK_COLUMNS.join(","),
            found: found.join(","),
        });
    }
    let records = rdr.records().collect::<Result<Vec<_>, _>>().map_err(io_err)?;
    let rows = records.iter().enumerate().map(|(i, rec)| {
        if rec.len() != NETWORK_COLUMNS.len() {
            return Err(RowError::invalid(
                i + 1,
                "*",
                format!("expected {} fields, found {}", NETWORK_COLUMNS.len(), rec.len()),
            ));
        }
        let raw: RawDay<'_> = NETWORK_COLUMNS
            .iter()
            .zip(rec.iter())
            .filter(|(_, v)| !v.is_empty())
            .map(|(c, v)| (*c, v))
            .collect();
        Ok(raw)
    });
    let days = collect_days(rows, profile).map_err(IngestError::Invalid)?;
    Ok(Dataset::new(profile, days))
}

fn decimal_cell(value: &num::BigRational, column: &str, day: &NetworkDay) -> std::io::Result<String> {
    to_decimal_string(value).ok_or_else(|| {
        std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            format!("{column} on {} has no finite decimal expansion", day.date),
        )
    })
}

/// Writes days in canonical form: fixed header, ascending dates, minimal
/// decimals, empty cells for absent optional values, `\n` line endings.
pub fn write_network_csv<W: Write>(writer: W, days: &[NetworkDay]) -> std::io::Result<()> {
    let mut sorted: Vec<&NetworkDay> = days.iter().collect();
    sorted.sort_by_key(|d| d.date);
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    w.write_record(NETWORK_COLUMNS)?;
    for day in sorted {
        let opt = |v: Option<&num::BigRational>, c: &str| -> std::io::Result<String> {
            v.map(|v| decimal_cell(v, c, day))
                .transpose()
                .map(Option::unwrap_or_default)
        };
        let row = [
            day.date.format("%Y-%m-%d").to_string(),
            decimal_cell(day.energy.wh(), "energy_wh", day)?,
            opt(day.block_reward.as_ref().map(|c| c.value()), "block_reward")?,
            opt(day.tx_fees_total.as_ref().map(|c| c.value()), "tx_fees_total")?,
            decimal_cell(day.coin_supply.value(), "coin_supply", day)?,
            opt(day.lost_coin_fraction.as_ref().map(|f| f.value()), "lost_coin_fraction")?,
            day.tx_count.to_string(),
            opt(day.gas_total.as_ref().map(|g| g.value()), "gas_total")?,
            opt(day.pos_tx_share.as_ref().map(|f| f.value()), "pos_tx_share")?,
            opt(
                day.emission_factor.as_ref().map(|e| e.g_per_kwh()),
                "emission_factor_g_per_kwh",
            )?,
        ];
        w.write_record(&row)?;
    }
    w.flush()
}
