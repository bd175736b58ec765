use chrono::NaiveDate;

use crate::model::{Activity, Method};

/// Failures of the allocation arithmetic or of joining records to days.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AllocationError {
    #[error("{date}: malformed day: {reason}")]
    MalformedDay { date: NaiveDate, reason: String },

    #[error("{date}: missing column `{column}`")]
    MissingColumn { date: NaiveDate, column: &'static str },

    #[error("record dated {found} applied to day {expected}")]
    DateMismatch { expected: NaiveDate, found: NaiveDate },

    #[error("method {method} does not allocate to {activity}")]
    MethodMismatch { method: Method, activity: Activity },

    #[error("{date}: share of `{entity}` exceeds the pool ({quantity} > {total})")]
    ShareOverflow {
        date: NaiveDate,
        entity: String,
        quantity: String,
        total: String,
    },

    #[error("{date}: no transactions recorded{}, but `{entity}` has transaction records", scope.as_ref().map(|s| format!(" for {s}")).unwrap_or_default())]
    NoTransactions {
        date: NaiveDate,
        entity: String,
        scope: Option<String>,
    },

    #[error("{date}: no fee, gas or count basis for `{entity}`")]
    BasisUnavailable { date: NaiveDate, entity: String },

    #[error("no network data for {}", dates.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(", "))]
    MissingDay { dates: Vec<NaiveDate> },

    #[error("days must be strictly increasing; {date} is out of order or repeated")]
    UnorderedDays { date: NaiveDate },

    #[error("{date}: application `{app_id}` has no token supply")]
    NotAToken { app_id: String, date: NaiveDate },

    #[error("{date}: unknown application `{app_id}`")]
    UnknownApp { app_id: String, date: NaiveDate },

    #[error("unknown layer-2 network `{0}`")]
    UnknownLayer2(String),

    #[error("layer-2 host chain for `{0}` is cyclic")]
    CyclicLayer2(String),
}
