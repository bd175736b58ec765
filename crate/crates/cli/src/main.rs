//! `carbon-ledger`: validate network data, allocate portfolios, and emit
//! methodology comparisons and weight series.
//!
//! Exit codes: 0 success, 1 validation failure, 2 I/O or usage error.

mod commands;
mod load;

use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};

use carbon_ledger::apps::AppApproach;
use carbon_ledger::model::Method;
use carbon_ledger::report::Format;

#[derive(Parser)]
#[command(
    name = "carbon-ledger",
    version,
    about = "Allocate blockchain electricity use and carbon emissions to holdings and transactions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate network data and optional portfolio, application and layer-2 files.
    Validate(ValidateArgs),
    /// Allocate energy (and carbon) to the records of one or more portfolios.
    Allocate(AllocateArgs),
    /// One-coin and one-average-transaction daily means under every method.
    Compare(CompareArgs),
    /// Per-day transaction weight (fee share or PoS transaction share).
    Series(SeriesArgs),
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Fill {
    /// Copy the last earlier day into gaps.
    Forward,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum MethodArg {
    Holding,
    Transaction,
    Hybrid,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Holding => Method::HoldingBased,
            MethodArg::Transaction => Method::TransactionBased,
            MethodArg::Hybrid => Method::Hybrid,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
pub enum AppMethodArg {
    Transaction,
    Token,
    Hybrid,
}

impl From<AppMethodArg> for AppApproach {
    fn from(m: AppMethodArg) -> Self {
        match m {
            AppMethodArg::Transaction => AppApproach::Transaction,
            AppMethodArg::Token => AppApproach::TokenHolding,
            AppMethodArg::Hybrid => AppApproach::Hybrid,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Csv,
    Json,
    Text,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
            FormatArg::Text => Format::Text,
        }
    }
}

#[derive(Args)]
pub struct DataArgs {
    /// Network: bitcoin, ethereum, ethereum-pos, or <id>:<pow|pos>[:<decimals>].
    /// Repeatable; paired with --data by position.
    #[arg(long = "network", required = true)]
    pub networks: Vec<String>,

    /// Network telemetry CSV. Repeatable.
    #[arg(long = "data")]
    pub data: Vec<PathBuf>,

    /// First day of the range (YYYY-MM-DD, inclusive).
    #[arg(long)]
    pub from: Option<NaiveDate>,

    /// Last day of the range (YYYY-MM-DD, inclusive).
    #[arg(long)]
    pub to: Option<NaiveDate>,

    /// Fill missing days inside the range. Off by default: gaps are errors.
    #[arg(long, value_enum)]
    pub fill: Option<Fill>,

    /// Fetch telemetry from this base URL instead of --data files.
    #[arg(long)]
    pub remote: Option<String>,

    /// Cache directory for --remote.
    #[arg(long, default_value = ".carbon-ledger-cache")]
    pub cache_dir: PathBuf,
}

#[derive(Args)]
pub struct OutputArgs {
    /// Write to this file instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,

    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,

    /// Include carbon, converted with each day's emission factor.
    #[arg(long)]
    pub carbon: bool,
}

#[derive(Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub data: DataArgs,

    /// Portfolio JSON. Repeatable.
    #[arg(long = "portfolio")]
    pub portfolios: Vec<PathBuf>,

    /// Applications and token balances JSON.
    #[arg(long)]
    pub apps: Option<PathBuf>,

    /// Layer-2 descriptors JSON.
    #[arg(long)]
    pub l2: Option<PathBuf>,

    /// Write the report to this file instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// `json` for a machine-readable error report.
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
}

#[derive(Args)]
pub struct AllocateArgs {
    #[command(flatten)]
    pub data: DataArgs,

    /// Portfolio JSON. Repeatable. A portfolio whose network_id names a
    /// layer-2 from --l2 is allocated within that layer-2.
    #[arg(long = "portfolio", required = true)]
    pub portfolios: Vec<PathBuf>,

    #[arg(long, value_enum, default_value = "hybrid")]
    pub method: MethodArg,

    /// Applications and token balances JSON. App-tagged transactions are
    /// then allocated from their application's pool.
    #[arg(long)]
    pub apps: Option<PathBuf>,

    /// How application pools are split.
    #[arg(long, value_enum, default_value = "hybrid")]
    pub app_method: AppMethodArg,

    /// Layer-2 descriptors JSON.
    #[arg(long)]
    pub l2: Option<PathBuf>,

    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub data: DataArgs,

    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args)]
pub struct SeriesArgs {
    #[command(flatten)]
    pub data: DataArgs,

    #[command(flatten)]
    pub output: OutputArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Validate(args) => commands::validate(&args),
        Command::Allocate(args) => commands::allocate(&args),
        Command::Compare(args) => commands::compare(&args),
        Command::Series(args) => commands::series(&args),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
