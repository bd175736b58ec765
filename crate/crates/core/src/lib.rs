//! Allocation of blockchain electricity consumption and carbon emissions to
//! holdings and transactions.
//!
//! Three methods are supported: holding-based, transaction-based and hybrid.
//! The hybrid method splits each day's footprint by the share of fees in
//! miner revenue (Proof-of-Work) or by the marginal transaction share of
//! consumption (Proof-of-Stake). The same arithmetic extends to layer-1
//! applications and tokens ([`apps`]) and to layer-2 networks ([`layer2`]).
//!
//! All arithmetic is exact; see [`decimal`].

pub mod apps;
pub mod decimal;
pub mod engine;
pub mod error;
pub mod ingest;
pub mod layer2;
pub mod model;
pub mod report;

pub use engine::{
    allocate_holding, allocate_portfolio, allocate_transaction, fee_share, holding_pool, method_weights,
    transaction_pool, MethodWeights, PeriodSummary, PortfolioAllocation, SummaryRow,
};
pub use error::AllocationError;
