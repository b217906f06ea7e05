//! Investor activity synchronization networks, volatility polarization
//! and attribute assortativity from per-trade records and daily quotes.

pub mod activity;
pub mod error;
pub mod exec;
pub mod ingest;
pub mod netmetrics;
pub mod polarization;
pub mod report;
pub mod stats;
pub mod synth;
pub mod syncnet;
pub mod volatility;

pub use error::{Error, Result};
pub use exec::Execution;
