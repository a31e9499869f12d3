//! Peer-to-peer energy sharing among microgrid households.
//!
//! The crate covers the whole pipeline of a resilience study:
//!
//! - [`fleet`]: household load/generation series, ingestion, synthesis and
//!   reduction to daily peak/off-peak ledgers.
//! - [`topology`]: feeder graphs with switches, microgrid partitioning and
//!   coalition scenarios.
//! - [`billing`]: net-metering costs under time-of-use prices, the
//!   closed-form coalition cost allocation and cooperative-game checks.
//! - [`visibility`]: natural visibility graphs of time series.
//! - [`percolation`]: Monte-Carlo bond percolation, susceptibility and the
//!   percolation threshold used as resilience metric.
//! - [`forecast`]: ARIMA order selection, fitting, forecasting and scoring.
//! - [`study`]: end-to-end orchestration and report emission.

pub mod billing;
mod dsu;
pub mod error;
pub mod fleet;
pub mod forecast;
pub mod percolation;
pub mod study;
pub mod svg;
pub mod topology;
pub mod visibility;

pub use error::{Error, ErrorClass, Result};
