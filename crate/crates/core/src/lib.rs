//! Federated-learning round simulator with robust aggregation rules,
//! Byzantine attacks (including the two-stage gradient-skew attack),
//! non-IID partitioning and skew analysis.

pub mod error;
pub mod stats;

pub use error::{Error, Result};
pub mod aggregators;
pub mod rng;
pub mod attacks;
pub mod analysis;
pub mod sim;
pub mod harness;
