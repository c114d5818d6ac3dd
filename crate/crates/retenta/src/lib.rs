//! Batch customer-retention analytics.
//!
//! Three stages over desk-scale CSV inputs:
//!
//! 1. **Churn detection** ([`churn`]) — logistic risk scoring and the
//!    risky/loyal split of the population.
//! 2. **Customer profiling** ([`profiler`]) — k-means over standardized
//!    features plus the risk score, with a cluster-validation report and a
//!    single-linkage baseline for runtime comparison.
//! 3. **Personalized retention** ([`retention`]) — collaborative filtering
//!    whose neighborhoods are restricted to loyal customers.
//!
//! [`dataset`] handles ingestion and synthetic-data generation; [`pipeline`]
//! and [`cli`] wire the stages together. All randomness is seeded and every
//! persisted output is byte-deterministic for a given config.

pub mod churn;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod pipeline;
pub mod profiler;
pub mod retention;

pub use error::{Error, Result};

/// Quantize to six decimal places, the canonical precision of every
/// persisted score and report value. Scores are quantized once at scoring
/// time so downstream stages see exactly what the files contain.
pub fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}
