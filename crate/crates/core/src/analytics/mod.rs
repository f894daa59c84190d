//! Evaluation mathematics: graph metrics, SRQI, and the rank test and
//! density estimate used to compare frame-rate conditions.

mod metrics;
mod stats;

use thiserror::Error;

pub use metrics::{
    entropy_bits, relation_entropy, srqi, stability, structural_complexity, Complexity, RunMetrics, SnapshotMetrics,
    SrqiWeights,
};
pub use stats::{kde, kruskal_wallis, linspace, mean_std, quantile, silverman_bandwidth, KruskalWallis};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticsError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("input out of domain: {0}")]
    Domain(String),
    #[error("arity error: {0}")]
    Arity(String),
    #[error("degenerate bandwidth: samples have zero spread")]
    DegenerateBandwidth,
}

#[cfg(test)]
mod tests;
