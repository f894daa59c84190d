//! Experiment harness: configuration, the per-tick pipeline, frame-rate
//! sweeps with trials, report emission and snapshot-log queries.

mod config;
mod query;
mod report;
mod run;
mod sweep;

use std::fmt;

use thiserror::Error;

pub use config::{ExecutionMode, RunConfig, Session, Timing, DEFAULT_FPS_LIST};
pub use query::{explain_snapshot, load_memory, query, QueryTarget};
pub use report::{line_chart, Series, SeriesStyle};
pub use run::{frame_triples, run_pipeline, run_to_dir, Fidelity, Inputs, RunOutcome, TickRecord};
pub use sweep::{
    aggregate_rows, pairwise_tests, read_runs_csv, sweep, write_sweep_outputs, Aggregate, PairwiseTest, RunRow,
    SweepFailure, SweepReport, SUMMARY_HEADER,
};

/// Pipeline stage named in diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Ingest,
    Subsample,
    Sync,
    Bus,
    Graph,
    Validate,
    Metrics,
    Output,
    Query,
    Explain,
    Stats,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Config => "config",
            Stage::Ingest => "ingest",
            Stage::Subsample => "subsample",
            Stage::Sync => "sync",
            Stage::Bus => "bus",
            Stage::Graph => "graph",
            Stage::Validate => "validate",
            Stage::Metrics => "metrics",
            Stage::Output => "output",
            Stage::Query => "query",
            Stage::Explain => "explain",
            Stage::Stats => "stats",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Failure,
    NotFound,
}

#[derive(Debug, Clone, Error)]
#[error("stage={stage}: {message}")]
pub struct HarnessError {
    pub stage: Stage,
    pub kind: ErrorKind,
    pub message: String,
}

impl HarnessError {
    pub fn new(stage: Stage, message: impl fmt::Display) -> Self {
        HarnessError {
            stage,
            kind: ErrorKind::Failure,
            message: message.to_string(),
        }
    }

    pub fn not_found(stage: Stage, message: impl fmt::Display) -> Self {
        HarnessError {
            stage,
            kind: ErrorKind::NotFound,
            message: message.to_string(),
        }
    }

    pub fn is_not_found(&self) -> bool {
        self.kind == ErrorKind::NotFound
    }
}

/// `map_err` adapter tagging an error with its stage.
pub(crate) fn at<E: fmt::Display>(stage: Stage) -> impl Fn(E) -> HarnessError {
    move |e| HarnessError::new(stage, e)
}

#[cfg(test)]
mod tests;
