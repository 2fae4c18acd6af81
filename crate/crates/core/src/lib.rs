//! Inline replication analytics: every measure is computed on several
//! folds of its data, aggregated, and shipped together with the per-fold
//! values so a chart can show how stable the aggregate is.
//!
//! The pipeline is [`dataset`] (ingest, filter, group) then [`partition`]
//! then [`metrics`] then [`aggregate`] then [`chart`]. [`analysis`] wires it
//! together; [`synth`] supplies seeded test data.

pub mod aggregate;
pub mod analysis;
pub mod chart;
pub mod dataset;
pub mod error;
pub mod metrics;
pub mod partition;
pub mod rng;
pub mod synth;

pub use analysis::{
    run_analysis, AnalysisError, AnalysisRequest, AnalysisResponse, IncrementalSession, IncrementalStart,
};
pub use error::{IngestError, ValidationError};
