//! Communication modeling toolkit for distributed transformer training.
//!
//! Predicts per-iteration collective communication (kinds, call counts,
//! message sizes, volumes) under data parallelism, ZeRO-1/2/3, pipeline and
//! tensor parallelism, and their 3D composition; synthesizes the matching
//! event schedules; validates the closed forms against step-wise collective
//! simulations; and parses real communication trace logs for
//! theory-vs-observed comparison.

pub mod analytic;
pub mod config;
pub mod error;
pub mod oracle;
pub mod report;
pub mod schedule;
pub mod summary;
pub mod traceio;
pub mod types;
pub mod volume;

pub use error::{Error, Result};
pub use summary::{CommSummary, KindAggregate, SizeHistogram};
pub use types::{
    check_model_layout, CollectiveEvent, CollectiveKind, KindMap, ModelConfig, ParallelLayout,
    Phase, ZeroStage,
};
pub use volume::Volume;
