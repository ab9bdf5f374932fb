//! Slotted simulation, metrics and parameter sweeps.

pub mod engine;
pub mod metrics;
pub mod sweep;

pub use engine::{evaluate_policy, run, RunOutput, RunSpec, TraceRow};
pub use metrics::{cdf, Accounting, BatchMeans, Estimate, MetricsRecord, UserMetrics};
pub use sweep::{sweep, SweepPoint, SweepRow};
