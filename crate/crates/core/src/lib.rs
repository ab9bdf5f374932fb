//! Delay-aware downlink control for multi-cell networks.

pub mod baselines;
pub mod channel;
pub mod config;
pub mod control;
pub mod error;
pub mod geometry;
pub mod io;
pub mod learner;
pub mod model;
pub mod oracle;
pub mod policy;
pub mod proposed;
pub mod queueing;
pub mod report;
pub mod rng;
pub mod scenario;
pub mod sim;
pub mod verify;

pub use error::{Error, Result};
pub use model::*;
