//! Shared fixtures for the benchmarks.

use std::path::PathBuf;

use celldelay::config::Experiment;

/// Loads one of the shipped configurations with extra overrides.
pub fn shipped(name: &str, overrides: &[&str]) -> Experiment {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    let overrides: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    Experiment::load(&path, &overrides).expect("shipped config loads")
}
