//! Parallel grids of independent runs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::SlotPolicy;
use crate::rng::derive_seed;
use crate::scenario::Scenario;

use super::engine::{run, RunSpec};
use super::metrics::{Estimate, MetricsRecord};

/// One grid point: the swept value and the scenario it produces.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub value: f64,
    pub scenario: Scenario,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub point: usize,
    pub value: f64,
    /// Across replicates when there are several, otherwise the single run's
    /// batch-means interval.
    pub delay: Estimate,
    pub cost: Estimate,
    pub drop_prob: f64,
    pub runs: Vec<MetricsRecord>,
}

/// Runs every point `replicates` times. Run `(i, r)` uses
/// `derive_seed(master_seed, i, r)` for both the simulator and the policy.
/// `make_policy` receives the point index, the scenario and the seed.
pub fn sweep<F>(
    points: &[SweepPoint],
    replicates: usize,
    template: &RunSpec,
    master_seed: u64,
    make_policy: F,
) -> Result<Vec<SweepRow>>
where
    F: Fn(usize, &Scenario, u64) -> Result<Box<dyn SlotPolicy>> + Sync,
{
    if points.is_empty() {
        return Err(Error::config("sweep grid is empty"));
    }
    if replicates == 0 {
        return Err(Error::config("replicates must be at least 1"));
    }
    let jobs: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|i| (0..replicates).map(move |r| (i, r)))
        .collect();
    let records = jobs
        .par_iter()
        .map(|&(i, r)| {
            let seed = derive_seed(master_seed, i as u64, r as u64);
            let spec = RunSpec {
                seed,
                ..template.clone()
            };
            let mut policy = make_policy(i, &points[i].scenario, seed)?;
            run(&points[i].scenario, policy.as_mut(), &spec).map(|o| o.metrics)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::with_capacity(points.len());
    for (i, chunk) in records.chunks(replicates).enumerate() {
        let runs = chunk.to_vec();
        let (delay, cost) = if replicates == 1 {
            (runs[0].delay, runs[0].cost)
        } else {
            (
                Estimate::from_samples(&runs.iter().map(|m| m.delay.mean).collect::<Vec<_>>()),
                Estimate::from_samples(&runs.iter().map(|m| m.cost.mean).collect::<Vec<_>>()),
            )
        };
        let drop_prob = runs.iter().map(|m| m.drop_prob).sum::<f64>() / runs.len() as f64;
        rows.push(SweepRow {
            point: i,
            value: points[i].value,
            delay,
            cost,
            drop_prob,
            runs,
        });
    }
    Ok(rows)
}
