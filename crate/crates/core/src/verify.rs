//! Checks the online learner against the exact per-user fixed points, and
//! the update noise against its conditional mean.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::{
    max_abs, max_abs_diff, solve_qfactor_fixed_point, solve_value_fixed_point, NoiseDiagnostics, PerUserQTable,
    PerUserValueTable, QSolveOptions, StepSizeSchedule, UserKernel,
};
use crate::proposed::{DistributedController, ProposedConfig};
use crate::scenario::Scenario;
use crate::sim::{run, RunSpec};

/// Acceptance threshold on `max |learned - fixed| / (1 + max |fixed|)`.
pub const DISTANCE_THRESHOLD: f64 = 0.05;
/// Allowed growth between consecutive checkpoints.
pub const CHECKPOINT_SLACK: f64 = 1.10;

/// Exact per-user limits for every user of a discrete bit-mode scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPoints {
    pub kernels: Vec<UserKernel>,
    pub values: Vec<PerUserValueTable>,
    pub qfactors: Vec<PerUserQTable>,
}

pub fn fixed_points(scenario: &Scenario) -> Result<FixedPoints> {
    if !scenario.is_discrete_bits() {
        return Err(Error::Unsupported(
            "fixed points need a discrete channel and the bit queue mode; \
             use a `discrete` channel and `queue_unit = { mode = \"bits\" }`"
                .into(),
        ));
    }
    let cfg = &scenario.cfg;
    let mut out = FixedPoints {
        kernels: Vec::new(),
        values: Vec::new(),
        qfactors: Vec::new(),
    };
    for m in 0..cfg.num_bs {
        for k in 0..cfg.users_per_bs {
            let kernel = UserKernel::new(
                cfg,
                &scenario.channel,
                &scenario.arrivals,
                &scenario.cost,
                &scenario.patterns,
                m,
                k,
            )?;
            out.values.push(solve_value_fixed_point(&kernel)?);
            out.qfactors.push(solve_qfactor_fixed_point(&kernel, QSolveOptions::default())?);
            out.kernels.push(kernel);
        }
    }
    Ok(out)
}

/// `max |a - b| / (1 + max |b|)`.
pub fn relative_distance(learned: &[f64], exact: &[f64]) -> f64 {
    max_abs_diff(learned, exact) / (1.0 + max_abs(exact))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceSeries {
    pub slots: Vec<u64>,
    /// Per checkpoint, per user.
    pub per_user: Vec<Vec<f64>>,
    /// Per checkpoint, worst user.
    pub worst: Vec<f64>,
}

impl DistanceSeries {
    pub fn final_distance(&self) -> f64 {
        self.worst.last().copied().unwrap_or(f64::INFINITY)
    }

    /// Each checkpoint within `slack` times the previous one.
    pub fn is_nonincreasing(&self, slack: f64) -> bool {
        self.worst.windows(2).all(|w| w[1] <= slack * w[0])
    }

    pub fn passes(&self) -> bool {
        !self.worst.is_empty() && self.final_distance() < DISTANCE_THRESHOLD && self.is_nonincreasing(CHECKPOINT_SLACK)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointReport {
    pub value: DistanceSeries,
    pub qfactor: DistanceSeries,
    pub value_pass: bool,
    pub qfactor_pass: bool,
}

/// Runs the learner for `spec.horizon` slots and measures its distance to
/// the fixed points at each checkpoint.
pub fn verify_fixed_points(scenario: &Scenario, config: &ProposedConfig, spec: &RunSpec) -> Result<FixedPointReport> {
    let exact = fixed_points(scenario)?;
    if spec.checkpoints.is_empty() {
        return Err(Error::config("verification needs at least one checkpoint"));
    }
    let mut policy = DistributedController::new(scenario, config.clone(), spec.seed)?;
    let out = run(scenario, &mut policy, spec)?;
    let series = |get: &dyn Fn(usize, usize) -> f64| {
        let per_user: Vec<Vec<f64>> = (0..out.snapshots.len())
            .map(|c| (0..exact.values.len()).map(|u| get(c, u)).collect())
            .collect();
        DistanceSeries {
            slots: out.snapshots.iter().map(|s| s.slot).collect(),
            worst: per_user.iter().map(|d| d.iter().copied().fold(0.0, f64::max)).collect(),
            per_user,
        }
    };
    let value = series(&|c, u| relative_distance(out.snapshots[c].values[u].values(), exact.values[u].values()));
    let qfactor = series(&|c, u| {
        relative_distance(out.snapshots[c].qfactors[u].values(), exact.qfactors[u].values())
    });
    Ok(FixedPointReport {
        value_pass: value.passes(),
        qfactor_pass: qfactor.passes(),
        value,
        qfactor,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseCheck {
    pub value: Vec<NoiseDiagnostics>,
    pub qfactor: Vec<NoiseDiagnostics>,
}

impl NoiseCheck {
    /// Every user's mean noise within `k` standard errors of zero.
    pub fn within_band(&self, k: f64) -> bool {
        self.value.iter().chain(&self.qfactor).all(|d| d.within_band(k))
    }
}

/// Runs the controller with frozen tables (at the fixed points) and records
/// `observed target - expected target` for both update rules.
pub fn noise_check(scenario: &Scenario, config: &ProposedConfig, spec: &RunSpec) -> Result<NoiseCheck> {
    let exact = fixed_points(scenario)?;
    let frozen = StepSizeSchedule {
        a: 0.0,
        ..config.value_step
    };
    let config = ProposedConfig {
        value_step: frozen,
        q_step: frozen,
        ..config.clone()
    };
    let mut policy = DistributedController::with_tables(scenario, config, spec.seed, exact.values, exact.qfactors)?;
    policy.enable_noise_probe()?;
    run(scenario, &mut policy, spec)?;
    let report = policy.noise_report().expect("probe enabled").clone();
    Ok(NoiseCheck {
        value: report.value,
        qfactor: report.qfactor,
    })
}
