//! Per-user online learning of post-decision values and Q-factors, and
//! the direct fixed-point solvers they are checked against.
//!
//! Value update for user `(m, k)`, applied only when the realized pattern is
//! the user's reference pattern:
//!
//! ```text
//! Q = min(q̃ + a, N_Q)
//! ṽ(q̃) ← ṽ(q̃) + γ [β f(Q) + ṽ((Q - u)^+) - ṽ(0) - ṽ(q̃)]
//! ```
//!
//! Q-factor update at the realized `(q, p)`:
//!
//! ```text
//! ℚ(q, p) ← ℚ(q, p) + γ [β f(q) - ℚ(0, p^I) - ℚ(q, p)
//!                        + min_p' ℚ(min((q - u)^+ + a, N_Q), p')]
//! ```

mod fixed_point;
mod kernel;
mod noise;
mod tables;

pub use fixed_point::{
    qfactor_residual, solve_qfactor_fixed_point, solve_value_fixed_point, value_residual,
    QSolveOptions,
};
pub use kernel::UserKernel;
pub use noise::{record_noise, NoiseDiagnostics};
pub use tables::{max_abs, max_abs_diff, PerUserQTable, PerUserValueTable};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which counter drives `γ = a / (b + t)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepMode {
    /// `t` is the slot index.
    Global,
    /// `t` is the number of earlier updates of the same table cell.
    PerVisit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepSizeSchedule {
    pub a: f64,
    pub b: f64,
    pub mode: StepMode,
}

impl Default for StepSizeSchedule {
    fn default() -> Self {
        StepSizeSchedule {
            a: 1.0,
            b: 2.0,
            mode: StepMode::Global,
        }
    }
}

impl StepSizeSchedule {
    /// `a = 0` is accepted: it freezes the tables, which is useful as a
    /// negative control.
    pub fn validate(&self) -> Result<()> {
        if !(self.a >= 0.0 && self.a.is_finite()) || !(self.b > 0.0 && self.b.is_finite()) {
            return Err(Error::config("step size needs a ≥ 0 and b > 0"));
        }
        Ok(())
    }

    #[inline]
    pub fn gamma(&self, t: u64) -> f64 {
        self.a / (self.b + t as f64)
    }

    /// Step for an update at slot `slot` of a cell already updated
    /// `visits` times.
    #[inline]
    pub fn gamma_for(&self, slot: u64, visits: u64) -> f64 {
        match self.mode {
            StepMode::Global => self.gamma(slot),
            StepMode::PerVisit => self.gamma(visits),
        }
    }
}

/// One slot's local observation for the value update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ValueObservation {
    pub post_decision: u64,
    pub arrival: u64,
    /// Service the user would get if scheduled under its reference pattern.
    pub service: u64,
    /// Catalog index of the pattern realized when `post_decision` was formed.
    pub pattern: usize,
}

/// One slot's local observation for the Q-factor update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QObservation {
    pub queue: u64,
    pub pattern: usize,
    pub arrival: u64,
    /// Service the user would get if scheduled under `pattern`.
    pub service: u64,
}

fn check_cost(cost: &[f64], n: u64) -> Result<()> {
    if cost.len() as u64 != n + 1 {
        return Err(Error::TableIndex {
            index: cost.len(),
            size: n as usize + 1,
        });
    }
    Ok(())
}

/// Sampled target `β f(Q) + ṽ((Q - u)^+) - ṽ(0)`.
pub fn value_target(table: &PerUserValueTable, obs: &ValueObservation, cost: &[f64]) -> Result<f64> {
    let nq = table.buffer_size();
    check_cost(cost, nq)?;
    table.try_get(obs.post_decision)?;
    let q = (obs.post_decision.saturating_add(obs.arrival)).min(nq);
    Ok(cost[q as usize] + table.get(q.saturating_sub(obs.service)) - table.get(0))
}

/// Applies the value update with step `gamma`. Returns whether the table
/// changed; observations under a non-reference pattern are ignored.
pub fn update_value(
    table: &mut PerUserValueTable,
    obs: &ValueObservation,
    cost: &[f64],
    gamma: f64,
) -> Result<bool> {
    let target = value_target(table, obs, cost)?;
    if obs.pattern != table.reference_pattern() || gamma == 0.0 {
        return Ok(false);
    }
    let x = obs.post_decision as usize;
    let v = &mut table.values_mut()[x];
    *v += gamma * (target - *v);
    Ok(true)
}

/// Sampled target `β f(q) - ℚ(0, p^I) + min_p' ℚ(min((q - u)^+ + a, N_Q), p')`.
pub fn q_target(table: &PerUserQTable, obs: &QObservation, cost: &[f64]) -> Result<f64> {
    let nq = table.buffer_size();
    check_cost(cost, nq)?;
    table.check(obs.queue, obs.pattern)?;
    let next = (obs.queue.saturating_sub(obs.service).saturating_add(obs.arrival)).min(nq);
    Ok(cost[obs.queue as usize] - table.reference_value() + table.row_min(next).0)
}

/// Applies the Q-factor update to the realized cell with step `gamma`.
pub fn update_qfactor(table: &mut PerUserQTable, obs: &QObservation, cost: &[f64], gamma: f64) -> Result<()> {
    let target = q_target(table, obs, cost)?;
    if gamma == 0.0 {
        return Ok(());
    }
    let idx = table.check(obs.queue, obs.pattern)?;
    let old = table.get(obs.queue, obs.pattern);
    table.set_at(idx, old + gamma * (target - old));
    Ok(())
}

/// The two tables of one user plus their step-size schedules.
#[derive(Debug, Clone, PartialEq)]
pub struct UserLearner {
    pub value: PerUserValueTable,
    pub qfactor: PerUserQTable,
    cost: Vec<f64>,
    value_step: StepSizeSchedule,
    q_step: StepSizeSchedule,
}

impl UserLearner {
    pub fn new(
        value: PerUserValueTable,
        qfactor: PerUserQTable,
        cost: Vec<f64>,
        value_step: StepSizeSchedule,
        q_step: StepSizeSchedule,
    ) -> Result<Self> {
        value_step.validate()?;
        q_step.validate()?;
        check_cost(&cost, value.buffer_size())?;
        check_cost(&cost, qfactor.buffer_size())?;
        Ok(UserLearner {
            value,
            qfactor,
            cost,
            value_step,
            q_step,
        })
    }

    pub fn cost(&self) -> &[f64] {
        &self.cost
    }

    /// Value update at slot `slot`; returns whether it fired.
    pub fn learn_value(&mut self, obs: &ValueObservation, slot: u64) -> Result<bool> {
        if obs.pattern != self.value.reference_pattern() {
            return Ok(false);
        }
        self.value.try_get(obs.post_decision)?;
        let visits = self.value.visit(obs.post_decision) - 1;
        let gamma = self.value_step.gamma_for(slot, visits);
        update_value(&mut self.value, obs, &self.cost, gamma)?;
        Ok(true)
    }

    pub fn learn_q(&mut self, obs: &QObservation, slot: u64) -> Result<()> {
        let idx = self.qfactor.check(obs.queue, obs.pattern)?;
        let visits = self.qfactor.visit_at(idx) - 1;
        let gamma = self.q_step.gamma_for(slot, visits);
        update_qfactor(&mut self.qfactor, obs, &self.cost, gamma)
    }
}
