//! Per-user transition kernels on the integer queue grid.
//!
//! For user `(m, k)` scheduled (`s = 1`) under pattern `p`, the service `U`
//! has a distribution determined by the `M` fading gains toward that user.
//! Together with the arrival pmf it fixes the one-user chains behind the
//! value and Q-factor fixed points.

use crate::channel::{budget_from_gains, deliverable_bits, shannon_rate, BandPlan, ChannelModel};
use crate::error::{Error, Result};
use crate::model::{CostModel, PatternSet, QueueUnit, SystemConfig};
use crate::queueing::ArrivalModel;

use super::tables::{PerUserQTable, PerUserValueTable};

/// Everything one user's fixed points depend on.
#[derive(Debug, Clone, PartialEq)]
pub struct UserKernel {
    buffer_size: u64,
    /// `Pr{A = a}` for `a = 0..=N_Q`, tail lumped on `N_Q`.
    arrival_pmf: Vec<f64>,
    /// `Pr{U = u | p}` per pattern, tail lumped on `N_Q`.
    service_pmf: Vec<Vec<f64>>,
    /// `β f(q)` for `q = 0..=N_Q`.
    cost: Vec<f64>,
    reference: usize,
}

impl UserKernel {
    /// Kernel of user `(m, k)` on the shared channel.
    ///
    /// Requires the bit queue mode and a discrete channel model.
    pub fn new(
        cfg: &SystemConfig,
        channel: &ChannelModel,
        arrivals: &ArrivalModel,
        cost: &CostModel,
        patterns: &PatternSet,
        m: usize,
        k: usize,
    ) -> Result<Self> {
        if cfg.queue_unit != QueueUnit::Bits {
            return Err(Error::Unsupported(
                "per-user kernels need the bit queue mode".into(),
            ));
        }
        let user = cfg.user(m, k);
        let nq = cfg.buffer_size;
        let local = channel.local_states(cfg, m, k)?;
        let band = BandPlan::shared(cfg.num_bs);
        let service_pmf = patterns
            .patterns()
            .iter()
            .map(|p| {
                let mut pmf = vec![0.0; nq as usize + 1];
                if !p.is_active(m) {
                    pmf[0] = 1.0;
                    return pmf;
                }
                for (gains, prob) in &local {
                    let (sig, ipn) = budget_from_gains(cfg, p, &band, m, k, |n| gains[n]);
                    let u = deliverable_bits(cfg, shannon_rate(cfg, sig, ipn, 1));
                    pmf[u.min(nq) as usize] += prob;
                }
                pmf
            })
            .collect();
        let reference = patterns.reference_for(m)?;
        Ok(UserKernel {
            buffer_size: nq,
            arrival_pmf: arrivals.dist(user).pmf(nq),
            service_pmf,
            cost: cost.user_table(user),
            reference,
        })
    }

    /// A kernel from explicit pmfs; used for hand-built chains.
    pub fn from_parts(
        arrival_pmf: Vec<f64>,
        service_pmf: Vec<Vec<f64>>,
        cost: Vec<f64>,
        reference_pattern: usize,
    ) -> Result<Self> {
        let n = cost.len();
        if n < 2 || arrival_pmf.len() != n || service_pmf.iter().any(|s| s.len() != n) {
            return Err(Error::config("kernel pmfs must cover 0..=N_Q"));
        }
        if reference_pattern >= service_pmf.len() {
            return Err(Error::config("reference pattern out of range"));
        }
        Ok(UserKernel {
            buffer_size: n as u64 - 1,
            arrival_pmf,
            service_pmf,
            cost,
            reference: reference_pattern,
        })
    }

    pub fn buffer_size(&self) -> u64 {
        self.buffer_size
    }

    pub fn num_patterns(&self) -> usize {
        self.service_pmf.len()
    }

    /// Reference pattern of both the value and the Q-factor chain.
    pub fn reference_pattern(&self) -> usize {
        self.reference
    }

    pub fn cost(&self) -> &[f64] {
        &self.cost
    }

    pub fn arrival_pmf(&self) -> &[f64] {
        &self.arrival_pmf
    }

    pub fn service_pmf(&self, p: usize) -> &[f64] {
        &self.service_pmf[p]
    }

    /// `Pr{q̃' | q̃}` of the post-decision chain with service under the value
    /// reference pattern, row-major.
    pub fn post_decision_matrix(&self) -> Vec<f64> {
        let n = self.buffer_size as usize + 1;
        let svc = &self.service_pmf[self.reference];
        let mut p = vec![0.0; n * n];
        for x in 0..n {
            for (a, &pa) in self.arrival_pmf.iter().enumerate() {
                if pa == 0.0 {
                    continue;
                }
                let q = (x + a).min(n - 1);
                for (u, &pu) in svc.iter().enumerate() {
                    if pu != 0.0 {
                        p[x * n + q.saturating_sub(u)] += pa * pu;
                    }
                }
            }
        }
        p
    }

    /// `g̃(q̃) = E_A[β f(min(q̃ + A, N_Q))]`.
    pub fn post_decision_cost(&self) -> Vec<f64> {
        let n = self.buffer_size as usize + 1;
        (0..n)
            .map(|x| {
                self.arrival_pmf
                    .iter()
                    .enumerate()
                    .map(|(a, pa)| pa * self.cost[(x + a).min(n - 1)])
                    .sum()
            })
            .collect()
    }

    /// Expected value-update target at `q̃` under table `v`:
    /// `E[β f(Q) + ṽ((Q - U)^+)] - ṽ(0)` with `Q = min(q̃ + A, N_Q)`.
    pub fn expected_value_target(&self, v: &PerUserValueTable, post: u64) -> f64 {
        let n = self.buffer_size as usize;
        let svc = &self.service_pmf[self.reference];
        let mut acc = 0.0;
        for (a, &pa) in self.arrival_pmf.iter().enumerate() {
            if pa == 0.0 {
                continue;
            }
            let q = (post as usize + a).min(n);
            let mut inner = self.cost[q];
            for (u, &pu) in svc.iter().enumerate() {
                if pu != 0.0 {
                    inner += pu * v.get(q.saturating_sub(u) as u64);
                }
            }
            acc += pa * inner;
        }
        acc - v.get(0)
    }

    /// Expected Q-factor update target at `(q, p)` under table `t`:
    /// `β f(q) - ℚ(0, p^I) + E[min_p' ℚ(min((q - U)^+ + A, N_Q), p')]`.
    pub fn expected_q_target(&self, t: &PerUserQTable, q: u64, p: usize) -> f64 {
        let row_min: Vec<f64> = (0..=self.buffer_size).map(|x| t.row_min(x).0).collect();
        self.q_target_with(&row_min, t.reference_value(), q, p)
    }

    pub(crate) fn q_target_with(&self, row_min: &[f64], reference: f64, q: u64, p: usize) -> f64 {
        let n = self.buffer_size as usize;
        let mut acc = 0.0;
        for (u, &pu) in self.service_pmf[p].iter().enumerate() {
            if pu == 0.0 {
                continue;
            }
            let post = (q as usize).saturating_sub(u);
            let mut inner = 0.0;
            for (a, &pa) in self.arrival_pmf.iter().enumerate() {
                if pa != 0.0 {
                    inner += pa * row_min[(post + a).min(n)];
                }
            }
            acc += pu * inner;
        }
        self.cost[q as usize] - reference + acc
    }
}
