//! Centralized solver for small instances.
//!
//! Solves the average-cost Bellman equation over global QSI
//!
//! ```text
//! V(Q) + θ = g(Q) + min_p E_H[ min_s E_A[ V(min((Q - U(p, s, H))^+ + A, N_Q)) ] ]
//! ```
//!
//! by relative value iteration. The pattern depends on `Q` only; the schedule
//! on `(Q, H)`. The inner minimization is solved separately for every CSI
//! state, jointly over the per-BS choices (the value function does not split
//! across cells, so a per-BS split would not be exact).

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{candidate_rates, compute_rates, BandPlan};
use crate::error::{Error, Result};
use crate::model::{validate_action, CsiState, IciPattern, QsiState, ScheduleAction};
use crate::policy::{SlotContext, SlotPolicy};
use crate::scenario::Scenario;

/// Mixed-radix indexing of global QSI vectors, user 0 least significant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QsiIndexer {
    radix: u64,
    strides: Vec<usize>,
    len: usize,
}

impl QsiIndexer {
    pub fn new(num_users: usize, buffer_size: u64) -> Result<Self> {
        let radix = buffer_size + 1;
        let mut strides = Vec::with_capacity(num_users);
        let mut len = 1usize;
        for _ in 0..num_users {
            strides.push(len);
            len = len
                .checked_mul(radix as usize)
                .ok_or_else(|| Error::Unsupported("QSI space too large to index".into()))?;
        }
        Ok(QsiIndexer { radix, strides, len })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn index(&self, q: &[u64]) -> usize {
        q.iter().zip(&self.strides).map(|(&x, &s)| x as usize * s).sum()
    }

    pub fn decode(&self, mut idx: usize) -> Vec<u64> {
        let r = self.radix as usize;
        self.strides
            .iter()
            .map(|_| {
                let x = idx % r;
                idx /= r;
                x as u64
            })
            .collect()
    }

    #[inline]
    pub fn coord(&self, idx: usize, user: usize) -> u64 {
        ((idx / self.strides[user]) % self.radix as usize) as u64
    }

    #[inline]
    pub fn stride(&self, user: usize) -> usize {
        self.strides[user]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleOptions {
    pub tol: f64,
    pub max_iters: usize,
    /// Largest accepted `#Q × #H`.
    pub max_pairs: usize,
    /// Weight on the new iterate (1 = plain relative value iteration).
    pub relaxation: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions {
            tol: 1e-9,
            max_iters: 100_000,
            max_pairs: 2_000_000,
            relaxation: 1.0,
        }
    }
}

/// Distinct clipped candidate-service vectors under one pattern.
#[derive(Debug, Clone)]
struct PatternProfiles {
    /// Profile index of every global CSI state.
    of_csi: Vec<u32>,
    /// Per profile: service of each user if scheduled, clipped at `N_Q`.
    service: Vec<Vec<u64>>,
    prob: Vec<f64>,
}

/// Precomputed transition structure of a scenario.
#[derive(Debug, Clone)]
pub struct OracleModel {
    scenario: Scenario,
    indexer: QsiIndexer,
    csi_states: Vec<(CsiState, f64)>,
    profiles: Vec<PatternProfiles>,
    arrival_pmfs: Vec<Vec<f64>>,
    state_cost: Vec<f64>,
}

/// Per-BS choice code: digit `m` (radix `K + 1`, BS 0 least significant) is
/// the scheduled user, or `K` for nobody.
type ScheduleCode = u32;

impl OracleModel {
    pub fn new(scenario: &Scenario, opts: &OracleOptions) -> Result<Self> {
        if !scenario.is_discrete_bits() {
            return Err(Error::Unsupported(
                "the oracle needs discrete fading and the bit queue mode".into(),
            ));
        }
        let cfg = &scenario.cfg;
        let indexer = QsiIndexer::new(cfg.num_users(), cfg.buffer_size)?;
        let csi_count = scenario
            .channel
            .global_state_count()
            .filter(|&c| c <= usize::MAX as u128)
            .ok_or_else(|| Error::Unsupported("CSI space too large".into()))? as usize;
        let pairs = (indexer.len() as u128) * csi_count as u128;
        if pairs > opts.max_pairs as u128 {
            return Err(Error::Unsupported(format!(
                "{} QSI states × {csi_count} CSI states exceeds the limit of {} pairs",
                indexer.len(),
                opts.max_pairs
            )));
        }
        let combos = (cfg.users_per_bs as u128 + 1).pow(cfg.num_bs as u32);
        if combos > u32::MAX as u128 {
            return Err(Error::Unsupported("too many joint schedules".into()));
        }
        let csi_states = scenario.channel.global_states(opts.max_pairs)?;
        let band = BandPlan::shared(cfg.num_bs);
        let profiles = scenario
            .patterns
            .patterns()
            .iter()
            .map(|p| {
                let mut lookup: HashMap<Vec<u64>, u32> = HashMap::new();
                let mut out = PatternProfiles {
                    of_csi: Vec::with_capacity(csi_states.len()),
                    service: Vec::new(),
                    prob: Vec::new(),
                };
                for (csi, prob) in &csi_states {
                    let r = candidate_rates(cfg, csi, p, &band);
                    let u: Vec<u64> = r.deliverable.iter().map(|&d| d.min(cfg.buffer_size)).collect();
                    let id = *lookup.entry(u.clone()).or_insert_with(|| {
                        out.service.push(u);
                        out.prob.push(0.0);
                        (out.service.len() - 1) as u32
                    });
                    out.prob[id as usize] += prob;
                    out.of_csi.push(id);
                }
                out
            })
            .collect();
        let arrival_pmfs = (0..cfg.num_users())
            .map(|u| scenario.arrivals.dist(u).pmf(cfg.buffer_size))
            .collect();
        let state_cost = (0..indexer.len())
            .map(|i| scenario.cost.per_slot_cost(&QsiState::from_raw(indexer.decode(i))))
            .collect();
        Ok(OracleModel {
            scenario: scenario.clone(),
            indexer,
            csi_states,
            profiles,
            arrival_pmfs,
            state_cost,
        })
    }

    pub fn indexer(&self) -> &QsiIndexer {
        &self.indexer
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn num_csi_states(&self) -> usize {
        self.csi_states.len()
    }

    pub fn csi_states(&self) -> &[(CsiState, f64)] {
        &self.csi_states
    }

    /// `W(q̃) = E_A[V(min(q̃ + A, N_Q))]` for every post-decision state.
    pub fn expected_after_arrivals(&self, v: &[f64]) -> Vec<f64> {
        let nq = self.scenario.cfg.buffer_size;
        let mut cur = v.to_vec();
        let mut next = vec![0.0; cur.len()];
        for (user, pmf) in self.arrival_pmfs.iter().enumerate() {
            if pmf[0] == 1.0 {
                continue;
            }
            let stride = self.indexer.stride(user);
            next.par_iter_mut().enumerate().for_each(|(i, w)| {
                let x = self.indexer.coord(i, user);
                let base = i - x as usize * stride;
                *w = pmf
                    .iter()
                    .enumerate()
                    .filter(|(_, &pa)| pa != 0.0)
                    .map(|(a, &pa)| pa * cur[base + (x + a as u64).min(nq) as usize * stride])
                    .sum();
            });
            std::mem::swap(&mut cur, &mut next);
        }
        cur
    }

    /// Best joint schedule for one profile: returns `(min W, code)`.
    fn best_schedule(&self, qi: usize, p: IciPattern, service: &[u64], w: &[f64]) -> (f64, ScheduleCode) {
        let cfg = &self.scenario.cfg;
        let k_per = cfg.users_per_bs;
        let m_count = cfg.num_bs;
        // Options per BS, in tie-break order: users with data first, then idle.
        let mut options: Vec<Vec<(u32, usize)>> = Vec::with_capacity(m_count);
        for m in 0..m_count {
            let mut opts = Vec::with_capacity(k_per + 1);
            if p.is_active(m) {
                for k in 0..k_per {
                    let u = m * k_per + k;
                    let q = self.indexer.coord(qi, u);
                    if q > 0 {
                        let served = service[u].min(q) as usize;
                        opts.push((k as u32, served * self.indexer.stride(u)));
                    }
                }
            }
            opts.push((k_per as u32, 0));
            options.push(opts);
        }
        let mut digits = vec![0usize; m_count];
        let mut best = (f64::INFINITY, 0);
        loop {
            let mut offset = 0;
            let mut code = 0u32;
            let mut place = 1u32;
            for m in 0..m_count {
                let (k, off) = options[m][digits[m]];
                offset += off;
                code += k * place;
                place *= k_per as u32 + 1;
            }
            let val = w[qi - offset];
            if val < best.0 {
                best = (val, code);
            }
            // Advance the odometer, BS 0 fastest.
            let mut m = 0;
            loop {
                if m == m_count {
                    return best;
                }
                digits[m] += 1;
                if digits[m] < options[m].len() {
                    break;
                }
                digits[m] = 0;
                m += 1;
            }
        }
    }

    /// `min_p E_H[min_s W]` at state `qi`: `(value, best pattern index)`.
    fn pattern_min(&self, qi: usize, w: &[f64]) -> (f64, usize) {
        let mut best = (f64::INFINITY, 0);
        for (pi, prof) in self.profiles.iter().enumerate() {
            let p = self.scenario.patterns.get(pi);
            let val: f64 = prof
                .service
                .iter()
                .zip(&prof.prob)
                .map(|(svc, pr)| pr * self.best_schedule(qi, p, svc, w).0)
                .sum();
            if val < best.0 {
                best = (val, pi);
            }
        }
        best
    }

    /// Right-hand side `T(V)(Q)` and its minimizers.
    pub fn bellman_rhs(&self, q: &QsiState, v: &[f64]) -> BellmanRhs {
        let w = self.expected_after_arrivals(v);
        self.rhs_with(self.indexer.index(q.as_slice()), &w)
    }

    fn rhs_with(&self, qi: usize, w: &[f64]) -> BellmanRhs {
        let (val, pi) = self.pattern_min(qi, w);
        let prof = &self.profiles[pi];
        let p = self.scenario.patterns.get(pi);
        let per_profile: Vec<ScheduleCode> = prof
            .service
            .iter()
            .map(|svc| self.best_schedule(qi, p, svc, w).1)
            .collect();
        let k_per = self.scenario.cfg.users_per_bs;
        let m_count = self.scenario.cfg.num_bs;
        let schedules = prof
            .of_csi
            .iter()
            .map(|&id| decode_schedule(per_profile[id as usize], m_count, k_per))
            .collect();
        BellmanRhs {
            value: self.state_cost[qi] + val,
            pattern: pi,
            schedules,
        }
    }

    /// `T(V)(Q)` for every pattern, by brute force: every CSI state and every
    /// valid indicator vector, with rates from [`compute_rates`].
    pub fn bellman_rhs_exhaustive(&self, q: &QsiState, v: &[f64]) -> Result<Vec<f64>> {
        let cfg = &self.scenario.cfg;
        let n = cfg.num_users();
        if n > 20 {
            return Err(Error::Unsupported("exhaustive enumeration needs at most 20 users".into()));
        }
        let w = self.expected_after_arrivals(v);
        let qi = self.indexer.index(q.as_slice());
        self.scenario
            .patterns
            .patterns()
            .iter()
            .map(|p| {
                let mut total = 0.0;
                for (csi, prob) in &self.csi_states {
                    let mut best = f64::INFINITY;
                    for bits in 0u32..(1 << n) {
                        let s = ScheduleAction::from_indicators(
                            (0..n).map(|i| bits >> i & 1 == 1).collect(),
                            cfg.users_per_bs,
                        );
                        if validate_action(p, &s, q).is_err() {
                            continue;
                        }
                        let r = compute_rates(cfg, csi, p, &s, q)?;
                        let post: Vec<u64> = q
                            .as_slice()
                            .iter()
                            .zip(&r.deliverable)
                            .map(|(&x, &u)| x.saturating_sub(u))
                            .collect();
                        best = best.min(w[self.indexer.index(&post)]);
                    }
                    total += prob * best;
                }
                Ok(self.state_cost[qi] + total)
            })
            .collect()
    }
}

fn decode_schedule(mut code: ScheduleCode, num_bs: usize, users_per_bs: usize) -> ScheduleAction {
    let radix = users_per_bs as u32 + 1;
    let choices: Vec<Option<usize>> = (0..num_bs)
        .map(|_| {
            let d = code % radix;
            code /= radix;
            (d < users_per_bs as u32).then_some(d as usize)
        })
        .collect();
    ScheduleAction::from_choices(&choices, users_per_bs)
}

/// Result of one Bellman right-hand-side evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct BellmanRhs {
    pub value: f64,
    /// Catalog index of the minimizing pattern.
    pub pattern: usize,
    /// Minimizing schedule for every global CSI state, in enumeration order.
    pub schedules: Vec<ScheduleAction>,
}

/// Relative values over every global QSI and the optimal average cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentralValueTable {
    pub values: Vec<f64>,
    pub theta: f64,
    pub num_users: usize,
    pub buffer_size: u64,
    pub iterations: usize,
    pub final_span: f64,
}

impl CentralValueTable {
    pub fn get(&self, q: &QsiState) -> f64 {
        let idx = QsiIndexer::new(self.num_users, self.buffer_size)
            .expect("table was built with this shape")
            .index(q.as_slice());
        self.values[idx]
    }

    /// Nonstrict monotonicity along every unit increment, which by
    /// transitivity covers every dominating pair.
    pub fn is_monotone(&self) -> bool {
        let ix = QsiIndexer::new(self.num_users, self.buffer_size).expect("shape");
        (0..ix.len()).all(|i| {
            (0..self.num_users).all(|u| {
                ix.coord(i, u) == self.buffer_size || self.values[i + ix.stride(u)] >= self.values[i]
            })
        })
    }
}

/// Optimal pattern per QSI and schedule per (QSI, CSI).
#[derive(Debug, Clone, PartialEq)]
pub struct CentralPolicy {
    pattern_of: Vec<u32>,
    schedule_of: Vec<ScheduleCode>,
    num_csi: usize,
    num_bs: usize,
    users_per_bs: usize,
}

impl CentralPolicy {
    pub fn pattern_index(&self, qi: usize) -> usize {
        self.pattern_of[qi] as usize
    }

    pub fn schedule(&self, qi: usize, hi: usize) -> ScheduleAction {
        decode_schedule(self.schedule_of[qi * self.num_csi + hi], self.num_bs, self.users_per_bs)
    }

    pub fn num_csi_states(&self) -> usize {
        self.num_csi
    }
}

/// Relative value iteration from `V ≡ 0` with reference state `Q = 0`.
pub fn relative_value_iteration(
    model: &OracleModel,
    opts: &OracleOptions,
) -> Result<(CentralValueTable, CentralPolicy)> {
    let n = model.indexer.len();
    let mut v = vec![0.0; n];
    let mut history: Vec<f64> = Vec::new();
    let mut converged = None;
    let mut done = 0;
    for iter in 1..=opts.max_iters {
        done = iter;
        let w = model.expected_after_arrivals(&v);
        let t: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|qi| model.state_cost[qi] + model.pattern_min(qi, &w).0)
            .collect();
        let theta = t[0];
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (vi, ti) in v.iter_mut().zip(&t) {
            let new = (1.0 - opts.relaxation) * *vi + opts.relaxation * (ti - theta);
            let d = new - *vi;
            lo = lo.min(d);
            hi = hi.max(d);
            *vi = new;
        }
        let span = hi - lo;
        history.push(span);
        if history.len() > 64 {
            history.remove(0);
        }
        if !span.is_finite() {
            break;
        }
        if span < opts.tol {
            converged = Some((iter, span));
            break;
        }
    }
    let Some((iterations, final_span)) = converged else {
        return Err(Error::NonConvergence {
            iterations: done,
            last_span: *history.last().unwrap_or(&f64::NAN),
            span_history: history,
        });
    };
    let w = model.expected_after_arrivals(&v);
    let rhs: Vec<BellmanRhs> = (0..n).into_par_iter().map(|qi| model.rhs_with(qi, &w)).collect();
    let theta = rhs[0].value;
    let cfg = &model.scenario.cfg;
    let radix = cfg.users_per_bs as u32 + 1;
    let mut policy = CentralPolicy {
        pattern_of: Vec::with_capacity(n),
        schedule_of: Vec::with_capacity(n * model.csi_states.len()),
        num_csi: model.csi_states.len(),
        num_bs: cfg.num_bs,
        users_per_bs: cfg.users_per_bs,
    };
    for r in &rhs {
        policy.pattern_of.push(r.pattern as u32);
        for s in &r.schedules {
            let mut code = 0;
            let mut place = 1;
            for m in 0..cfg.num_bs {
                code += s.selected(m).map_or(cfg.users_per_bs as u32, |k| k as u32) * place;
                place *= radix;
            }
            policy.schedule_of.push(code);
        }
    }
    Ok((
        CentralValueTable {
            values: v,
            theta,
            num_users: cfg.num_users(),
            buffer_size: cfg.buffer_size,
            iterations,
            final_span,
        },
        policy,
    ))
}

/// Max over states of `|T(V)(Q) - V(Q) - θ|`.
pub fn bellman_residual(model: &OracleModel, table: &CentralValueTable) -> f64 {
    let w = model.expected_after_arrivals(&table.values);
    (0..model.indexer.len())
        .into_par_iter()
        .map(|qi| {
            let t = model.state_cost[qi] + model.pattern_min(qi, &w).0;
            (t - table.values[qi] - table.theta).abs()
        })
        .reduce(|| 0.0, f64::max)
}

/// Plays a solved [`CentralPolicy`] in the simulator.
#[derive(Debug, Clone)]
pub struct OraclePolicy {
    model: OracleModel,
    policy: CentralPolicy,
    current: usize,
}

impl OraclePolicy {
    pub fn new(model: OracleModel, policy: CentralPolicy) -> Self {
        OraclePolicy {
            model,
            policy,
            current: 0,
        }
    }

    /// Solves `scenario` and wraps the result.
    pub fn solve(scenario: &Scenario, opts: &OracleOptions) -> Result<(Self, CentralValueTable)> {
        let model = OracleModel::new(scenario, opts)?;
        let (table, policy) = relative_value_iteration(&model, opts)?;
        Ok((OraclePolicy::new(model, policy), table))
    }
}

impl SlotPolicy for OraclePolicy {
    fn name(&self) -> String {
        "oracle".into()
    }

    fn select_pattern(&mut self, ctx: &SlotContext<'_>) -> Result<IciPattern> {
        self.current = self.model.indexer.index(ctx.q.as_slice());
        Ok(self.model.scenario.patterns.get(self.policy.pattern_index(self.current)))
    }

    fn schedule(
        &mut self,
        ctx: &SlotContext<'_>,
        _pattern: IciPattern,
        _candidates: &crate::channel::RateReport,
        _units: &[u64],
    ) -> Result<ScheduleAction> {
        let hi = self
            .model
            .scenario
            .channel
            .discrete_index(ctx.csi)
            .ok_or_else(|| Error::Unsupported("CSI outside the discrete support".into()))?;
        Ok(self.policy.schedule(self.current, hi))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::queueing::ArrivalDist;

    #[test]
    fn indexer_round_trip() {
        let ix = QsiIndexer::new(4, 3).unwrap();
        assert_eq!(ix.len(), 256);
        for i in 0..ix.len() {
            assert_eq!(ix.index(&ix.decode(i)), i);
        }
        assert_eq!(ix.coord(ix.index(&[1, 2, 3, 0]), 2), 3);
    }

    #[test]
    fn example_one_has_one_schedule_per_csi_state() {
        let sc = Scenario::example1(3, ArrivalDist::Deterministic { size: 1 }).unwrap();
        let model = OracleModel::new(&sc, &OracleOptions::default()).unwrap();
        let q = QsiState::new(vec![1, 2, 3, 1], &sc.cfg).unwrap();
        let rhs = model.bellman_rhs(&q, &vec![0.0; 256]);
        assert_eq!(rhs.schedules.len(), 256);
    }

    #[test]
    fn empty_queues_tie_to_first_pattern() {
        let sc = Scenario::example1(3, ArrivalDist::Bernoulli { rate: 0.5 }).unwrap();
        let model = OracleModel::new(&sc, &OracleOptions::default()).unwrap();
        let v: Vec<f64> = (0..256).map(|i| (i % 7) as f64).collect();
        let rhs = model.bellman_rhs(&QsiState::empty(&sc.cfg), &v);
        assert_eq!(rhs.pattern, 0);
        let w = model.expected_after_arrivals(&v);
        assert!((rhs.value - w[0]).abs() < 1e-12);
        assert!(rhs.schedules.iter().all(|s| s.indicators().iter().all(|&x| !x)));
    }

    #[test]
    fn continuous_fading_is_rejected() {
        let mut sc = Scenario::example1(3, ArrivalDist::Bernoulli { rate: 0.5 }).unwrap();
        sc.channel = crate::channel::ChannelModel::new(
            crate::channel::FadingDist::Rayleigh { mean_gain: 1.0 },
            &sc.cfg,
        )
        .unwrap();
        assert!(matches!(
            OracleModel::new(&sc, &OracleOptions::default()),
            Err(Error::Unsupported(_))
        ));
    }
}
