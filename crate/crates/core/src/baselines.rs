//! Comparison schemes: CSIT-only and backpressure scheduling over static
//! reuse-3, and a two-timescale proportional-fair scheme that switches the
//! interference pattern on a slow clock.

use serde::{Deserialize, Serialize};

use crate::channel::{candidate_rates, BandPlan, RateReport};
use crate::error::{Error, Result};
use crate::geometry::reuse3_colors;
use crate::model::{IciPattern, PatternSet, QsiState, ScheduleAction, SystemConfig};
use crate::policy::{SlotContext, SlotObservation, SlotPolicy};

/// Static frequency reuse: BS `m` transmits every slot on sub-band
/// `color[m]` of `factor` equal sub-bands.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReusePlan {
    colors: Vec<usize>,
    factor: usize,
}

impl ReusePlan {
    pub fn new(colors: Vec<usize>, factor: usize) -> Result<Self> {
        if factor == 0 || colors.iter().any(|&c| c >= factor) {
            return Err(Error::config("reuse colors must lie below the reuse factor"));
        }
        Ok(ReusePlan { colors, factor })
    }

    /// Reuse-3 on the hex cluster (or `m mod 3` off-cluster).
    pub fn reuse3(num_bs: usize) -> Self {
        ReusePlan {
            colors: reuse3_colors(num_bs),
            factor: 3,
        }
    }

    pub fn colors(&self) -> &[usize] {
        &self.colors
    }

    pub fn factor(&self) -> usize {
        self.factor
    }

    pub fn band_plan(&self) -> BandPlan {
        BandPlan::new(self.colors.clone(), self.factor).expect("validated colors")
    }

    /// Every BS transmits; separation comes from the sub-bands.
    pub fn pattern(&self) -> IciPattern {
        IciPattern::all_on(self.colors.len())
    }
}

/// Per active BS, `argmax_k score(u)` over users passing `eligible`; ties go
/// to the lowest index.
fn argmax_per_bs(
    p: &IciPattern,
    users_per_bs: usize,
    score: impl Fn(usize) -> f64,
    eligible: impl Fn(usize) -> bool,
) -> Vec<Option<usize>> {
    (0..p.num_bs())
        .map(|m| {
            if !p.is_active(m) {
                return None;
            }
            let mut best: Option<(usize, f64)> = None;
            for k in 0..users_per_bs {
                let u = m * users_per_bs + k;
                if !eligible(u) {
                    continue;
                }
                let s = score(u);
                if best.is_none_or(|(_, b)| s > b) {
                    best = Some((k, s));
                }
            }
            best.map(|b| b.0)
        })
        .collect()
}

/// Raw CSIT-only choice per BS: `argmax_k R`, ignoring queues.
pub fn csit_only_choice(p: &IciPattern, rates: &RateReport, users_per_bs: usize) -> Vec<Option<usize>> {
    argmax_per_bs(p, users_per_bs, |u| rates.rate[u], |_| true)
}

/// CSIT-only choice with empty-queue picks dropped. An empty queue receives
/// no service either way, so only the action record changes.
pub fn csit_only_schedule(p: &IciPattern, rates: &RateReport, q: &QsiState, users_per_bs: usize) -> ScheduleAction {
    let choices: Vec<Option<usize>> = csit_only_choice(p, rates, users_per_bs)
        .into_iter()
        .enumerate()
        .map(|(m, c)| c.filter(|&k| q.get(m * users_per_bs + k) > 0))
        .collect();
    ScheduleAction::from_choices(&choices, users_per_bs)
}

/// Raw max-weight choice per BS: `argmax_k q · R`.
pub fn backpressure_choice(
    p: &IciPattern,
    rates: &RateReport,
    q: &QsiState,
    users_per_bs: usize,
) -> Vec<Option<usize>> {
    argmax_per_bs(p, users_per_bs, |u| q.get(u) as f64 * rates.rate[u], |_| true)
}

pub fn backpressure_schedule(p: &IciPattern, rates: &RateReport, q: &QsiState, users_per_bs: usize) -> ScheduleAction {
    let choices: Vec<Option<usize>> = backpressure_choice(p, rates, q, users_per_bs)
        .into_iter()
        .enumerate()
        .map(|(m, c)| c.filter(|&k| q.get(m * users_per_bs + k) > 0))
        .collect();
    ScheduleAction::from_choices(&choices, users_per_bs)
}

#[derive(Debug, Clone)]
pub struct CsitOnlyPolicy {
    plan: ReusePlan,
    users_per_bs: usize,
}

impl CsitOnlyPolicy {
    pub fn new(cfg: &SystemConfig, plan: ReusePlan) -> Result<Self> {
        check_plan(cfg, &plan)?;
        Ok(CsitOnlyPolicy {
            plan,
            users_per_bs: cfg.users_per_bs,
        })
    }
}

fn check_plan(cfg: &SystemConfig, plan: &ReusePlan) -> Result<()> {
    if plan.colors.len() != cfg.num_bs {
        return Err(Error::config("reuse plan does not match num_bs"));
    }
    Ok(())
}

impl SlotPolicy for CsitOnlyPolicy {
    fn name(&self) -> String {
        "csit_only".into()
    }

    fn band_plan(&self, _num_bs: usize) -> BandPlan {
        self.plan.band_plan()
    }

    fn select_pattern(&mut self, _ctx: &SlotContext<'_>) -> Result<IciPattern> {
        Ok(self.plan.pattern())
    }

    fn schedule(
        &mut self,
        ctx: &SlotContext<'_>,
        pattern: IciPattern,
        candidates: &RateReport,
        _units: &[u64],
    ) -> Result<ScheduleAction> {
        Ok(csit_only_schedule(&pattern, candidates, ctx.q, self.users_per_bs))
    }
}

#[derive(Debug, Clone)]
pub struct BackpressurePolicy {
    plan: ReusePlan,
    users_per_bs: usize,
}

impl BackpressurePolicy {
    pub fn new(cfg: &SystemConfig, plan: ReusePlan) -> Result<Self> {
        check_plan(cfg, &plan)?;
        Ok(BackpressurePolicy {
            plan,
            users_per_bs: cfg.users_per_bs,
        })
    }
}

impl SlotPolicy for BackpressurePolicy {
    fn name(&self) -> String {
        "backpressure".into()
    }

    fn band_plan(&self, _num_bs: usize) -> BandPlan {
        self.plan.band_plan()
    }

    fn select_pattern(&mut self, _ctx: &SlotContext<'_>) -> Result<IciPattern> {
        Ok(self.plan.pattern())
    }

    fn schedule(
        &mut self,
        ctx: &SlotContext<'_>,
        pattern: IciPattern,
        candidates: &RateReport,
        _units: &[u64],
    ) -> Result<ScheduleAction> {
        Ok(backpressure_schedule(&pattern, candidates, ctx.q, self.users_per_bs))
    }
}

/// Network utility scored per pattern on the slow timescale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlowUtility {
    /// `Σ_m max_k R / T̄`.
    ProportionalFair,
    /// `Σ_m max_k R`.
    SumRate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimescaleConfig {
    /// Slots between pattern decisions.
    pub slow_period: u64,
    /// Averaging window of the throughput estimate, in slots.
    pub pf_window: f64,
    pub utility: SlowUtility,
    /// Restrict the fast proportional-fair pick to users with a backlog.
    pub backlog_aware: bool,
}

impl Default for TimescaleConfig {
    fn default() -> Self {
        TimescaleConfig {
            slow_period: 100,
            pf_window: 1000.0,
            utility: SlowUtility::ProportionalFair,
            backlog_aware: false,
        }
    }
}

/// Slow pattern selection by window-averaged utility, fast proportional-fair
/// user selection under the held pattern.
#[derive(Debug, Clone)]
pub struct TimescaleDecomp {
    config: TimescaleConfig,
    cfg: SystemConfig,
    patterns: PatternSet,
    /// Exponentially averaged served rate per user.
    avg_rate: Vec<f64>,
    /// Utility accumulated per pattern over the current window.
    score: Vec<f64>,
    current: usize,
    /// Fast-timescale picks of the last slot, before empty queues are masked.
    picks: Vec<Option<usize>>,
}

impl TimescaleDecomp {
    pub fn new(cfg: &SystemConfig, patterns: &PatternSet, config: TimescaleConfig) -> Result<Self> {
        if config.slow_period == 0 {
            return Err(Error::config("slow_period must be at least 1"));
        }
        if !(config.pf_window >= 1.0 && config.pf_window.is_finite()) {
            return Err(Error::config("pf_window must be at least 1 slot"));
        }
        if patterns.num_bs() != cfg.num_bs {
            return Err(Error::config("pattern catalog does not match num_bs"));
        }
        Ok(TimescaleDecomp {
            config,
            cfg: cfg.clone(),
            patterns: patterns.clone(),
            avg_rate: vec![1.0; cfg.num_users()],
            score: vec![0.0; patterns.len()],
            current: 0,
            picks: vec![None; cfg.num_bs],
        })
    }

    pub fn current_pattern(&self) -> usize {
        self.current
    }

    pub fn average_rates(&self) -> &[f64] {
        &self.avg_rate
    }

    fn utility(&self, rates: &RateReport, p: &IciPattern) -> f64 {
        let k_per = self.cfg.users_per_bs;
        p.active()
            .map(|m| {
                (0..k_per)
                    .map(|k| {
                        let u = m * k_per + k;
                        match self.config.utility {
                            SlowUtility::ProportionalFair => rates.rate[u] / self.avg_rate[u],
                            SlowUtility::SumRate => rates.rate[u],
                        }
                    })
                    .fold(0.0, f64::max)
            })
            .sum()
    }
}

impl SlotPolicy for TimescaleDecomp {
    fn name(&self) -> String {
        "timescale".into()
    }

    fn select_pattern(&mut self, ctx: &SlotContext<'_>) -> Result<IciPattern> {
        let band = BandPlan::shared(self.cfg.num_bs);
        for i in 0..self.patterns.len() {
            let p = self.patterns.get(i);
            let rates = candidate_rates(&self.cfg, ctx.csi, &p, &band);
            self.score[i] += self.utility(&rates, &p);
        }
        if ctx.slot % self.config.slow_period == 0 {
            let mut best = (f64::NEG_INFINITY, 0);
            for (i, &s) in self.score.iter().enumerate() {
                if s > best.0 {
                    best = (s, i);
                }
            }
            self.current = best.1;
            self.score.iter_mut().for_each(|s| *s = 0.0);
        }
        Ok(self.patterns.get(self.current))
    }

    fn schedule(
        &mut self,
        ctx: &SlotContext<'_>,
        pattern: IciPattern,
        candidates: &RateReport,
        _units: &[u64],
    ) -> Result<ScheduleAction> {
        let aware = self.config.backlog_aware;
        self.picks = argmax_per_bs(
            &pattern,
            self.cfg.users_per_bs,
            |u| candidates.rate[u] / self.avg_rate[u],
            |u| !aware || ctx.q.get(u) > 0,
        );
        let choices: Vec<Option<usize>> = self
            .picks
            .iter()
            .enumerate()
            .map(|(m, c)| c.filter(|&k| ctx.q.get(m * self.cfg.users_per_bs + k) > 0))
            .collect();
        Ok(ScheduleAction::from_choices(&choices, self.cfg.users_per_bs))
    }

    fn observe(&mut self, obs: &SlotObservation<'_>) -> Result<()> {
        let w = 1.0 / self.config.pf_window;
        let k_per = self.cfg.users_per_bs;
        for (u, avg) in self.avg_rate.iter_mut().enumerate() {
            let picked = self.picks[u / k_per] == Some(u % k_per);
            let served = if picked {
                obs.candidates.rate[u]
            } else {
                0.0
            };
            *avg = (1.0 - w) * *avg + w * served;
        }
        Ok(())
    }
}
