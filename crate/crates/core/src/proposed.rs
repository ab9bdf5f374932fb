//! The distributed learning controller.
//!
//! Each slot the controller refreshes region-gated per-BS pattern costs,
//! picks the pattern minimizing their sum (with optional exploration), and
//! every active BS schedules the user with the largest value drop
//! `Ṽ(q) - Ṽ((q - u)^+)`. After the slot every user updates its own tables
//! from local observations only.
//!
//! Value-update timing: the observation formed in slot `t` (post-decision
//! queue, arrivals, realized pattern) is completed with the service the user
//! would get under its reference pattern in slot `t + 1`, which depends only
//! on the next CSI draw. Gating on the pattern of slot `t` keeps the accepted
//! samples independent of the arrivals they contain.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{candidate_rates, BandPlan, RateReport};
use crate::control::{refresh_qinfo, schedule_from_delta, select_pattern, BscQInfo, QsiRegionPartition};
use crate::error::{Error, Result};
use crate::learner::{
    q_target, value_target, NoiseDiagnostics, PerUserQTable, PerUserValueTable, QObservation,
    StepSizeSchedule, UserKernel, UserLearner, ValueObservation,
};
use crate::model::{IciPattern, ScheduleAction, SystemConfig};
use crate::policy::{SlotContext, SlotObservation, SlotPolicy, TableSnapshot};
use crate::rng::{stream, SimRng, Stream};
use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplorationDecay {
    Constant,
    /// `ε / √(1 + t)`.
    InvSqrt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplorationSet {
    /// The per-BS reference patterns.
    References,
    /// The whole catalog.
    Catalog,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Exploration {
    pub epsilon: f64,
    pub decay: ExplorationDecay,
    pub set: ExplorationSet,
}

impl Default for Exploration {
    fn default() -> Self {
        Exploration {
            epsilon: 0.05,
            decay: ExplorationDecay::InvSqrt,
            set: ExplorationSet::References,
        }
    }
}

impl Exploration {
    pub fn rate(&self, slot: u64) -> f64 {
        match self.decay {
            ExplorationDecay::Constant => self.epsilon,
            ExplorationDecay::InvSqrt => self.epsilon / (1.0 + slot as f64).sqrt(),
        }
    }
}

/// How queue lengths are grouped before the controller is told about them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PartitionSpec {
    Uniform { regions: u64 },
    /// Every queue length is its own region.
    Singletons,
    /// Region start points shared by every user.
    Starts { starts: Vec<u64> },
}

impl Default for PartitionSpec {
    fn default() -> Self {
        PartitionSpec::Uniform { regions: 4 }
    }
}

impl PartitionSpec {
    pub fn build(&self, num_users: usize, buffer_size: u64) -> Result<QsiRegionPartition> {
        match self {
            PartitionSpec::Uniform { regions } => {
                QsiRegionPartition::uniform(num_users, buffer_size, (*regions).min(buffer_size + 1))
            }
            PartitionSpec::Singletons => Ok(QsiRegionPartition::singletons(num_users, buffer_size)),
            PartitionSpec::Starts { starts } => {
                QsiRegionPartition::from_starts(vec![starts.clone(); num_users], buffer_size)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProposedConfig {
    pub value_step: StepSizeSchedule,
    pub q_step: StepSizeSchedule,
    /// Initial value table `slope · q̃`.
    pub value_init_slope: f64,
    pub exploration: Exploration,
    pub partition: PartitionSpec,
    /// Include the bandwidth factor when predicting service for scheduling.
    pub include_bandwidth: bool,
    /// In the packet mode, score partial progress on the head packet by
    /// interpolating the value table instead of rounding down to whole
    /// packets.
    pub fractional_service: bool,
}

impl Default for ProposedConfig {
    fn default() -> Self {
        ProposedConfig {
            value_step: StepSizeSchedule::default(),
            q_step: StepSizeSchedule::default(),
            value_init_slope: 0.01,
            exploration: Exploration::default(),
            partition: PartitionSpec::default(),
            include_bandwidth: true,
            fractional_service: true,
        }
    }
}

impl ProposedConfig {
    pub fn validate(&self) -> Result<()> {
        self.value_step.validate()?;
        self.q_step.validate()?;
        if !(self.value_init_slope >= 0.0 && self.value_init_slope.is_finite()) {
            return Err(Error::config("value_init_slope must be nonnegative"));
        }
        if !(0.0..=1.0).contains(&self.exploration.epsilon) {
            return Err(Error::config("exploration epsilon must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Noise statistics gathered by [`DistributedController`] when probing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NoiseReport {
    pub value: Vec<NoiseDiagnostics>,
    pub qfactor: Vec<NoiseDiagnostics>,
}

#[derive(Debug, Clone)]
struct NoiseProbe {
    kernels: Vec<UserKernel>,
    report: NoiseReport,
}

#[derive(Debug, Clone)]
pub struct DistributedController {
    scenario: Scenario,
    config: ProposedConfig,
    learners: Vec<UserLearner>,
    partition: QsiRegionPartition,
    info: BscQInfo,
    /// Reference pattern index per BS.
    references: Vec<usize>,
    rng: SimRng,
    pattern_index: usize,
    /// Value observations awaiting next slot's service sample.
    pending: Vec<Option<ValueObservation>>,
    reference_units: Vec<u64>,
    probe: Option<NoiseProbe>,
}

impl DistributedController {
    pub fn new(scenario: &Scenario, config: ProposedConfig, seed: u64) -> Result<Self> {
        let cfg = &scenario.cfg;
        let np = scenario.patterns.len();
        let references = (0..cfg.num_bs)
            .map(|m| scenario.patterns.reference_for(m))
            .collect::<Result<Vec<_>>>()?;
        let values = (0..cfg.num_users())
            .map(|u| PerUserValueTable::linear(cfg.buffer_size, config.value_init_slope, references[cfg.bs_of(u)]))
            .collect();
        let qtables = (0..cfg.num_users())
            .map(|u| PerUserQTable::zeros(cfg.buffer_size, np, references[cfg.bs_of(u)]))
            .collect();
        Self::with_tables(scenario, config, seed, values, qtables)
    }

    /// Starts from the given tables instead of the default initialization.
    pub fn with_tables(
        scenario: &Scenario,
        config: ProposedConfig,
        seed: u64,
        values: Vec<PerUserValueTable>,
        qtables: Vec<PerUserQTable>,
    ) -> Result<Self> {
        config.validate()?;
        let cfg = &scenario.cfg;
        let n = cfg.num_users();
        if values.len() != n || qtables.len() != n {
            return Err(Error::config("one value table and one Q-table per user are required"));
        }
        let references = (0..cfg.num_bs)
            .map(|m| scenario.patterns.reference_for(m))
            .collect::<Result<Vec<_>>>()?;
        let learners = values
            .into_iter()
            .zip(qtables)
            .enumerate()
            .map(|(u, (v, q))| {
                if v.reference_pattern() != references[cfg.bs_of(u)]
                    || q.num_patterns() != scenario.patterns.len()
                {
                    return Err(Error::config(format!("tables of user {} do not match the catalog", u + 1)));
                }
                UserLearner::new(v, q, scenario.cost.user_table(u), config.value_step, config.q_step)
            })
            .collect::<Result<Vec<_>>>()?;
        let partition = config.partition.build(n, cfg.buffer_size)?;
        Ok(DistributedController {
            scenario: scenario.clone(),
            info: BscQInfo::new(cfg.num_bs, scenario.patterns.len()),
            references,
            rng: stream(seed, Stream::Policy),
            pattern_index: 0,
            pending: vec![None; n],
            reference_units: vec![0; n],
            probe: None,
            config,
            learners,
            partition,
        })
    }

    /// Records update noise against the exact per-user kernels. Needs a
    /// discrete bit-mode scenario.
    pub fn enable_noise_probe(&mut self) -> Result<()> {
        let cfg = &self.scenario.cfg;
        let kernels = (0..cfg.num_bs)
            .flat_map(|m| (0..cfg.users_per_bs).map(move |k| (m, k)))
            .map(|(m, k)| {
                let sc = &self.scenario;
                UserKernel::new(&sc.cfg, &sc.channel, &sc.arrivals, &sc.cost, &sc.patterns, m, k)
            })
            .collect::<Result<Vec<_>>>()?;
        let n = kernels.len();
        self.probe = Some(NoiseProbe {
            kernels,
            report: NoiseReport {
                value: vec![NoiseDiagnostics::new(); n],
                qfactor: vec![NoiseDiagnostics::new(); n],
            },
        });
        Ok(())
    }

    pub fn noise_report(&self) -> Option<&NoiseReport> {
        self.probe.as_ref().map(|p| &p.report)
    }

    pub fn learners(&self) -> &[UserLearner] {
        &self.learners
    }

    pub fn partition(&self) -> &QsiRegionPartition {
        &self.partition
    }

    pub fn bsc(&self) -> &BscQInfo {
        &self.info
    }

    /// Service in queue units per user for the given candidates.
    fn units_for(&self, ctx: &SlotContext<'_>, report: &RateReport, literal: bool) -> Vec<u64> {
        let cfg = &self.scenario.cfg;
        (0..cfg.num_users())
            .map(|u| {
                let bits = if literal {
                    literal_bits(cfg, report, u)
                } else {
                    report.deliverable[u]
                };
                ctx.to_units(u, bits)
            })
            .collect()
    }
}

/// `floor(log2(1 + ξφ/ϕ̄) τ)`: the deliverable bits without the bandwidth
/// factor.
fn literal_bits(cfg: &SystemConfig, report: &RateReport, u: usize) -> u64 {
    if report.signal[u] > 0.0 {
        let r = (1.0 + cfg.coding_gap * report.signal[u] / report.interference_plus_noise[u]).log2();
        (r * cfg.slot_len).floor() as u64
    } else {
        0
    }
}

impl SlotPolicy for DistributedController {
    fn name(&self) -> String {
        "proposed".into()
    }

    fn select_pattern(&mut self, ctx: &SlotContext<'_>) -> Result<IciPattern> {
        let cfg = &self.scenario.cfg;
        let k_per = cfg.users_per_bs;
        for m in 0..cfg.num_bs {
            let first = m * k_per;
            let tables: Vec<&PerUserQTable> =
                self.learners[first..first + k_per].iter().map(|l| &l.qfactor).collect();
            refresh_qinfo(&mut self.info, m, ctx.q.cell(m, k_per), first, &self.partition, &tables);
        }
        let mut idx = select_pattern(&self.info, &self.scenario.patterns)?;
        let explore: f64 = self.rng.random();
        if explore < self.config.exploration.rate(ctx.slot) {
            idx = match self.config.exploration.set {
                ExplorationSet::References => self.references[self.rng.random_range(0..self.references.len())],
                ExplorationSet::Catalog => self.rng.random_range(0..self.scenario.patterns.len()),
            };
        }
        self.pattern_index = idx;
        Ok(self.scenario.patterns.get(idx))
    }

    fn schedule(
        &mut self,
        ctx: &SlotContext<'_>,
        pattern: IciPattern,
        candidates: &RateReport,
        units: &[u64],
    ) -> Result<ScheduleAction> {
        let cfg = &self.scenario.cfg;
        let band = BandPlan::shared(cfg.num_bs);
        // Reference-pattern service for the pending value updates.
        let mut done: Vec<Option<Vec<u64>>> = vec![None; self.scenario.patterns.len()];
        for m in 0..cfg.num_bs {
            let r = self.references[m];
            if done[r].is_none() {
                let rep = candidate_rates(cfg, ctx.csi, &self.scenario.patterns.get(r), &band);
                done[r] = Some(self.units_for(ctx, &rep, false));
            }
            let svc = done[r].as_ref().expect("filled");
            for k in 0..cfg.users_per_bs {
                let u = cfg.user(m, k);
                self.reference_units[u] = svc[u];
            }
        }
        let literal = !self.config.include_bandwidth;
        let fractional = self.config.fractional_service && ctx.is_packet_mode();
        let predicted;
        let units = if literal && !fractional {
            predicted = self.units_for(ctx, candidates, true);
            &predicted
        } else {
            units
        };
        let delta: Vec<f64> = self
            .learners
            .iter()
            .enumerate()
            .map(|(u, l)| {
                let x = ctx.q.get(u);
                if x == 0 {
                    0.0
                } else if fractional {
                    let bits = if literal {
                        literal_bits(cfg, candidates, u)
                    } else {
                        candidates.deliverable[u]
                    };
                    let served = ctx.to_fractional_units(u, bits);
                    l.value.get(x) - l.value.interpolate(x as f64 - served)
                } else {
                    l.value.get(x) - l.value.get(x.saturating_sub(units[u]))
                }
            })
            .collect();
        Ok(schedule_from_delta(&pattern, &delta, ctx.q, cfg.users_per_bs))
    }

    fn observe(&mut self, obs: &SlotObservation<'_>) -> Result<()> {
        let slot = obs.slot;
        for u in 0..self.learners.len() {
            if let Some(mut vo) = self.pending[u].take() {
                vo.service = self.reference_units[u];
                if let Some(probe) = self.probe.as_mut() {
                    if vo.pattern == self.learners[u].value.reference_pattern() {
                        let observed = value_target(&self.learners[u].value, &vo, self.learners[u].cost())?;
                        let expected = probe.kernels[u].expected_value_target(&self.learners[u].value, vo.post_decision);
                        probe.report.value[u].record(observed, expected);
                    }
                }
                self.learners[u].learn_value(&vo, slot)?;
            }
            let qo = QObservation {
                queue: obs.q.get(u),
                pattern: self.pattern_index,
                arrival: obs.outcome.arrived[u],
                service: obs.candidate_units[u],
            };
            if let Some(probe) = self.probe.as_mut() {
                let observed = q_target(&self.learners[u].qfactor, &qo, self.learners[u].cost())?;
                let expected = probe.kernels[u].expected_q_target(&self.learners[u].qfactor, qo.queue, qo.pattern);
                probe.report.qfactor[u].record(observed, expected);
            }
            self.learners[u].learn_q(&qo, slot)?;
            self.pending[u] = Some(ValueObservation {
                post_decision: obs.outcome.post_decision[u],
                arrival: obs.outcome.arrived[u],
                service: 0,
                pattern: self.pattern_index,
            });
        }
        Ok(())
    }

    fn messages(&self) -> Option<Vec<u64>> {
        Some(self.info.messages().to_vec())
    }

    fn snapshot(&self, slot: u64) -> Option<TableSnapshot> {
        Some(TableSnapshot {
            slot,
            values: self.learners.iter().map(|l| l.value.clone()).collect(),
            qfactors: self.learners.iter().map(|l| l.qfactor.clone()).collect(),
        })
    }
}
