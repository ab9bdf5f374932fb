//! The slot loop.
//!
//! Order within slot `t`: draw `H` and `A`; the policy picks a pattern; rates
//! are computed for every candidate user under that pattern; the policy
//! schedules; scheduled users are served and queues step; metrics record
//! the pre-decision state; finally the policy observes the slot.

use serde::{Deserialize, Serialize};

use crate::channel::{candidate_rates, resample_csi, sample_csi};
use crate::error::{Error, Result};
use crate::model::{validate_action, CsiState, QsiState, QueueUnit};
use crate::policy::{SlotContext, SlotObservation, SlotPolicy, TableSnapshot};
use crate::queueing::{sample_arrivals_into, step_queues, PacketService};
use crate::rng::{stream, Stream};
use crate::scenario::Scenario;

use super::metrics::{Estimate, MetricsCollector, MetricsRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSpec {
    pub seed: u64,
    pub horizon: u64,
    /// Leading slots excluded from the averages.
    pub warmup: u64,
    /// Slot counts after which learned tables are captured.
    pub checkpoints: Vec<u64>,
    /// Keep a per-slot trace.
    pub trace: bool,
    /// Starting queues; empty by default.
    pub initial_q: Option<Vec<u64>>,
}

impl Default for RunSpec {
    fn default() -> Self {
        RunSpec {
            seed: 1,
            horizon: 100_000,
            warmup: 10_000,
            checkpoints: Vec::new(),
            trace: false,
            initial_q: None,
        }
    }
}

impl RunSpec {
    /// Horizon `horizon` with the default 10% warmup.
    pub fn with_horizon(seed: u64, horizon: u64) -> Self {
        RunSpec {
            seed,
            horizon,
            warmup: horizon / 10,
            ..RunSpec::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.warmup >= self.horizon {
            return Err(Error::config(format!(
                "warmup ({}) must be shorter than the horizon ({})",
                self.warmup, self.horizon
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub slot: u64,
    pub pattern: String,
    pub queue_total: u64,
    pub arrived: u64,
    pub served: u64,
    pub dropped: u64,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub metrics: MetricsRecord,
    pub snapshots: Vec<TableSnapshot>,
    pub trace: Vec<TraceRow>,
    pub final_q: QsiState,
}

/// Runs `policy` on `scenario` for `spec.horizon` slots.
pub fn run(scenario: &Scenario, policy: &mut dyn SlotPolicy, spec: &RunSpec) -> Result<RunOutput> {
    spec.validate()?;
    let cfg = &scenario.cfg;
    let n = cfg.num_users();
    let mut q = match &spec.initial_q {
        Some(v) => QsiState::new(v.clone(), cfg)?,
        None => QsiState::empty(cfg),
    };
    let band = policy.band_plan(cfg.num_bs);

    let mut ch_rng = stream(spec.seed, Stream::Channel);
    let mut arr_rng = stream(spec.seed, Stream::Arrivals);
    let mut pkt_rng = stream(spec.seed, Stream::PacketSizes);
    let mut packets = match cfg.queue_unit {
        QueueUnit::Bits => None,
        QueueUnit::Packets { mean_packet_bits } => Some(PacketService::new(n, mean_packet_bits)?),
    };

    let mut metrics = MetricsCollector::new(
        &scenario.cost,
        scenario.arrivals.means(),
        cfg.buffer_size,
        spec.horizon - spec.warmup,
    );
    metrics.set_initial(&q);
    let mut snapshots = Vec::new();
    let mut trace = Vec::new();
    let mut csi: CsiState = sample_csi(&scenario.channel, &mut ch_rng);
    let mut arrivals = vec![0u64; n];
    let mut service = vec![0u64; n];
    let mut units = vec![0u64; n];

    for slot in 0..spec.horizon {
        if slot > 0 {
            resample_csi(&scenario.channel, &mut ch_rng, &mut csi);
        }
        sample_arrivals_into(&scenario.arrivals, &mut arr_rng, &mut arrivals);

        let ctx = SlotContext {
            slot,
            q: &q,
            csi: &csi,
            packets: packets.as_ref(),
        };
        let pattern = policy.select_pattern(&ctx)?;
        if pattern.num_bs() != cfg.num_bs {
            return Err(Error::InvalidAction(format!(
                "pattern {pattern} does not cover {} base stations",
                cfg.num_bs
            )));
        }
        let candidates = candidate_rates(cfg, &csi, &pattern, &band);
        for (u, x) in units.iter_mut().enumerate() {
            *x = ctx.to_units(u, candidates.deliverable[u]);
        }
        let action = policy.schedule(&ctx, pattern, &candidates, &units)?;
        if let Err(v) = validate_action(&pattern, &action, &q) {
            let msg = v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ");
            return Err(Error::InvalidAction(format!("{} at slot {slot}: {msg}", policy.name())));
        }

        for u in 0..n {
            service[u] = if !action.is_scheduled(u) {
                0
            } else {
                match packets.as_mut() {
                    None => candidates.deliverable[u],
                    Some(svc) => svc.serve(u, q.get(u), candidates.deliverable[u], &mut pkt_rng),
                }
            };
        }
        let outcome = step_queues(&q, &service, &arrivals, cfg.buffer_size);
        if let Some(svc) = packets.as_mut() {
            svc.sync(&outcome.next_q);
        }

        metrics.account(&outcome);
        if slot >= spec.warmup {
            metrics.record(&q, &pattern, &outcome);
        }
        if spec.trace {
            trace.push(TraceRow {
                slot,
                pattern: pattern.to_string(),
                queue_total: q.total(),
                arrived: outcome.arrived.iter().sum(),
                served: outcome.served.iter().sum(),
                dropped: outcome.dropped.iter().sum(),
                cost: scenario.cost.per_slot_cost(&q),
            });
        }

        policy.observe(&SlotObservation {
            slot,
            q: &q,
            csi: &csi,
            pattern,
            schedule: &action,
            candidates: &candidates,
            candidate_units: &units,
            outcome: &outcome,
        })?;
        q = outcome.next_q;

        if spec.checkpoints.contains(&(slot + 1)) {
            if let Some(s) = policy.snapshot(slot + 1) {
                snapshots.push(s);
            }
        }
    }

    let record = metrics.finish(policy.name(), spec.seed, spec.horizon, spec.warmup, policy.messages());
    Ok(RunOutput {
        metrics: record,
        snapshots,
        trace,
        final_q: q,
    })
}

/// Average per-slot cost of `policy` with its batch-means interval.
pub fn evaluate_policy(scenario: &Scenario, policy: &mut dyn SlotPolicy, spec: &RunSpec) -> Result<Estimate> {
    Ok(run(scenario, policy, spec)?.metrics.cost)
}
