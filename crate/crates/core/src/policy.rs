//! The per-slot control interface every scheme implements.

use crate::channel::{BandPlan, RateReport};
use crate::error::Result;
use crate::learner::{PerUserQTable, PerUserValueTable};
use crate::model::{CsiState, IciPattern, QsiState, ScheduleAction};
use crate::queueing::{PacketService, SlotOutcome};

/// What a policy sees at the start of a slot.
#[derive(Debug, Clone, Copy)]
pub struct SlotContext<'a> {
    pub slot: u64,
    pub q: &'a QsiState,
    pub csi: &'a CsiState,
    pub(crate) packets: Option<&'a PacketService>,
}

impl<'a> SlotContext<'a> {
    pub fn new(slot: u64, q: &'a QsiState, csi: &'a CsiState) -> Self {
        SlotContext {
            slot,
            q,
            csi,
            packets: None,
        }
    }

    /// Converts a bit budget into queue units for `user`: bits in the bit
    /// mode, predicted whole packets in the packet mode.
    pub fn to_units(&self, user: usize, bits: u64) -> u64 {
        match self.packets {
            None => bits,
            Some(svc) => svc.predict(user, self.q.get(user), bits),
        }
    }

    /// [`to_units`](Self::to_units) with partial packets counted
    /// fractionally.
    pub fn to_fractional_units(&self, user: usize, bits: u64) -> f64 {
        match self.packets {
            None => bits as f64,
            Some(svc) => svc.predict_fraction(user, self.q.get(user), bits),
        }
    }

    pub fn is_packet_mode(&self) -> bool {
        self.packets.is_some()
    }
}

/// Everything that happened in one slot, handed back to the policy.
#[derive(Debug, Clone, Copy)]
pub struct SlotObservation<'a> {
    pub slot: u64,
    pub q: &'a QsiState,
    pub csi: &'a CsiState,
    pub pattern: IciPattern,
    pub schedule: &'a ScheduleAction,
    /// Rates under `pattern` as if each user were the one scheduled.
    pub candidates: &'a RateReport,
    /// `candidates.deliverable` in queue units.
    pub candidate_units: &'a [u64],
    pub outcome: &'a SlotOutcome,
}

/// Learned tables at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct TableSnapshot {
    pub slot: u64,
    pub values: Vec<PerUserValueTable>,
    pub qfactors: Vec<PerUserQTable>,
}

pub trait SlotPolicy: Send {
    fn name(&self) -> String;

    /// Spectrum arrangement; the shared channel unless overridden.
    fn band_plan(&self, num_bs: usize) -> BandPlan {
        BandPlan::shared(num_bs)
    }

    fn select_pattern(&mut self, ctx: &SlotContext<'_>) -> Result<IciPattern>;

    /// Picks users given candidate rates under `pattern`. The returned
    /// action must satisfy every [`ScheduleAction`] invariant.
    fn schedule(
        &mut self,
        ctx: &SlotContext<'_>,
        pattern: IciPattern,
        candidates: &RateReport,
        units: &[u64],
    ) -> Result<ScheduleAction>;

    fn observe(&mut self, _obs: &SlotObservation<'_>) -> Result<()> {
        Ok(())
    }

    /// Controller-refresh messages sent so far, per BS.
    fn messages(&self) -> Option<Vec<u64>> {
        None
    }

    fn snapshot(&self, _slot: u64) -> Option<TableSnapshot> {
        None
    }
}
