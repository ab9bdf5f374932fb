//! A validated bundle of system configuration and stochastic models.

use crate::channel::{ChannelModel, FadingDist};
use crate::error::{Error, Result};
use crate::model::{CostModel, PatternSet, QueueUnit, SystemConfig};
use crate::queueing::{ArrivalDist, ArrivalModel};

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub cfg: SystemConfig,
    pub patterns: PatternSet,
    pub channel: ChannelModel,
    pub arrivals: ArrivalModel,
    pub cost: CostModel,
}

impl Scenario {
    pub fn new(
        cfg: SystemConfig,
        patterns: PatternSet,
        channel: ChannelModel,
        arrivals: ArrivalModel,
    ) -> Result<Self> {
        cfg.validate()?;
        if patterns.num_bs() != cfg.num_bs {
            return Err(Error::config("pattern catalog does not match num_bs"));
        }
        for m in 0..cfg.num_bs {
            patterns.reference_for(m)?;
        }
        if channel.num_links() != cfg.num_links() {
            return Err(Error::config("channel model does not match the topology"));
        }
        if arrivals.num_users() != cfg.num_users() {
            return Err(Error::config("arrival model does not match the topology"));
        }
        let cost = CostModel::new(&cfg, arrivals.means())?;
        Ok(Scenario {
            cfg,
            patterns,
            channel,
            arrivals,
            cost,
        })
    }

    /// The two-BS, two-user-per-cell toy network with unit powers, unit
    /// path gains, unit noise and bandwidth, and two equally likely fading
    /// levels `7` and `1` on every link.
    pub fn example1(buffer_size: u64, arrival: ArrivalDist) -> Result<Self> {
        let cfg = SystemConfig::uniform(2, 2, buffer_size);
        let channel = ChannelModel::new(
            FadingDist::Discrete {
                levels: vec![(7.0, 0.5), (1.0, 0.5)],
            },
            &cfg,
        )?;
        let arrivals = ArrivalModel::uniform(arrival, &cfg)?;
        Scenario::new(cfg, PatternSet::all_nonempty(2)?, channel, arrivals)
    }

    /// Same scenario with arrivals replaced.
    pub fn with_arrivals(&self, arrivals: ArrivalModel) -> Result<Self> {
        Scenario::new(self.cfg.clone(), self.patterns.clone(), self.channel.clone(), arrivals)
    }

    /// Same scenario with every BS transmit power multiplied by `factor`.
    pub fn with_power_scale(&self, factor: f64) -> Result<Self> {
        let mut cfg = self.cfg.clone();
        cfg.max_power.iter_mut().for_each(|p| *p *= factor);
        Scenario::new(cfg, self.patterns.clone(), self.channel.clone(), self.arrivals.clone())
    }

    /// Whether the exact solvers can handle this instance.
    pub fn is_discrete_bits(&self) -> bool {
        self.cfg.queue_unit == QueueUnit::Bits && self.channel.is_discrete()
    }
}
