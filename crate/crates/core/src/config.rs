//! TOML experiment files.
//!
//! A file describes the system, topology, channel, arrivals, pattern catalog,
//! run length, the policy and its parameters, and optionally a sweep. Any
//! key can be overridden with a dotted `section.key=value` assignment; the
//! value is read as a TOML literal and falls back to a string.
//!
//! ```toml
//! [system]
//! num_bs = 2
//! users_per_bs = 2
//! buffer_size = 3
//!
//! [channel]
//! kind = "discrete"
//! levels = [[7.0, 0.5], [1.0, 0.5]]
//!
//! [arrivals]
//! kind = "bernoulli"
//! rate = 0.3
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::{BackpressurePolicy, CsitOnlyPolicy, ReusePlan, TimescaleConfig, TimescaleDecomp};
use crate::channel::{ChannelModel, FadingDist};
use crate::error::{Error, Result};
use crate::geometry::{dbm_to_watts, MacroLayout};
use crate::model::{CostKind, IciPattern, PatternSet, QueueUnit, SystemConfig};
use crate::oracle::{OracleOptions, OraclePolicy};
use crate::policy::SlotPolicy;
use crate::proposed::{DistributedController, ProposedConfig};
use crate::queueing::{ArrivalDist, ArrivalModel};
use crate::rng::{stream, Stream};
use crate::scenario::Scenario;
use crate::sim::{sweep, RunSpec, SweepPoint, SweepRow};

fn one() -> f64 {
    1.0
}

fn one_u64() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub num_bs: usize,
    pub users_per_bs: usize,
    pub buffer_size: u64,
    #[serde(default = "one")]
    pub slot_len: f64,
    #[serde(default = "one")]
    pub bandwidth: f64,
    /// Noise PSD in W/Hz. Give this or `noise_psd_dbm_hz`; the default is 1.
    pub noise_psd: Option<f64>,
    pub noise_psd_dbm_hz: Option<f64>,
    #[serde(default = "one")]
    pub coding_gap: f64,
    /// Per-BS power in W. Give this or `power_dbm`; the default is 1 W.
    pub power_w: Option<f64>,
    pub power_dbm: Option<f64>,
    #[serde(default = "default_cost")]
    pub cost: CostKind,
    pub cost_weights: Option<Vec<f64>>,
    #[serde(default = "default_unit")]
    pub queue_unit: QueueUnit,
}

fn default_cost() -> CostKind {
    CostKind::NormalizedQueue
}

fn default_unit() -> QueueUnit {
    QueueUnit::Bits
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum TopologySection {
    /// Every link has the same path gain.
    Uniform {
        #[serde(default = "one")]
        path_gain: f64,
    },
    /// Hexagonal cluster with randomly dropped users.
    Hex {
        #[serde(default)]
        layout: MacroLayout,
        #[serde(default = "one_u64")]
        placement_seed: u64,
    },
    /// Explicit linear gains in link order.
    Explicit { path_loss: Vec<f64> },
}

impl Default for TopologySection {
    fn default() -> Self {
        TopologySection::Uniform { path_gain: 1.0 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "catalog", deny_unknown_fields)]
pub enum PatternSection {
    /// All nonempty patterns when there are at most six BSs.
    #[default]
    Auto,
    AllNonempty,
    SingleMuting,
    /// Activity strings, BS 1 first, e.g. `"101"`.
    Explicit { patterns: Vec<String> },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    #[default]
    Proposed,
    Oracle,
    CsitOnly,
    Backpressure,
    Timescale,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 5] = [
        PolicyKind::Proposed,
        PolicyKind::Oracle,
        PolicyKind::CsitOnly,
        PolicyKind::Backpressure,
        PolicyKind::Timescale,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::Proposed => "proposed",
            PolicyKind::Oracle => "oracle",
            PolicyKind::CsitOnly => "csit_only",
            PolicyKind::Backpressure => "backpressure",
            PolicyKind::Timescale => "timescale",
        }
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PolicyKind::ALL
            .into_iter()
            .find(|p| p.name() == s.replace('-', "_"))
            .ok_or_else(|| Error::config(format!("unknown policy '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// Dotted key varied across the grid, e.g. `system.power_dbm`.
    pub key: String,
    pub values: Vec<toml::Value>,
    #[serde(default = "one_usize")]
    pub replicates: usize,
}

fn one_usize() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemSection,
    #[serde(default)]
    pub topology: TopologySection,
    pub channel: FadingDist,
    pub arrivals: ArrivalDist,
    #[serde(default)]
    pub patterns: PatternSection,
    #[serde(default)]
    pub run: RunSpec,
    #[serde(default)]
    pub policy: PolicyKind,
    #[serde(default)]
    pub proposed: ProposedConfig,
    #[serde(default)]
    pub oracle: OracleOptions,
    #[serde(default)]
    pub timescale: TimescaleConfig,
    pub sweep: Option<SweepSection>,
}

/// A parsed experiment together with the raw table it came from, so
/// overrides and sweeps can be re-applied.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub config: ExperimentConfig,
    raw: toml::Table,
}

impl Experiment {
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        let mut raw: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
        for o in overrides {
            let (key, value) = split_override(o)?;
            set_dotted(&mut raw, key, parse_literal(value))?;
        }
        Self::from_table(raw)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, overrides)
    }

    fn from_table(raw: toml::Table) -> Result<Self> {
        let config: ExperimentConfig = toml::Value::Table(raw.clone())
            .try_into()
            .map_err(|e: toml::de::Error| Error::config(e.message().to_string()))?;
        config.run.validate()?;
        config.proposed.validate()?;
        Ok(Experiment { config, raw })
    }

    pub fn with_value(&self, key: &str, value: toml::Value) -> Result<Self> {
        let mut raw = self.raw.clone();
        set_dotted(&mut raw, key, value)?;
        Self::from_table(raw)
    }

    pub fn with_policy(&self, policy: PolicyKind) -> Result<Self> {
        self.with_value("policy", toml::Value::String(policy.name().into()))
    }

    /// One experiment per sweep value, or an error without a sweep section.
    pub fn sweep_points(&self) -> Result<Vec<(toml::Value, Experiment)>> {
        let sweep = self
            .config
            .sweep
            .as_ref()
            .ok_or_else(|| Error::config("no [sweep] section"))?;
        if sweep.values.is_empty() {
            return Err(Error::config("sweep grid is empty"));
        }
        sweep
            .values
            .iter()
            .map(|v| Ok((v.clone(), self.with_value(&sweep.key, v.clone())?)))
            .collect()
    }

    /// Runs the `[sweep]` grid with `kind`, building each point's policy
    /// from that point's configuration. Values must be numeric.
    pub fn run_sweep(&self, kind: PolicyKind) -> Result<Vec<SweepRow>> {
        let replicates = self.config.sweep.as_ref().map_or(1, |s| s.replicates);
        let experiments = self.sweep_points()?;
        let points = experiments
            .iter()
            .map(|(v, e)| {
                let value = v
                    .as_float()
                    .or_else(|| v.as_integer().map(|i| i as f64))
                    .ok_or_else(|| Error::config(format!("sweep value {v} is not a number")))?;
                Ok(SweepPoint {
                    value,
                    scenario: e.scenario()?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let run_spec = RunSpec {
            checkpoints: Vec::new(),
            trace: false,
            ..self.config.run.clone()
        };
        sweep(&points, replicates, &run_spec, self.config.run.seed, |i, scenario, seed| {
            experiments[i].1.config.build_policy(kind, scenario, seed)
        })
    }

    /// Validated TOML text of the effective configuration.
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(&self.raw).unwrap_or_default()
    }

    pub fn scenario(&self) -> Result<Scenario> {
        self.config.scenario()
    }

    pub fn build_policy(&self, scenario: &Scenario, seed: u64) -> Result<Box<dyn SlotPolicy>> {
        self.config.build_policy(self.config.policy, scenario, seed)
    }
}

fn split_override(s: &str) -> Result<(&str, &str)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::config(format!("override '{s}' is not of the form key=value")))?;
    let k = k.trim();
    if k.is_empty() {
        return Err(Error::config(format!("override '{s}' has an empty key")));
    }
    Ok((k, v.trim()))
}

/// A TOML literal if `s` parses as one, otherwise the string itself.
pub fn parse_literal(s: &str) -> toml::Value {
    format!("v = {s}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(s.to_string()))
}

fn set_dotted(root: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    let mut table = root;
    for part in &parts[..parts.len() - 1] {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::config(format!("'{part}' in '{key}' is not a section")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

impl ExperimentConfig {
    pub fn system_config(&self) -> Result<SystemConfig> {
        let s = &self.system;
        let noise_psd = match (s.noise_psd, s.noise_psd_dbm_hz) {
            (Some(_), Some(_)) => return Err(Error::config("give noise_psd or noise_psd_dbm_hz, not both")),
            (Some(x), None) => x,
            (None, Some(dbm)) => dbm_to_watts(dbm),
            (None, None) => 1.0,
        };
        let power = match (s.power_w, s.power_dbm) {
            (Some(_), Some(_)) => return Err(Error::config("give power_w or power_dbm, not both")),
            (Some(w), None) => w,
            (None, Some(dbm)) => dbm_to_watts(dbm),
            (None, None) => 1.0,
        };
        let users = s.num_bs * s.users_per_bs;
        let links = s.num_bs * users;
        let path_loss = match &self.topology {
            TopologySection::Uniform { path_gain } => vec![*path_gain; links],
            TopologySection::Hex { layout, placement_seed } => {
                let mut rng = stream(*placement_seed, Stream::Placement);
                layout.place(s.num_bs, s.users_per_bs, &mut rng)?.path_loss
            }
            TopologySection::Explicit { path_loss } => path_loss.clone(),
        };
        let cfg = SystemConfig {
            num_bs: s.num_bs,
            users_per_bs: s.users_per_bs,
            slot_len: s.slot_len,
            bandwidth: s.bandwidth,
            noise_psd,
            coding_gap: s.coding_gap,
            max_power: vec![power; s.num_bs],
            path_loss,
            buffer_size: s.buffer_size,
            cost_weights: s.cost_weights.clone().unwrap_or_else(|| vec![1.0; users]),
            cost_kind: s.cost,
            queue_unit: s.queue_unit,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn pattern_set(&self) -> Result<PatternSet> {
        let m = self.system.num_bs;
        match &self.patterns {
            PatternSection::Auto if m <= 6 => PatternSet::all_nonempty(m),
            PatternSection::Auto => Err(Error::config(
                "more than six BSs: choose [patterns] catalog = \"single_muting\", \"all_nonempty\" or \"explicit\"",
            )),
            PatternSection::AllNonempty => PatternSet::all_nonempty(m),
            PatternSection::SingleMuting => PatternSet::single_muting(m),
            PatternSection::Explicit { patterns } => {
                let parsed = patterns
                    .iter()
                    .map(|p| p.parse::<IciPattern>())
                    .collect::<Result<Vec<_>>>()?;
                PatternSet::new(parsed, m)
            }
        }
    }

    pub fn scenario(&self) -> Result<Scenario> {
        let cfg = self.system_config()?;
        let channel = ChannelModel::new(self.channel.clone(), &cfg)?;
        let arrivals = ArrivalModel::uniform(self.arrivals, &cfg)?;
        Scenario::new(cfg, self.pattern_set()?, channel, arrivals)
    }

    pub fn build_policy(&self, kind: PolicyKind, scenario: &Scenario, seed: u64) -> Result<Box<dyn SlotPolicy>> {
        let cfg = &scenario.cfg;
        Ok(match kind {
            PolicyKind::Proposed => Box::new(DistributedController::new(scenario, self.proposed.clone(), seed)?),
            PolicyKind::Oracle => Box::new(OraclePolicy::solve(scenario, &self.oracle)?.0),
            PolicyKind::CsitOnly => Box::new(CsitOnlyPolicy::new(cfg, ReusePlan::reuse3(cfg.num_bs))?),
            PolicyKind::Backpressure => Box::new(BackpressurePolicy::new(cfg, ReusePlan::reuse3(cfg.num_bs))?),
            PolicyKind::Timescale => Box::new(TimescaleDecomp::new(cfg, &scenario.patterns, self.timescale)?),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"
[system]
num_bs = 2
users_per_bs = 2
buffer_size = 3

[channel]
kind = "discrete"
levels = [[7.0, 0.5], [1.0, 0.5]]

[arrivals]
kind = "bernoulli"
rate = 0.3

[run]
horizon = 1000
warmup = 100
"#;

    #[test]
    fn minimal_file_parses_with_defaults() {
        let e = Experiment::parse(SMALL, &[]).unwrap();
        let sc = e.scenario().unwrap();
        assert_eq!(sc.patterns.len(), 3);
        assert_eq!(e.config.policy, PolicyKind::Proposed);
        assert_eq!(e.config.run.horizon, 1000);
        assert!(sc.is_discrete_bits());
    }

    #[test]
    fn overrides_are_typed() {
        let e = Experiment::parse(SMALL, &["arrivals.rate=0.1".into(), "policy=backpressure".into()]).unwrap();
        assert_eq!(e.config.arrivals, ArrivalDist::Bernoulli { rate: 0.1 });
        assert_eq!(e.config.policy, PolicyKind::Backpressure);
        assert!(Experiment::parse(SMALL, &["system.num_bs=two".into()]).is_err());
        assert!(Experiment::parse(SMALL, &["system.bogus=1".into()]).is_err());
        assert!(Experiment::parse(SMALL, &["novalue".into()]).is_err());
    }

    #[test]
    fn sweep_points_apply_each_value() {
        let text = format!("{SMALL}\n[sweep]\nkey = \"arrivals.rate\"\nvalues = [0.1, 0.2]\n");
        let e = Experiment::parse(&text, &[]).unwrap();
        let pts = e.sweep_points().unwrap();
        assert_eq!(pts.len(), 2);
        assert_eq!(pts[1].1.config.arrivals, ArrivalDist::Bernoulli { rate: 0.2 });
    }

    #[test]
    fn power_in_dbm() {
        let e = Experiment::parse(SMALL, &["system.power_dbm=30".into()]).unwrap();
        let cfg = e.config.system_config().unwrap();
        assert!((cfg.max_power[0] - 1.0).abs() < 1e-12);
        let e = Experiment::parse(SMALL, &["system.power_dbm=30".into(), "system.power_w=2".into()]).unwrap();
        assert!(e.config.system_config().is_err());
    }
}
