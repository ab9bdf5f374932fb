//! Block fading and the achievable-rate model.
//!
//! Fading gains are i.i.d. across slots and links. For a user `(m, k)` served
//! by an active BS `m` under pattern `p` the rate is
//!
//! ```text
//! R = W log2(1 + ξ P_m h^m L^m / (Σ_{n≠m, n∈p} P_n h^n L^n + N0 W))
//! ```
//!
//! and the deliverable amount in one slot is `floor(R τ)` bits.
//!
//! A [`BandPlan`] generalizes this to orthogonal sub-bands (frequency reuse):
//! with `c` bands each BS uses `W / c`, sees noise `N0 W / c`, and is only
//! interfered by active BSs on its own band. A single band is exactly the
//! shared-channel model above.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CsiState, IciPattern, QsiState, ScheduleAction, SystemConfig};

/// Marginal distribution of one link's power gain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FadingDist {
    /// Finite support: `(gain, probability)` pairs.
    Discrete { levels: Vec<(f64, f64)> },
    /// Exponentially distributed power gain (Rayleigh amplitude).
    Rayleigh { mean_gain: f64 },
}

impl FadingDist {
    fn validate(&self) -> Result<()> {
        match self {
            FadingDist::Discrete { levels } => {
                if levels.is_empty() {
                    return Err(Error::config("discrete fading needs at least one level"));
                }
                if levels.iter().any(|&(g, p)| !(g >= 0.0 && g.is_finite()) || !(0.0..=1.0).contains(&p)) {
                    return Err(Error::config("fading levels need gains ≥ 0 and probabilities in [0, 1]"));
                }
                let total: f64 = levels.iter().map(|l| l.1).sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(Error::config(format!(
                        "fading level probabilities sum to {total}, expected 1"
                    )));
                }
            }
            FadingDist::Rayleigh { mean_gain } => {
                if !(*mean_gain > 0.0 && mean_gain.is_finite()) {
                    return Err(Error::config("rayleigh mean gain must be positive"));
                }
            }
        }
        Ok(())
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            FadingDist::Discrete { levels } => {
                if levels.len() == 1 {
                    return levels[0].0;
                }
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for &(g, p) in levels {
                    acc += p;
                    if u < acc {
                        return g;
                    }
                }
                levels[levels.len() - 1].0
            }
            FadingDist::Rayleigh { mean_gain } => {
                Exp::new(1.0 / mean_gain).expect("validated").sample(rng)
            }
        }
    }

    fn levels(&self) -> Option<&[(f64, f64)]> {
        match self {
            FadingDist::Discrete { levels } => Some(levels),
            FadingDist::Rayleigh { .. } => None,
        }
    }
}

/// Fading model for every link: a default distribution plus per-link overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelModel {
    default: FadingDist,
    overrides: BTreeMap<usize, FadingDist>,
    num_links: usize,
}

impl ChannelModel {
    pub fn new(default: FadingDist, cfg: &SystemConfig) -> Result<Self> {
        default.validate()?;
        Ok(ChannelModel {
            default,
            overrides: BTreeMap::new(),
            num_links: cfg.num_links(),
        })
    }

    pub fn with_override(mut self, link: usize, dist: FadingDist) -> Result<Self> {
        if link >= self.num_links {
            return Err(Error::config(format!("override link {link} out of range")));
        }
        dist.validate()?;
        self.overrides.insert(link, dist);
        Ok(self)
    }

    pub fn dist(&self, link: usize) -> &FadingDist {
        self.overrides.get(&link).unwrap_or(&self.default)
    }

    pub fn num_links(&self) -> usize {
        self.num_links
    }

    pub fn is_discrete(&self) -> bool {
        (0..self.num_links).all(|l| self.dist(l).levels().is_some())
    }

    /// Number of global CSI states, if finite and representable.
    pub fn global_state_count(&self) -> Option<u128> {
        (0..self.num_links).try_fold(1u128, |acc, l| {
            let n = self.dist(l).levels()?.len() as u128;
            acc.checked_mul(n)
        })
    }

    /// Enumerates the global CSI states with their probabilities.
    ///
    /// State `i` uses the mixed-radix digits of `i` as level indices, link 0
    /// least significant; [`ChannelModel::discrete_index`] inverts this.
    pub fn global_states(&self, limit: usize) -> Result<Vec<(CsiState, f64)>> {
        let count = self
            .global_state_count()
            .ok_or_else(|| Error::Unsupported("CSI enumeration needs discrete fading".into()))?;
        if count > limit as u128 {
            return Err(Error::Unsupported(format!(
                "{count} global CSI states exceed the limit of {limit}"
            )));
        }
        let levels: Vec<&[(f64, f64)]> = (0..self.num_links)
            .map(|l| self.dist(l).levels().expect("discrete"))
            .collect();
        let mut out = Vec::with_capacity(count as usize);
        let mut digits = vec![0usize; self.num_links];
        for _ in 0..count {
            let mut prob = 1.0;
            let h = digits
                .iter()
                .zip(&levels)
                .map(|(&d, lv)| {
                    prob *= lv[d].1;
                    lv[d].0
                })
                .collect();
            out.push((CsiState::from_raw(h), prob));
            for (d, lv) in digits.iter_mut().zip(&levels) {
                *d += 1;
                if *d < lv.len() {
                    break;
                }
                *d = 0;
            }
        }
        Ok(out)
    }

    /// Index of `csi` in [`ChannelModel::global_states`] order.
    pub fn discrete_index(&self, csi: &CsiState) -> Option<usize> {
        let mut index = 0usize;
        let mut stride = 1usize;
        for l in 0..self.num_links {
            let levels = self.dist(l).levels()?;
            let d = levels.iter().position(|&(g, _)| g == csi.gain(l))?;
            index += d * stride;
            stride *= levels.len();
        }
        Some(index)
    }

    /// Joint distribution of the `M` gains seen by user `(m, k)`:
    /// `(gains indexed by transmitting BS n, probability)`.
    pub fn local_states(&self, cfg: &SystemConfig, m: usize, k: usize) -> Result<Vec<(Vec<f64>, f64)>> {
        let levels = (0..cfg.num_bs)
            .map(|n| {
                self.dist(cfg.link(n, m, k))
                    .levels()
                    .ok_or_else(|| Error::Unsupported("local CSI enumeration needs discrete fading".into()))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut out: Vec<(Vec<f64>, f64)> = vec![(Vec::with_capacity(cfg.num_bs), 1.0)];
        for lv in levels {
            out = out
                .into_iter()
                .flat_map(|(g, p)| {
                    lv.iter().map(move |&(gain, q)| {
                        let mut g2 = g.clone();
                        g2.push(gain);
                        (g2, p * q)
                    })
                })
                .collect();
        }
        Ok(out)
    }

    /// Mean of the gain distribution on `link`.
    pub fn mean_gain(&self, link: usize) -> f64 {
        match self.dist(link) {
            FadingDist::Discrete { levels } => levels.iter().map(|(g, p)| g * p).sum(),
            FadingDist::Rayleigh { mean_gain } => *mean_gain,
        }
    }
}

/// Draws one slot of global CSI; every link independent.
pub fn sample_csi<R: Rng + ?Sized>(model: &ChannelModel, rng: &mut R) -> CsiState {
    CsiState::from_raw((0..model.num_links).map(|l| model.dist(l).sample(rng)).collect())
}

/// In-place variant of [`sample_csi`] that reuses the buffer.
pub fn resample_csi<R: Rng + ?Sized>(model: &ChannelModel, rng: &mut R, csi: &mut CsiState) {
    for (l, h) in csi.as_mut_slice().iter_mut().enumerate() {
        *h = model.dist(l).sample(rng);
    }
}

/// Assignment of BSs to orthogonal sub-bands.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BandPlan {
    band: Vec<usize>,
    num_bands: usize,
}

impl BandPlan {
    /// Every BS on the full channel.
    pub fn shared(num_bs: usize) -> Self {
        BandPlan {
            band: vec![0; num_bs],
            num_bands: 1,
        }
    }

    pub fn new(band: Vec<usize>, num_bands: usize) -> Result<Self> {
        if num_bands == 0 || band.iter().any(|&b| b >= num_bands) {
            return Err(Error::config("band assignment out of range"));
        }
        Ok(BandPlan { band, num_bands })
    }

    #[inline]
    pub fn band_of(&self, m: usize) -> usize {
        self.band[m]
    }

    pub fn num_bands(&self) -> usize {
        self.num_bands
    }

    pub fn is_shared(&self) -> bool {
        self.num_bands == 1
    }
}

/// Per-user rate quantities for one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    /// Achievable rate in bits/s.
    pub rate: Vec<f64>,
    /// Received signal power φ in W.
    pub signal: Vec<f64>,
    /// Interference plus noise power in W.
    pub interference_plus_noise: Vec<f64>,
    /// `floor(rate · τ)` bits.
    pub deliverable: Vec<u64>,
}

impl RateReport {
    fn zeros(users: usize) -> Self {
        RateReport {
            rate: vec![0.0; users],
            signal: vec![0.0; users],
            interference_plus_noise: vec![0.0; users],
            deliverable: vec![0; users],
        }
    }
}

/// Signal and interference-plus-noise power seen by user `(m, k)` when BS
/// `m` serves it under `p` and `band`.
pub fn link_budget(
    cfg: &SystemConfig,
    csi: &CsiState,
    p: &IciPattern,
    band: &BandPlan,
    m: usize,
    k: usize,
) -> (f64, f64) {
    budget_from_gains(cfg, p, band, m, k, |n| csi.gain(cfg.link(n, m, k)))
}

/// [`link_budget`] with the small-scale gain from BS `n` supplied by `gain`.
pub(crate) fn budget_from_gains(
    cfg: &SystemConfig,
    p: &IciPattern,
    band: &BandPlan,
    m: usize,
    k: usize,
    gain: impl Fn(usize) -> f64,
) -> (f64, f64) {
    let own = cfg.link(m, m, k);
    let signal = cfg.max_power[m] * gain(m) * cfg.path_loss[own];
    let my_band = band.band_of(m);
    let interference: f64 = p
        .active()
        .filter(|&n| n != m && band.band_of(n) == my_band)
        .map(|n| cfg.max_power[n] * gain(n) * cfg.path_loss[cfg.link(n, m, k)])
        .sum();
    let noise = cfg.noise_power() / band.num_bands() as f64;
    (signal, interference + noise)
}

/// Rate in bits/s from a link budget, for a BS using `W / bands`.
#[inline]
pub fn shannon_rate(cfg: &SystemConfig, signal: f64, interference_plus_noise: f64, bands: usize) -> f64 {
    let w = cfg.bandwidth / bands as f64;
    w * (1.0 + cfg.coding_gap * signal / interference_plus_noise).log2()
}

#[inline]
pub fn deliverable_bits(cfg: &SystemConfig, rate: f64) -> u64 {
    (rate * cfg.slot_len).floor() as u64
}

/// Rates every user would get if its BS scheduled it under `p`. Users of
/// inactive BSs get zero.
pub fn candidate_rates(cfg: &SystemConfig, csi: &CsiState, p: &IciPattern, band: &BandPlan) -> RateReport {
    let mut report = RateReport::zeros(cfg.num_users());
    fill_candidates(cfg, csi, p, band, &mut report);
    report
}

pub(crate) fn fill_candidates(
    cfg: &SystemConfig,
    csi: &CsiState,
    p: &IciPattern,
    band: &BandPlan,
    report: &mut RateReport,
) {
    let k_per = cfg.users_per_bs;
    for m in 0..cfg.num_bs {
        for k in 0..k_per {
            let u = m * k_per + k;
            if p.is_active(m) {
                let (sig, ipn) = link_budget(cfg, csi, p, band, m, k);
                let r = shannon_rate(cfg, sig, ipn, band.num_bands());
                report.rate[u] = r;
                report.signal[u] = sig;
                report.interference_plus_noise[u] = ipn;
                report.deliverable[u] = deliverable_bits(cfg, r);
            } else {
                report.rate[u] = 0.0;
                report.signal[u] = 0.0;
                report.interference_plus_noise[u] = 0.0;
                report.deliverable[u] = 0;
            }
        }
    }
}

/// Rates under a concrete pattern and schedule on the shared channel:
/// scheduled users at active BSs get their rate, everyone else zero.
pub fn compute_rates(
    cfg: &SystemConfig,
    csi: &CsiState,
    p: &IciPattern,
    s: &ScheduleAction,
    q: &QsiState,
) -> Result<RateReport> {
    compute_rates_in_band(cfg, csi, p, s, q, &BandPlan::shared(cfg.num_bs))
}

pub fn compute_rates_in_band(
    cfg: &SystemConfig,
    csi: &CsiState,
    p: &IciPattern,
    s: &ScheduleAction,
    q: &QsiState,
    band: &BandPlan,
) -> Result<RateReport> {
    if let Err(v) = crate::model::validate_action(p, s, q) {
        let msg = v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ");
        return Err(Error::InvalidAction(msg));
    }
    let mut report = candidate_rates(cfg, csi, p, band);
    for u in 0..cfg.num_users() {
        if !s.is_scheduled(u) {
            report.rate[u] = 0.0;
            report.deliverable[u] = 0;
        }
    }
    Ok(report)
}
