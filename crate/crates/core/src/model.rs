//! Shared domain types: system configuration, queue and channel state,
//! interference patterns and scheduling actions.
//!
//! Users are addressed either as `(m, k)` (BS `m`, user `k` of that cell) or
//! by the flat index `m * K + k`. Links are addressed as `(n, m, k)`: the link
//! from BS `n` to user `(m, k)`, flat index `n * M * K + m * K + k`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-user cost function `f(q)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostKind {
    /// `f(q) = q / λ`; with Little's law this approximates the delay.
    NormalizedQueue,
    /// `f(q) = 1{q ≥ N_Q}`.
    OverflowIndicator,
    /// `f ≡ 0`. Only useful as a diagnostic control.
    Zero,
}

/// Granularity of the queue grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum QueueUnit {
    /// Queues count bits; service is `floor(R τ)`.
    Bits,
    /// Queues count packets with exponentially distributed sizes.
    Packets { mean_packet_bits: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    pub num_bs: usize,
    pub users_per_bs: usize,
    /// Slot length τ in seconds.
    pub slot_len: f64,
    /// Bandwidth W in Hz.
    pub bandwidth: f64,
    /// Noise power spectral density N0 in W/Hz.
    pub noise_psd: f64,
    /// ξ ∈ (0, 1].
    pub coding_gap: f64,
    /// Transmit power per BS in W.
    pub max_power: Vec<f64>,
    /// Linear path gain, indexed by link.
    pub path_loss: Vec<f64>,
    /// N_Q, in queue units.
    pub buffer_size: u64,
    /// β per user.
    pub cost_weights: Vec<f64>,
    pub cost_kind: CostKind,
    pub queue_unit: QueueUnit,
}

impl SystemConfig {
    /// A symmetric configuration with unit path gains and unit weights.
    pub fn uniform(num_bs: usize, users_per_bs: usize, buffer_size: u64) -> Self {
        let users = num_bs * users_per_bs;
        SystemConfig {
            num_bs,
            users_per_bs,
            slot_len: 1.0,
            bandwidth: 1.0,
            noise_psd: 1.0,
            coding_gap: 1.0,
            max_power: vec![1.0; num_bs],
            path_loss: vec![1.0; num_bs * users],
            buffer_size,
            cost_weights: vec![1.0; users],
            cost_kind: CostKind::NormalizedQueue,
            queue_unit: QueueUnit::Bits,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_bs == 0 {
            return Err(Error::config("num_bs must be at least 1"));
        }
        if self.num_bs > 64 {
            return Err(Error::config("at most 64 base stations are supported"));
        }
        if self.users_per_bs == 0 {
            return Err(Error::config("users_per_bs must be at least 1"));
        }
        if !(self.slot_len > 0.0 && self.slot_len.is_finite()) {
            return Err(Error::config("slot_len must be positive"));
        }
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            return Err(Error::config("bandwidth must be positive"));
        }
        if !(self.noise_psd >= 0.0 && self.noise_psd.is_finite()) {
            return Err(Error::config("noise_psd must be nonnegative"));
        }
        if !(self.coding_gap > 0.0 && self.coding_gap <= 1.0) {
            return Err(Error::config("coding_gap must lie in (0, 1]"));
        }
        if self.max_power.len() != self.num_bs {
            return Err(Error::config(format!(
                "max_power has {} entries, expected {}",
                self.max_power.len(),
                self.num_bs
            )));
        }
        if self.max_power.iter().any(|p| !(*p >= 0.0 && p.is_finite())) {
            return Err(Error::config("max_power entries must be nonnegative"));
        }
        if self.path_loss.len() != self.num_links() {
            return Err(Error::config(format!(
                "path_loss has {} entries, expected {}",
                self.path_loss.len(),
                self.num_links()
            )));
        }
        if self.path_loss.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
            return Err(Error::config("path_loss entries must be nonnegative"));
        }
        if self.buffer_size < 1 {
            return Err(Error::config("buffer_size must be at least 1"));
        }
        if self.cost_weights.len() != self.num_users() {
            return Err(Error::config(format!(
                "cost_weights has {} entries, expected {}",
                self.cost_weights.len(),
                self.num_users()
            )));
        }
        if self.cost_weights.iter().any(|b| !(*b > 0.0 && b.is_finite())) {
            return Err(Error::config("cost_weights must be positive"));
        }
        if let QueueUnit::Packets { mean_packet_bits } = self.queue_unit {
            if !(mean_packet_bits > 0.0 && mean_packet_bits.is_finite()) {
                return Err(Error::config("mean_packet_bits must be positive"));
            }
        }
        if self.noise_psd == 0.0 {
            // Interference-free links with zero noise would have infinite rate.
            return Err(Error::config("noise_psd must be positive"));
        }
        Ok(())
    }

    #[inline]
    pub fn num_users(&self) -> usize {
        self.num_bs * self.users_per_bs
    }

    #[inline]
    pub fn num_links(&self) -> usize {
        self.num_bs * self.num_users()
    }

    #[inline]
    pub fn user(&self, m: usize, k: usize) -> usize {
        m * self.users_per_bs + k
    }

    #[inline]
    pub fn link(&self, n: usize, m: usize, k: usize) -> usize {
        n * self.num_users() + m * self.users_per_bs + k
    }

    /// Serving BS of a flat user index.
    #[inline]
    pub fn bs_of(&self, user: usize) -> usize {
        user / self.users_per_bs
    }

    #[inline]
    pub fn noise_power(&self) -> f64 {
        self.noise_psd * self.bandwidth
    }
}

/// Global QSI: one queue length per user, each in `0..=N_Q`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QsiState {
    q: Vec<u64>,
}

impl QsiState {
    pub fn new(q: Vec<u64>, cfg: &SystemConfig) -> Result<Self> {
        if q.len() != cfg.num_users() {
            return Err(Error::config(format!(
                "QSI has {} entries, expected {}",
                q.len(),
                cfg.num_users()
            )));
        }
        if let Some(bad) = q.iter().find(|&&x| x > cfg.buffer_size) {
            return Err(Error::config(format!(
                "queue length {bad} exceeds buffer size {}",
                cfg.buffer_size
            )));
        }
        Ok(QsiState { q })
    }

    pub fn empty(cfg: &SystemConfig) -> Self {
        QsiState {
            q: vec![0; cfg.num_users()],
        }
    }

    pub(crate) fn from_raw(q: Vec<u64>) -> Self {
        QsiState { q }
    }

    #[inline]
    pub fn get(&self, user: usize) -> u64 {
        self.q[user]
    }

    #[inline]
    pub fn as_slice(&self) -> &[u64] {
        &self.q
    }

    /// Queue lengths of the users of BS `m`.
    pub fn cell(&self, m: usize, users_per_bs: usize) -> &[u64] {
        &self.q[m * users_per_bs..(m + 1) * users_per_bs]
    }

    pub fn total(&self) -> u64 {
        self.q.iter().sum()
    }

    /// Component-wise `self ≥ other`.
    pub fn dominates(&self, other: &QsiState) -> bool {
        self.q.iter().zip(&other.q).all(|(a, b)| a >= b)
    }
}

/// Global CSI: small-scale power gain per link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsiState {
    h: Vec<f64>,
}

impl CsiState {
    pub fn new(h: Vec<f64>, cfg: &SystemConfig) -> Result<Self> {
        if h.len() != cfg.num_links() {
            return Err(Error::config(format!(
                "CSI has {} entries, expected {}",
                h.len(),
                cfg.num_links()
            )));
        }
        if h.iter().any(|g| !(*g >= 0.0 && g.is_finite())) {
            return Err(Error::config("fading gains must be nonnegative"));
        }
        Ok(CsiState { h })
    }

    pub(crate) fn from_raw(h: Vec<f64>) -> Self {
        CsiState { h }
    }

    #[inline]
    pub fn gain(&self, link: usize) -> f64 {
        self.h[link]
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.h
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.h
    }
}

/// Binary on/off vector over base stations, bit `m` set when BS `m` transmits.
///
/// The derived ordering compares the masks as integers, which is the
/// canonical catalog order: `{1,0} < {0,1} < {1,1}` for two BSs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IciPattern {
    mask: u64,
    num_bs: u8,
}

impl IciPattern {
    pub fn from_mask(mask: u64, num_bs: usize) -> Self {
        debug_assert!(num_bs <= 64);
        let valid = if num_bs == 64 {
            u64::MAX
        } else {
            (1u64 << num_bs) - 1
        };
        IciPattern {
            mask: mask & valid,
            num_bs: num_bs as u8,
        }
    }

    pub fn from_active(active: &[bool]) -> Self {
        let mask = active
            .iter()
            .enumerate()
            .filter(|(_, &a)| a)
            .fold(0u64, |acc, (m, _)| acc | (1 << m));
        IciPattern::from_mask(mask, active.len())
    }

    pub fn all_on(num_bs: usize) -> Self {
        IciPattern::from_mask(u64::MAX, num_bs)
    }

    pub fn all_off(num_bs: usize) -> Self {
        IciPattern::from_mask(0, num_bs)
    }

    #[inline]
    pub fn is_active(&self, m: usize) -> bool {
        self.mask >> m & 1 == 1
    }

    #[inline]
    pub fn mask(&self) -> u64 {
        self.mask
    }

    #[inline]
    pub fn num_bs(&self) -> usize {
        self.num_bs as usize
    }

    pub fn active_count(&self) -> usize {
        self.mask.count_ones() as usize
    }

    pub fn active(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.num_bs()).filter(move |&m| self.is_active(m))
    }
}

/// Renders as one `0`/`1` character per BS, BS 1 first.
impl fmt::Display for IciPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for m in 0..self.num_bs() {
            f.write_str(if self.is_active(m) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for IciPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let active = s
            .trim()
            .chars()
            .map(|c| match c {
                '1' => Ok(true),
                '0' => Ok(false),
                other => Err(Error::Parse(format!("bad pattern character {other:?} in {s:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        if active.is_empty() || active.len() > 64 {
            return Err(Error::Parse(format!("bad pattern length in {s:?}")));
        }
        Ok(IciPattern::from_active(&active))
    }
}

/// The admissible pattern catalog, in canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternSet {
    patterns: Vec<IciPattern>,
    activating: Vec<Vec<usize>>,
}

impl PatternSet {
    pub fn new(mut patterns: Vec<IciPattern>, num_bs: usize) -> Result<Self> {
        if patterns.is_empty() {
            return Err(Error::config("pattern catalog is empty"));
        }
        if let Some(p) = patterns.iter().find(|p| p.num_bs() != num_bs) {
            return Err(Error::config(format!(
                "pattern {p} has {} entries, expected {num_bs}",
                p.num_bs()
            )));
        }
        if let Some(p) = patterns.iter().find(|p| p.active_count() == 0) {
            return Err(Error::config(format!("pattern {p} activates no BS")));
        }
        patterns.sort();
        if let Some(w) = patterns.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::config(format!("duplicate pattern {}", w[0])));
        }
        let activating = (0..num_bs)
            .map(|m| {
                patterns
                    .iter()
                    .enumerate()
                    .filter(|(_, p)| p.is_active(m))
                    .map(|(i, _)| i)
                    .collect()
            })
            .collect();
        Ok(PatternSet {
            patterns,
            activating,
        })
    }

    /// Every nonempty pattern: `2^M - 1` entries.
    pub fn all_nonempty(num_bs: usize) -> Result<Self> {
        if num_bs > 16 {
            return Err(Error::config(format!(
                "refusing to enumerate 2^{num_bs} patterns; supply an explicit list"
            )));
        }
        let patterns = (1..(1u64 << num_bs))
            .map(|mask| IciPattern::from_mask(mask, num_bs))
            .collect();
        PatternSet::new(patterns, num_bs)
    }

    /// The all-on pattern plus every pattern muting exactly one BS.
    pub fn single_muting(num_bs: usize) -> Result<Self> {
        let mut patterns = vec![IciPattern::all_on(num_bs)];
        if num_bs > 1 {
            patterns.extend(
                (0..num_bs).map(|m| IciPattern::from_mask(!(1u64 << m), num_bs)),
            );
        }
        PatternSet::new(patterns, num_bs)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    #[inline]
    pub fn get(&self, index: usize) -> IciPattern {
        self.patterns[index]
    }

    pub fn patterns(&self) -> &[IciPattern] {
        &self.patterns
    }

    pub fn num_bs(&self) -> usize {
        self.activating.len()
    }

    pub fn index_of(&self, p: &IciPattern) -> Option<usize> {
        self.patterns.binary_search(p).ok()
    }

    /// Indices of the patterns that activate BS `m` (the set 𝓟_m).
    pub fn patterns_activating(&self, m: usize) -> &[usize] {
        &self.activating[m]
    }

    /// Reference pattern for BS `m`: the member of 𝓟_m with the fewest
    /// active BSs, ties broken by catalog index.
    pub fn reference_for(&self, m: usize) -> Result<usize> {
        self.activating[m]
            .iter()
            .copied()
            .min_by_key(|&i| (self.patterns[i].active_count(), i))
            .ok_or_else(|| Error::config(format!("no pattern in the catalog activates BS {}", m + 1)))
    }
}

/// Per-user scheduling indicators `s[m][k]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ScheduleAction {
    users_per_bs: usize,
    s: Vec<bool>,
}

impl ScheduleAction {
    pub fn none(num_bs: usize, users_per_bs: usize) -> Self {
        ScheduleAction {
            users_per_bs,
            s: vec![false; num_bs * users_per_bs],
        }
    }

    /// Builds an action from one optional user choice per BS.
    pub fn from_choices(choices: &[Option<usize>], users_per_bs: usize) -> Self {
        let mut action = ScheduleAction::none(choices.len(), users_per_bs);
        for (m, c) in choices.iter().enumerate() {
            if let Some(k) = c {
                action.s[m * users_per_bs + k] = true;
            }
        }
        action
    }

    /// Raw indicator constructor; no invariant is checked.
    pub fn from_indicators(s: Vec<bool>, users_per_bs: usize) -> Self {
        ScheduleAction { users_per_bs, s }
    }

    pub fn set(&mut self, m: usize, k: usize, on: bool) {
        self.s[m * self.users_per_bs + k] = on;
    }

    #[inline]
    pub fn is_scheduled(&self, user: usize) -> bool {
        self.s[user]
    }

    pub fn indicators(&self) -> &[bool] {
        &self.s
    }

    pub fn num_bs(&self) -> usize {
        self.s.len() / self.users_per_bs.max(1)
    }

    /// First scheduled user of BS `m`, if any.
    pub fn selected(&self, m: usize) -> Option<usize> {
        self.s[m * self.users_per_bs..(m + 1) * self.users_per_bs]
            .iter()
            .position(|&x| x)
    }
}

/// A broken [`ScheduleAction`] invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    Shape { expected: usize, found: usize },
    MultiUser { bs: usize, count: usize },
    BsInactive { bs: usize, user: usize },
    EmptyQueue { bs: usize, user: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Shape { expected, found } => {
                write!(f, "shape: expected {expected} indicators, found {found}")
            }
            Violation::MultiUser { bs, count } => {
                write!(f, "multi-user: BS {} schedules {count} users", bs + 1)
            }
            Violation::BsInactive { bs, user } => {
                write!(f, "BS inactive: BS {} schedules user {}", bs + 1, user + 1)
            }
            Violation::EmptyQueue { bs, user } => {
                write!(f, "empty queue: BS {} schedules user {}", bs + 1, user + 1)
            }
        }
    }
}

/// Checks every [`ScheduleAction`] invariant against the pattern and QSI and
/// returns all violations found.
pub fn validate_action(
    p: &IciPattern,
    s: &ScheduleAction,
    q: &QsiState,
) -> std::result::Result<(), Vec<Violation>> {
    let k_per = s.users_per_bs;
    let expected = p.num_bs() * k_per;
    if s.s.len() != expected || q.as_slice().len() != expected {
        return Err(vec![Violation::Shape {
            expected,
            found: s.s.len(),
        }]);
    }
    let mut violations = Vec::new();
    for m in 0..p.num_bs() {
        let cell = &s.s[m * k_per..(m + 1) * k_per];
        let count = cell.iter().filter(|&&x| x).count();
        if count > 1 {
            violations.push(Violation::MultiUser { bs: m, count });
        }
        for (k, _) in cell.iter().enumerate().filter(|(_, &x)| x) {
            if !p.is_active(m) {
                violations.push(Violation::BsInactive { bs: m, user: k });
            }
            if q.get(m * k_per + k) == 0 {
                violations.push(Violation::EmptyQueue { bs: m, user: k });
            }
        }
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

/// Per-user cost `β f(q)` and the per-slot network cost `g = Σ β f(q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostModel {
    kind: CostKind,
    weights: Vec<f64>,
    mean_arrivals: Vec<f64>,
    buffer_size: u64,
}

impl CostModel {
    /// `mean_arrivals` holds λ per user in queue units per slot.
    pub fn new(cfg: &SystemConfig, mean_arrivals: Vec<f64>) -> Result<Self> {
        if mean_arrivals.len() != cfg.num_users() {
            return Err(Error::config("mean arrival vector has the wrong length"));
        }
        if cfg.cost_kind == CostKind::NormalizedQueue {
            if let Some(u) = mean_arrivals.iter().position(|&l| !(l > 0.0)) {
                return Err(Error::config(format!(
                    "normalized-queue cost needs a positive arrival rate (user {} has λ = {})",
                    u + 1,
                    mean_arrivals[u]
                )));
            }
        }
        Ok(CostModel {
            kind: cfg.cost_kind,
            weights: cfg.cost_weights.clone(),
            mean_arrivals,
            buffer_size: cfg.buffer_size,
        })
    }

    pub fn kind(&self) -> CostKind {
        self.kind
    }

    /// Unweighted `f(q)` for `user`.
    pub fn f(&self, user: usize, q: u64) -> f64 {
        match self.kind {
            CostKind::NormalizedQueue => q as f64 / self.mean_arrivals[user],
            CostKind::OverflowIndicator => {
                if q >= self.buffer_size {
                    1.0
                } else {
                    0.0
                }
            }
            CostKind::Zero => 0.0,
        }
    }

    /// `β f(q)` for `user`.
    #[inline]
    pub fn weighted(&self, user: usize, q: u64) -> f64 {
        self.weights[user] * self.f(user, q)
    }

    pub fn weight(&self, user: usize) -> f64 {
        self.weights[user]
    }

    pub fn mean_arrival(&self, user: usize) -> f64 {
        self.mean_arrivals[user]
    }

    /// `β f(q)` for `q = 0..=N_Q`.
    pub fn user_table(&self, user: usize) -> Vec<f64> {
        (0..=self.buffer_size).map(|q| self.weighted(user, q)).collect()
    }

    pub fn per_slot_cost(&self, q: &QsiState) -> f64 {
        q.as_slice()
            .iter()
            .enumerate()
            .map(|(u, &x)| self.weighted(u, x))
            .sum()
    }
}

/// `Σ_{m,k} β f(q)`; see [`CostModel::per_slot_cost`].
pub fn per_slot_cost(q: &QsiState, cost: &CostModel) -> f64 {
    cost.per_slot_cost(q)
}
