//! Two-timescale control primitives: region-gated Q-information at the
//! controller, pattern selection, and per-BS user scheduling from learned
//! post-decision values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::{PerUserQTable, PerUserValueTable};
use crate::model::{IciPattern, PatternSet, QsiState, ScheduleAction};

/// Per-user partition of `0..=N_Q` into contiguous regions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QsiRegionPartition {
    /// Per user: first queue length of every region after the first.
    starts: Vec<Vec<u64>>,
    buffer_size: u64,
}

impl QsiRegionPartition {
    /// `regions` blocks of near-equal width, wider blocks first.
    pub fn uniform(num_users: usize, buffer_size: u64, regions: u64) -> Result<Self> {
        let states = buffer_size + 1;
        if regions == 0 || regions > states {
            return Err(Error::config(format!(
                "cannot split {states} queue states into {regions} regions"
            )));
        }
        let (base, extra) = (states / regions, states % regions);
        let mut starts = Vec::with_capacity(regions as usize - 1);
        let mut at = 0;
        for r in 0..regions - 1 {
            at += base + u64::from(r < extra);
            starts.push(at);
        }
        Ok(QsiRegionPartition {
            starts: vec![starts; num_users],
            buffer_size,
        })
    }

    /// Every queue length its own region; the controller then hears about
    /// every change.
    pub fn singletons(num_users: usize, buffer_size: u64) -> Self {
        QsiRegionPartition {
            starts: vec![(1..=buffer_size).collect(); num_users],
            buffer_size,
        }
    }

    /// Explicit region start points per user (`0` implied).
    pub fn from_starts(starts: Vec<Vec<u64>>, buffer_size: u64) -> Result<Self> {
        for s in &starts {
            if s.windows(2).any(|w| w[0] >= w[1]) || s.iter().any(|&x| x == 0 || x > buffer_size) {
                return Err(Error::config(
                    "region starts must be strictly increasing within 1..=N_Q",
                ));
            }
        }
        Ok(QsiRegionPartition { starts, buffer_size })
    }

    pub fn num_regions(&self, user: usize) -> usize {
        self.starts[user].len() + 1
    }

    #[inline]
    pub fn region_of(&self, user: usize, q: u64) -> usize {
        self.starts[user].partition_point(|&s| s <= q)
    }

    /// Queue lengths in region `r` of `user`.
    pub fn members(&self, user: usize, r: usize) -> std::ops::RangeInclusive<u64> {
        let s = &self.starts[user];
        let lo = if r == 0 { 0 } else { s[r - 1] };
        let hi = s.get(r).map_or(self.buffer_size, |&x| x - 1);
        lo..=hi
    }

    pub fn num_users(&self) -> usize {
        self.starts.len()
    }
}

/// The controller's cached per-BS pattern costs `ℚ_m(p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BscQInfo {
    cache: Vec<Vec<f64>>,
    last_region: Vec<Option<Vec<usize>>>,
    messages: Vec<u64>,
}

impl BscQInfo {
    pub fn new(num_bs: usize, num_patterns: usize) -> Self {
        BscQInfo {
            cache: vec![vec![0.0; num_patterns]; num_bs],
            last_region: vec![None; num_bs],
            messages: vec![0; num_bs],
        }
    }

    /// Overwrites BS `m`'s cached costs, as a test hook.
    pub fn set_cache(&mut self, m: usize, values: Vec<f64>) {
        self.cache[m] = values;
    }

    pub fn cache(&self, m: usize) -> &[f64] {
        &self.cache[m]
    }

    pub fn messages(&self) -> &[u64] {
        &self.messages
    }

    pub fn total(&self, p: usize) -> f64 {
        self.cache.iter().map(|c| c[p]).sum()
    }
}

/// Catalog index minimizing `Σ_m ℚ_m(p)`; ties go to the lowest index.
pub fn select_pattern(info: &BscQInfo, patterns: &PatternSet) -> Result<usize> {
    if patterns.is_empty() {
        return Err(Error::config("pattern catalog is empty"));
    }
    let mut best = (f64::INFINITY, 0);
    for p in 0..patterns.len() {
        let v = info.total(p);
        if v < best.0 {
            best = (v, p);
        }
    }
    Ok(best.1)
}

/// Refreshes BS `m`'s entry if its region changed. `tables` are the
/// Q-tables of BS `m`'s users in order; `first_user` is the flat index of
/// the first. Returns whether a message was sent.
pub fn refresh_qinfo(
    info: &mut BscQInfo,
    m: usize,
    q_cell: &[u64],
    first_user: usize,
    partition: &QsiRegionPartition,
    tables: &[&PerUserQTable],
) -> bool {
    let region: Vec<usize> = q_cell
        .iter()
        .enumerate()
        .map(|(k, &q)| partition.region_of(first_user + k, q))
        .collect();
    if info.last_region[m].as_ref() == Some(&region) {
        return false;
    }
    for (p, c) in info.cache[m].iter_mut().enumerate() {
        *c = tables.iter().zip(q_cell).map(|(t, &q)| t.get(q, p)).sum();
    }
    info.last_region[m] = Some(region);
    info.messages[m] += 1;
    true
}

/// Score `δ = Ṽ(q) - Ṽ((q - u)^+)` and candidate service per user.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaReport {
    pub delta: Vec<f64>,
    pub units: Vec<u64>,
}

pub fn delta_report(values: &[PerUserValueTable], q: &QsiState, units: &[u64]) -> DeltaReport {
    let delta = values
        .iter()
        .enumerate()
        .map(|(u, v)| {
            let x = q.get(u);
            if x == 0 {
                0.0
            } else {
                v.get(x) - v.get(x.saturating_sub(units[u]))
            }
        })
        .collect();
    DeltaReport {
        delta,
        units: units.to_vec(),
    }
}

/// Per active BS, the user with data maximizing `δ`; ties to the lowest
/// index. Inactive BSs and BSs with only empty queues schedule nobody.
pub fn schedule_users(
    p: &IciPattern,
    values: &[PerUserValueTable],
    q: &QsiState,
    units: &[u64],
    users_per_bs: usize,
) -> ScheduleAction {
    let report = delta_report(values, q, units);
    schedule_from_delta(p, &report.delta, q, users_per_bs)
}

pub fn schedule_from_delta(p: &IciPattern, delta: &[f64], q: &QsiState, users_per_bs: usize) -> ScheduleAction {
    let choices: Vec<Option<usize>> = (0..p.num_bs())
        .map(|m| {
            if !p.is_active(m) {
                return None;
            }
            let mut best: Option<(usize, f64)> = None;
            for k in 0..users_per_bs {
                let u = m * users_per_bs + k;
                if q.get(u) == 0 {
                    continue;
                }
                if best.is_none_or(|(_, d)| delta[u] > d) {
                    best = Some((k, delta[u]));
                }
            }
            best.map(|b| b.0)
        })
        .collect();
    ScheduleAction::from_choices(&choices, users_per_bs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SystemConfig;

    #[test]
    fn uniform_partition_matches_four_block_split() {
        let part = QsiRegionPartition::uniform(2, 9, 4).unwrap();
        let members: Vec<Vec<u64>> = (0..4).map(|r| part.members(0, r).collect()).collect();
        assert_eq!(members, vec![vec![0, 1, 2], vec![3, 4, 5], vec![6, 7], vec![8, 9]]);
        for q in 0..=9 {
            assert!(part.members(0, part.region_of(0, q)).contains(&q));
        }
    }

    #[test]
    fn region_change_triggers_refresh() {
        let part = QsiRegionPartition::uniform(2, 9, 4).unwrap();
        let t = PerUserQTable::zeros(9, 3, 0);
        let tables = vec![&t, &t];
        let mut info = BscQInfo::new(1, 3);
        assert!(refresh_qinfo(&mut info, 0, &[2, 5], 0, &part, &tables));
        assert!(!refresh_qinfo(&mut info, 0, &[2, 5], 0, &part, &tables));
        assert!(refresh_qinfo(&mut info, 0, &[3, 5], 0, &part, &tables));
        assert_eq!(info.messages(), &[2]);

        let mut info = BscQInfo::new(1, 3);
        refresh_qinfo(&mut info, 0, &[0, 0], 0, &part, &tables);
        assert!(!refresh_qinfo(&mut info, 0, &[2, 1], 0, &part, &tables));
    }

    #[test]
    fn pattern_argmin_and_ties() {
        let pats = PatternSet::all_nonempty(2).unwrap();
        let mut info = BscQInfo::new(2, 3);
        assert_eq!(select_pattern(&info, &pats).unwrap(), 0);
        info.set_cache(0, vec![2.0, 1.0, 3.0]);
        info.set_cache(1, vec![3.0, 2.0, 4.0]);
        assert_eq!(select_pattern(&info, &pats).unwrap(), 1);
    }

    #[test]
    fn scheduling_follows_delta() {
        let cfg = SystemConfig::uniform(1, 2, 5);
        let p = IciPattern::all_on(1);
        let q = QsiState::new(vec![3, 3], &cfg).unwrap();
        let a = schedule_from_delta(&p, &[0.7, 0.3], &q, 2);
        assert_eq!(a.selected(0), Some(0));
        let a = schedule_from_delta(&p, &[0.3, 0.7], &q, 2);
        assert_eq!(a.selected(0), Some(1));
        let empty = QsiState::new(vec![0, 0], &cfg).unwrap();
        assert_eq!(schedule_from_delta(&p, &[0.0, 0.0], &empty, 2).selected(0), None);
        let v = vec![PerUserValueTable::linear(5, 1.0, 0); 2];
        assert_eq!(schedule_users(&p, &v, &q, &[2, 2], 2).selected(0), Some(0));
    }
}
