//! Run statistics: per-user cost, queue and delay means, drop rates, queue
//! histograms, pattern usage, exact accounting totals and batch-means
//! confidence intervals.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::model::{CostModel, IciPattern, QsiState};
use crate::queueing::SlotOutcome;

/// Number of batches used for batch-means intervals.
pub const NUM_BATCHES: usize = 20;

/// A point estimate with a 95% half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub half_width: f64,
}

impl Estimate {
    pub fn lo(&self) -> f64 {
        self.mean - self.half_width
    }

    pub fn hi(&self) -> f64 {
        self.mean + self.half_width
    }

    pub fn contains(&self, x: f64) -> bool {
        (self.lo()..=self.hi()).contains(&x)
    }

    /// Whether the two intervals intersect.
    pub fn overlaps(&self, other: &Estimate) -> bool {
        self.lo() <= other.hi() && other.lo() <= self.hi()
    }

    /// Student-t interval over independent samples. One sample gives a zero
    /// half-width.
    pub fn from_samples(xs: &[f64]) -> Estimate {
        let n = xs.len();
        if n == 0 {
            return Estimate {
                mean: 0.0,
                half_width: 0.0,
            };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        if n < 2 {
            return Estimate { mean, half_width: 0.0 };
        }
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
            .expect("positive dof")
            .inverse_cdf(0.975);
        Estimate {
            mean,
            half_width: t * (var / n as f64).sqrt(),
        }
    }
}

/// Equal-length batches over a known number of samples; the remainder goes
/// to the last batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchMeans {
    batch_len: u64,
    sums: Vec<f64>,
    counts: Vec<u64>,
    seen: u64,
}

impl BatchMeans {
    pub fn new(total: u64) -> Self {
        BatchMeans {
            batch_len: (total / NUM_BATCHES as u64).max(1),
            sums: vec![0.0; NUM_BATCHES],
            counts: vec![0; NUM_BATCHES],
            seen: 0,
        }
    }

    pub fn push(&mut self, x: f64) {
        let b = ((self.seen / self.batch_len) as usize).min(NUM_BATCHES - 1);
        self.sums[b] += x;
        self.counts[b] += 1;
        self.seen += 1;
    }

    pub fn estimate(&self) -> Estimate {
        let total: f64 = self.sums.iter().sum();
        let means: Vec<f64> = self
            .sums
            .iter()
            .zip(&self.counts)
            .filter(|(_, &c)| c > 0)
            .map(|(s, &c)| s / c as f64)
            .collect();
        let mut e = Estimate::from_samples(&means);
        if self.seen > 0 {
            e.mean = total / self.seen as f64;
        }
        e
    }
}

/// Totals over every slot of a run, warmup included.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Accounting {
    pub arrived: u64,
    pub served: u64,
    pub dropped: u64,
    pub initial_mass: u64,
    pub final_mass: u64,
}

impl Accounting {
    /// `arrived = served + dropped + final - initial`, in integers.
    pub fn balances(&self) -> bool {
        self.arrived as u128 + self.initial_mass as u128
            == self.served as u128 + self.dropped as u128 + self.final_mass as u128
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserMetrics {
    pub mean_cost: f64,
    pub mean_queue: f64,
    /// Little's-law delay `mean_queue / λ` in slots.
    pub delay: f64,
    pub drop_prob: f64,
    pub arrived: u64,
    pub dropped: u64,
    /// Slots spent at each queue length.
    pub histogram: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub policy: String,
    pub seed: u64,
    pub horizon: u64,
    pub warmup: u64,
    /// Slots that entered the averages.
    pub slots: u64,
    pub users: Vec<UserMetrics>,
    /// Per-slot cost `Σ β f(q)`.
    pub cost: Estimate,
    /// Per-slot mean over users of `q / λ`.
    pub delay: Estimate,
    pub drop_prob: f64,
    /// Slots at each queue length, summed over users.
    pub histogram: Vec<u64>,
    pub messages: Option<Vec<u64>>,
    /// Pattern (as an activity string) to slot count.
    pub pattern_usage: BTreeMap<String, u64>,
    pub accounting: Accounting,
}

impl MetricsRecord {
    /// Empirical CDF of the aggregate queue histogram.
    pub fn queue_cdf(&self) -> Vec<f64> {
        cdf(&self.histogram)
    }

    pub fn user_cdf(&self, user: usize) -> Vec<f64> {
        cdf(&self.users[user].histogram)
    }
}

pub fn cdf(hist: &[u64]) -> Vec<f64> {
    let total: u64 = hist.iter().sum();
    let mut acc = 0u64;
    hist.iter()
        .map(|&h| {
            acc += h;
            if total == 0 {
                1.0
            } else {
                acc as f64 / total as f64
            }
        })
        .collect()
}

/// Online accumulator behind [`MetricsRecord`].
#[derive(Debug, Clone)]
pub struct MetricsCollector {
    cost: CostModel,
    mean_arrivals: Vec<f64>,
    slots: u64,
    cost_sum: Vec<f64>,
    queue_sum: Vec<u64>,
    arrived: Vec<u64>,
    dropped: Vec<u64>,
    hist: Vec<Vec<u64>>,
    usage: BTreeMap<String, u64>,
    cost_batches: BatchMeans,
    delay_batches: BatchMeans,
    accounting: Accounting,
}

impl MetricsCollector {
    pub fn new(cost: &CostModel, mean_arrivals: Vec<f64>, buffer_size: u64, measured_slots: u64) -> Self {
        let n = mean_arrivals.len();
        MetricsCollector {
            cost: cost.clone(),
            slots: 0,
            cost_sum: vec![0.0; n],
            queue_sum: vec![0; n],
            arrived: vec![0; n],
            dropped: vec![0; n],
            hist: vec![vec![0; buffer_size as usize + 1]; n],
            usage: BTreeMap::new(),
            cost_batches: BatchMeans::new(measured_slots),
            delay_batches: BatchMeans::new(measured_slots),
            accounting: Accounting::default(),
            mean_arrivals,
        }
    }

    pub fn set_initial(&mut self, q: &QsiState) {
        self.accounting.initial_mass = q.total();
        self.accounting.final_mass = q.total();
    }

    /// Every slot, warmup included.
    pub fn account(&mut self, outcome: &SlotOutcome) {
        let a = &mut self.accounting;
        a.arrived += outcome.arrived.iter().sum::<u64>();
        a.served += outcome.served.iter().sum::<u64>();
        a.dropped += outcome.dropped.iter().sum::<u64>();
        a.final_mass = outcome.next_q.total();
    }

    /// Measured slots only; `q` is the pre-decision state.
    pub fn record(&mut self, q: &QsiState, pattern: &IciPattern, outcome: &SlotOutcome) {
        self.slots += 1;
        let mut slot_cost = 0.0;
        let mut slot_delay = 0.0;
        for u in 0..self.mean_arrivals.len() {
            let x = q.get(u);
            let c = self.cost.weighted(u, x);
            slot_cost += c;
            slot_delay += delay_of(x as f64, self.mean_arrivals[u]);
            self.cost_sum[u] += c;
            self.queue_sum[u] += x;
            self.arrived[u] += outcome.arrived[u];
            self.dropped[u] += outcome.dropped[u];
            self.hist[u][x as usize] += 1;
        }
        self.cost_batches.push(slot_cost);
        self.delay_batches.push(slot_delay / self.mean_arrivals.len() as f64);
        *self.usage.entry(pattern.to_string()).or_insert(0) += 1;
    }

    pub fn finish(self, policy: String, seed: u64, horizon: u64, warmup: u64, messages: Option<Vec<u64>>) -> MetricsRecord {
        let slots = self.slots.max(1) as f64;
        let users: Vec<UserMetrics> = (0..self.mean_arrivals.len())
            .map(|u| {
                let mean_queue = self.queue_sum[u] as f64 / slots;
                UserMetrics {
                    mean_cost: self.cost_sum[u] / slots,
                    mean_queue,
                    delay: delay_of(mean_queue, self.mean_arrivals[u]),
                    drop_prob: ratio(self.dropped[u], self.arrived[u]),
                    arrived: self.arrived[u],
                    dropped: self.dropped[u],
                    histogram: self.hist[u].clone(),
                }
            })
            .collect();
        let mut histogram = vec![0; self.hist.first().map_or(0, |h| h.len())];
        for h in &self.hist {
            for (acc, &x) in histogram.iter_mut().zip(h) {
                *acc += x;
            }
        }
        MetricsRecord {
            policy,
            seed,
            horizon,
            warmup,
            slots: self.slots,
            cost: self.cost_batches.estimate(),
            delay: self.delay_batches.estimate(),
            drop_prob: ratio(self.dropped.iter().sum(), self.arrived.iter().sum()),
            users,
            histogram,
            messages,
            pattern_usage: self.usage,
            accounting: self.accounting,
        }
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// `q / λ`; an idle user with an empty queue has zero delay.
fn delay_of(q: f64, lambda: f64) -> f64 {
    if lambda > 0.0 {
        q / lambda
    } else if q == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}
