//! Arrival processes and the buffer dynamics
//!
//! ```text
//! Q' = min((Q - U)^+ + A, N_Q)
//! ```
//!
//! applied per user, together with the post-decision state `(Q - U)^+`.

use rand::Rng;
use rand_distr::{Bernoulli, Distribution, Exp, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{QsiState, SystemConfig};

/// Per-slot arrival distribution of one user, in queue units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ArrivalDist {
    /// One unit with probability `rate`.
    Bernoulli { rate: f64 },
    /// Exactly `size` units every slot.
    Deterministic { size: u64 },
    /// Poisson count with mean `rate`.
    Poisson { rate: f64 },
}

impl ArrivalDist {
    fn validate(&self) -> Result<()> {
        match *self {
            ArrivalDist::Bernoulli { rate } if !(0.0..=1.0).contains(&rate) => {
                Err(Error::config(format!("bernoulli rate {rate} outside [0, 1]")))
            }
            ArrivalDist::Poisson { rate } if !(rate >= 0.0 && rate.is_finite()) => {
                Err(Error::config(format!("poisson rate {rate} must be nonnegative")))
            }
            _ => Ok(()),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            ArrivalDist::Bernoulli { rate } | ArrivalDist::Poisson { rate } => rate,
            ArrivalDist::Deterministic { size } => size as f64,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match *self {
            ArrivalDist::Bernoulli { rate } => {
                Bernoulli::new(rate).expect("validated").sample(rng) as u64
            }
            ArrivalDist::Deterministic { size } => size,
            ArrivalDist::Poisson { rate } => {
                if rate == 0.0 {
                    0
                } else {
                    Poisson::new(rate).expect("validated").sample(rng) as u64
                }
            }
        }
    }

    /// Probability mass on `0..=cap`, with all mass above `cap` lumped onto
    /// `cap`. Exact for queue dynamics whenever `cap ≥ N_Q`.
    pub fn pmf(&self, cap: u64) -> Vec<f64> {
        let mut pmf = vec![0.0; cap as usize + 1];
        match *self {
            ArrivalDist::Bernoulli { rate } => {
                pmf[0] += 1.0 - rate;
                pmf[1.min(cap) as usize] += rate;
            }
            ArrivalDist::Deterministic { size } => pmf[size.min(cap) as usize] = 1.0,
            ArrivalDist::Poisson { rate } => {
                let mut term = (-rate).exp();
                let mut acc = 0.0;
                for (a, slot) in pmf.iter_mut().enumerate().take(cap as usize) {
                    *slot = term;
                    acc += term;
                    term *= rate / (a + 1) as f64;
                }
                pmf[cap as usize] = (1.0 - acc).max(0.0);
            }
        }
        pmf
    }
}

/// Independent arrival processes for all users.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalModel {
    per_user: Vec<ArrivalDist>,
}

impl ArrivalModel {
    pub fn new(per_user: Vec<ArrivalDist>, cfg: &SystemConfig) -> Result<Self> {
        if per_user.len() != cfg.num_users() {
            return Err(Error::config(format!(
                "arrival model has {} users, expected {}",
                per_user.len(),
                cfg.num_users()
            )));
        }
        per_user.iter().try_for_each(ArrivalDist::validate)?;
        Ok(ArrivalModel { per_user })
    }

    pub fn uniform(dist: ArrivalDist, cfg: &SystemConfig) -> Result<Self> {
        ArrivalModel::new(vec![dist; cfg.num_users()], cfg)
    }

    pub fn dist(&self, user: usize) -> &ArrivalDist {
        &self.per_user[user]
    }

    pub fn means(&self) -> Vec<f64> {
        self.per_user.iter().map(ArrivalDist::mean).collect()
    }

    pub fn num_users(&self) -> usize {
        self.per_user.len()
    }

    /// Same model with every rate (or size) scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let per_user = self
            .per_user
            .iter()
            .map(|d| match *d {
                ArrivalDist::Bernoulli { rate } => ArrivalDist::Bernoulli { rate: rate * factor },
                ArrivalDist::Poisson { rate } => ArrivalDist::Poisson { rate: rate * factor },
                ArrivalDist::Deterministic { size } => ArrivalDist::Deterministic {
                    size: (size as f64 * factor).round() as u64,
                },
            })
            .collect::<Vec<_>>();
        per_user.iter().try_for_each(ArrivalDist::validate)?;
        Ok(ArrivalModel { per_user })
    }
}

/// One independent draw per user.
pub fn sample_arrivals<R: Rng + ?Sized>(model: &ArrivalModel, rng: &mut R) -> Vec<u64> {
    model.per_user.iter().map(|d| d.sample(rng)).collect()
}

pub fn sample_arrivals_into<R: Rng + ?Sized>(model: &ArrivalModel, rng: &mut R, out: &mut [u64]) {
    for (a, d) in out.iter_mut().zip(&model.per_user) {
        *a = d.sample(rng);
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotOutcome {
    pub next_q: QsiState,
    /// Units actually removed from each queue, `min(u, q)`.
    pub served: Vec<u64>,
    pub arrived: Vec<u64>,
    pub dropped: Vec<u64>,
    /// `(q - u)^+`.
    pub post_decision: Vec<u64>,
}

/// Applies one slot of service `u` and arrivals `a` to `q`.
///
/// `u` is the per-user service capacity in queue units (zero for users that
/// are not scheduled).
pub fn step_queues(q: &QsiState, u: &[u64], a: &[u64], buffer_size: u64) -> SlotOutcome {
    let n = q.as_slice().len();
    debug_assert!(u.len() == n && a.len() == n);
    let mut out = SlotOutcome {
        next_q: q.clone(),
        served: vec![0; n],
        arrived: a.to_vec(),
        dropped: vec![0; n],
        post_decision: vec![0; n],
    };
    let mut next = vec![0; n];
    for i in 0..n {
        let qi = q.get(i);
        let served = u[i].min(qi);
        let post = qi - served;
        let filled = post.saturating_add(a[i]);
        out.served[i] = served;
        out.post_decision[i] = post;
        out.dropped[i] = filled.saturating_sub(buffer_size);
        next[i] = filled.min(buffer_size);
    }
    out.next_q = QsiState::from_raw(next);
    out
}

/// Head-of-line packet bookkeeping for the packet queue mode.
///
/// Packet sizes are exponential with the configured mean and drawn lazily
/// when a packet reaches the head of its queue. A packet leaves only once all
/// of its bits are delivered; a partially served head keeps its residual
/// bits for later slots.
#[derive(Debug, Clone)]
pub struct PacketService {
    mean_bits: f64,
    head_residual: Vec<Option<f64>>,
    size_dist: Exp<f64>,
}

impl PacketService {
    pub fn new(num_users: usize, mean_bits: f64) -> Result<Self> {
        if !(mean_bits > 0.0 && mean_bits.is_finite()) {
            return Err(Error::config("mean packet size must be positive"));
        }
        Ok(PacketService {
            mean_bits,
            head_residual: vec![None; num_users],
            size_dist: Exp::new(1.0 / mean_bits).expect("positive rate"),
        })
    }

    pub fn mean_bits(&self) -> f64 {
        self.mean_bits
    }

    /// Packets user `user` would complete with `budget` bits, without drawing
    /// new sizes: the head residual (or the mean, if not yet drawn) followed
    /// by mean-size packets.
    pub fn predict(&self, user: usize, queue: u64, budget: u64) -> u64 {
        if queue == 0 {
            return 0;
        }
        let budget = budget as f64;
        let head = self.head_residual[user].unwrap_or(self.mean_bits);
        if budget < head {
            return 0;
        }
        let more = ((budget - head) / self.mean_bits).floor() as u64;
        (1 + more).min(queue)
    }

    /// Like [`predict`](Self::predict) but counts partial progress on the
    /// head packet as a fraction.
    pub fn predict_fraction(&self, user: usize, queue: u64, budget: u64) -> f64 {
        if queue == 0 {
            return 0.0;
        }
        let budget = budget as f64;
        let head = self.head_residual[user].unwrap_or(self.mean_bits);
        let x = if budget < head {
            budget / head
        } else {
            1.0 + (budget - head) / self.mean_bits
        };
        x.min(queue as f64)
    }

    /// Delivers up to `budget` bits from a queue of `queue` packets and
    /// returns the number of packets completed.
    pub fn serve<R: Rng + ?Sized>(&mut self, user: usize, queue: u64, budget: u64, rng: &mut R) -> u64 {
        let mut budget = budget as f64;
        let mut done = 0;
        while done < queue && budget > 0.0 {
            let head = match self.head_residual[user] {
                Some(r) => r,
                None => self.size_dist.sample(rng),
            };
            if budget >= head {
                budget -= head;
                done += 1;
                self.head_residual[user] = None;
            } else {
                self.head_residual[user] = Some(head - budget);
                budget = 0.0;
            }
        }
        if done == queue {
            self.head_residual[user] = None;
        }
        done
    }

    /// Forgets the head packet of users whose queue is empty.
    pub fn sync(&mut self, q: &QsiState) {
        for (i, r) in self.head_residual.iter_mut().enumerate() {
            if q.get(i) == 0 {
                *r = None;
            }
        }
    }
}
