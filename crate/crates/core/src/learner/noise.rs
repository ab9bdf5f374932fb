use serde::{Deserialize, Serialize};

/// Running statistics of update noise `Z = observed target - expected target`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NoiseDiagnostics {
    count: u64,
    mean: f64,
    m2: f64,
}

impl NoiseDiagnostics {
    pub fn new() -> Self {
        Self::default()
    }

    /// Accumulates one sample (Welford's update).
    pub fn record(&mut self, observed: f64, expected: f64) {
        let z = observed - expected;
        self.count += 1;
        let delta = z - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (z - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; zero with fewer than two samples.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    /// Mean of `Z²`.
    pub fn second_moment(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.m2 / self.count as f64 + self.mean * self.mean
        }
    }

    /// Standard error of the mean.
    pub fn std_error(&self) -> f64 {
        if self.count == 0 {
            return f64::INFINITY;
        }
        (self.variance() / self.count as f64).sqrt()
    }

    /// `|mean| ≤ k · σ̂ / √n`.
    pub fn within_band(&self, k: f64) -> bool {
        self.count > 0 && self.mean.abs() <= k * self.std_error()
    }

    pub fn merge(&mut self, other: &NoiseDiagnostics) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        let n = (self.count + other.count) as f64;
        let delta = other.mean - self.mean;
        self.mean += delta * other.count as f64 / n;
        self.m2 += other.m2 + delta * delta * self.count as f64 * other.count as f64 / n;
        self.count += other.count;
    }
}

/// Functional form of [`NoiseDiagnostics::record`].
pub fn record_noise(mut diag: NoiseDiagnostics, observed: f64, expected: f64) -> NoiseDiagnostics {
    diag.record(observed, expected);
    diag
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_samples_have_zero_noise() {
        let mut d = NoiseDiagnostics::new();
        for _ in 0..10 {
            d.record(2.5, 2.5);
        }
        assert_eq!((d.count(), d.mean(), d.variance()), (10, 0.0, 0.0));
    }

    #[test]
    fn welford_matches_two_pass() {
        let xs = [1.0, 4.0, -2.0, 7.5, 0.25];
        let mut d = NoiseDiagnostics::new();
        xs.iter().for_each(|&x| d.record(x, 0.0));
        let mean = xs.iter().sum::<f64>() / 5.0;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 4.0;
        assert!((d.mean() - mean).abs() < 1e-12);
        assert!((d.variance() - var).abs() < 1e-12);
        let mut a = NoiseDiagnostics::new();
        let mut b = NoiseDiagnostics::new();
        xs[..2].iter().for_each(|&x| a.record(x, 0.0));
        xs[2..].iter().for_each(|&x| b.record(x, 0.0));
        a.merge(&b);
        assert!((a.mean() - mean).abs() < 1e-12 && (a.variance() - var).abs() < 1e-12);
    }
}
