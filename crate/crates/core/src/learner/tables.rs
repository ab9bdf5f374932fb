use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Post-decision value vector `ṽ(q̃)` of one user, `q̃ = 0..=N_Q`.
///
/// The reference state is `q̃ = 0`; `reference_pattern` is the catalog index
/// of the pattern under which value updates are accepted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerUserValueTable {
    values: Vec<f64>,
    reference_pattern: usize,
    visits: Vec<u64>,
}

impl PerUserValueTable {
    /// Linear initial values `slope · q̃`. A positive slope makes the table
    /// strictly increasing.
    pub fn linear(buffer_size: u64, slope: f64, reference_pattern: usize) -> Self {
        let values = (0..=buffer_size).map(|q| slope * q as f64).collect();
        Self::from_values(values, reference_pattern)
    }

    pub fn from_values(values: Vec<f64>, reference_pattern: usize) -> Self {
        let visits = vec![0; values.len()];
        PerUserValueTable {
            values,
            reference_pattern,
            visits,
        }
    }

    #[inline]
    pub fn get(&self, q: u64) -> f64 {
        self.values[q as usize]
    }

    /// Linear interpolation at a real queue length, clamped to the grid.
    pub fn interpolate(&self, x: f64) -> f64 {
        let top = (self.values.len() - 1) as f64;
        let x = x.clamp(0.0, top);
        let lo = x.floor();
        let w = x - lo;
        let i = lo as usize;
        if w == 0.0 {
            self.values[i]
        } else {
            (1.0 - w) * self.values[i] + w * self.values[i + 1]
        }
    }

    pub fn try_get(&self, q: u64) -> Result<f64> {
        self.values.get(q as usize).copied().ok_or(Error::TableIndex {
            index: q as usize,
            size: self.values.len(),
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn visits(&self) -> &[u64] {
        &self.visits
    }

    pub(crate) fn visit(&mut self, q: u64) -> u64 {
        self.visits[q as usize] += 1;
        self.visits[q as usize]
    }

    pub fn reference_pattern(&self) -> usize {
        self.reference_pattern
    }

    /// Largest value of `N_Q`.
    pub fn buffer_size(&self) -> u64 {
        self.values.len() as u64 - 1
    }

    pub fn is_nondecreasing(&self) -> bool {
        self.values.windows(2).all(|w| w[1] >= w[0])
    }
}

/// Q-factor matrix `ℚ(q, p)` of one user: `(N_Q + 1)` rows, one column per
/// catalog pattern. The reference cell is `(0, reference_pattern)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerUserQTable {
    values: Vec<f64>,
    num_patterns: usize,
    reference_pattern: usize,
    visits: Vec<u64>,
}

impl PerUserQTable {
    pub fn zeros(buffer_size: u64, num_patterns: usize, reference_pattern: usize) -> Self {
        let n = (buffer_size as usize + 1) * num_patterns;
        PerUserQTable {
            values: vec![0.0; n],
            num_patterns,
            reference_pattern,
            visits: vec![0; n],
        }
    }

    /// Builds a table from row-major values (`q` major, pattern minor).
    pub fn from_values(values: Vec<f64>, num_patterns: usize, reference_pattern: usize) -> Result<Self> {
        if num_patterns == 0 || values.is_empty() || values.len() % num_patterns != 0 {
            return Err(Error::config("Q-table shape does not match the pattern count"));
        }
        let n = values.len();
        Ok(PerUserQTable {
            values,
            num_patterns,
            reference_pattern,
            visits: vec![0; n],
        })
    }

    #[inline]
    fn cell(&self, q: u64, p: usize) -> usize {
        q as usize * self.num_patterns + p
    }

    #[inline]
    pub fn get(&self, q: u64, p: usize) -> f64 {
        self.values[self.cell(q, p)]
    }

    pub(crate) fn check(&self, q: u64, p: usize) -> Result<usize> {
        let idx = self.cell(q, p);
        if p >= self.num_patterns || idx >= self.values.len() {
            return Err(Error::TableIndex {
                index: idx,
                size: self.values.len(),
            });
        }
        Ok(idx)
    }

    pub(crate) fn set_at(&mut self, idx: usize, v: f64) {
        self.values[idx] = v;
    }

    pub(crate) fn visit_at(&mut self, idx: usize) -> u64 {
        self.visits[idx] += 1;
        self.visits[idx]
    }

    pub fn row(&self, q: u64) -> &[f64] {
        let start = q as usize * self.num_patterns;
        &self.values[start..start + self.num_patterns]
    }

    /// `min_p ℚ(q, p)` and its lowest minimizing index.
    pub fn row_min(&self, q: u64) -> (f64, usize) {
        self.row(q)
            .iter()
            .enumerate()
            .fold((f64::INFINITY, 0), |best, (i, &v)| if v < best.0 { (v, i) } else { best })
    }

    pub fn reference_value(&self) -> f64 {
        self.get(0, self.reference_pattern)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn visits(&self) -> &[u64] {
        &self.visits
    }

    pub fn num_patterns(&self) -> usize {
        self.num_patterns
    }

    pub fn reference_pattern(&self) -> usize {
        self.reference_pattern
    }

    pub fn buffer_size(&self) -> u64 {
        (self.values.len() / self.num_patterns) as u64 - 1
    }

    /// Column `p` as a vector over `q`.
    pub fn column(&self, p: usize) -> Vec<f64> {
        (0..=self.buffer_size()).map(|q| self.get(q, p)).collect()
    }
}

/// Max-norm distance between two equally shaped slices.
pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().map(|x| x.abs()).fold(0.0, f64::max)
}
