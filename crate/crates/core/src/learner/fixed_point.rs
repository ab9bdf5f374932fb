//! Direct solvers for the per-user fixed points the learner converges to.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

use super::kernel::UserKernel;
use super::tables::{PerUserQTable, PerUserValueTable};

/// Solves `Ṽ + Ṽ(0)·1 = g̃ + P Ṽ` for the post-decision chain of `kernel`.
///
/// The system is `(I - P + 1 e_0ᵀ) Ṽ = g̃`; the solution has `Ṽ(0)` equal
/// to the per-user average cost of the reference chain.
pub fn solve_value_fixed_point(kernel: &UserKernel) -> Result<PerUserValueTable> {
    let n = kernel.buffer_size() as usize + 1;
    let p = kernel.post_decision_matrix();
    let mut a = DMatrix::<f64>::identity(n, n);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] -= p[i * n + j];
        }
        a[(i, 0)] += 1.0;
    }
    let g = DVector::from_vec(kernel.post_decision_cost());
    let lu = a.clone().lu();
    let v = lu.solve(&g).ok_or_else(|| Error::Singular {
        dim: n,
        detail: format!("value system matrix {a:.4}"),
    })?;
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Singular {
            dim: n,
            detail: "non-finite solution".into(),
        });
    }
    Ok(PerUserValueTable::from_values(
        v.iter().copied().collect(),
        kernel.reference_pattern(),
    ))
}

/// Max-norm residual of `Ṽ + Ṽ(0)·1 - g̃ - P Ṽ`.
pub fn value_residual(kernel: &UserKernel, v: &PerUserValueTable) -> f64 {
    let n = kernel.buffer_size() as usize + 1;
    let p = kernel.post_decision_matrix();
    let g = kernel.post_decision_cost();
    let vals = v.values();
    (0..n)
        .map(|i| {
            let pv: f64 = (0..n).map(|j| p[i * n + j] * vals[j]).sum();
            (vals[i] + vals[0] - g[i] - pv).abs()
        })
        .fold(0.0, f64::max)
}

/// Settings for relative Q-value iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QSolveOptions {
    pub tol: f64,
    pub max_iters: usize,
    /// Weight on the new iterate; values below 1 make the iteration
    /// aperiodic without moving its fixed point.
    pub relaxation: f64,
}

impl Default for QSolveOptions {
    fn default() -> Self {
        QSolveOptions {
            tol: 1e-9,
            max_iters: 100_000,
            relaxation: 1.0,
        }
    }
}

/// Fixed point of `ℚ = T^ℚ(ℚ) - ℚ(0, p^I)` by relative Q-value iteration.
///
/// Stops once both the span and the max-norm of successive differences drop
/// below `opts.tol`.
pub fn solve_qfactor_fixed_point(kernel: &UserKernel, opts: QSolveOptions) -> Result<PerUserQTable> {
    let n = kernel.buffer_size() as usize + 1;
    let np = kernel.num_patterns();
    let reference = kernel.reference_pattern();
    let mut q = vec![0.0; n * np];
    let mut next = vec![0.0; n * np];
    let mut row_min = vec![0.0; n];
    let mut history = Vec::new();
    for iter in 0..opts.max_iters {
        for (x, rm) in row_min.iter_mut().enumerate() {
            *rm = q[x * np..(x + 1) * np].iter().copied().fold(f64::INFINITY, f64::min);
        }
        let r = q[reference];
        for x in 0..n {
            for p in 0..np {
                let t = kernel.q_target_with(&row_min, r, x as u64, p);
                next[x * np + p] = (1.0 - opts.relaxation) * q[x * np + p] + opts.relaxation * t;
            }
        }
        let (mut lo, mut hi, mut max) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
        for (a, b) in next.iter().zip(&q) {
            let d = a - b;
            lo = lo.min(d);
            hi = hi.max(d);
            max = max.max(d.abs());
        }
        std::mem::swap(&mut q, &mut next);
        let span = hi - lo;
        history.push(span);
        if history.len() > 64 {
            history.remove(0);
        }
        if !span.is_finite() {
            return Err(Error::NonConvergence {
                iterations: iter + 1,
                last_span: span,
                span_history: history,
            });
        }
        if span < opts.tol && max < opts.tol {
            return PerUserQTable::from_values(q, np, reference);
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iters,
        last_span: *history.last().unwrap_or(&f64::NAN),
        span_history: history,
    })
}

/// Max-norm residual of `ℚ - T^ℚ(ℚ) + ℚ(0, p^I)`.
pub fn qfactor_residual(kernel: &UserKernel, t: &PerUserQTable) -> f64 {
    let n = kernel.buffer_size();
    let row_min: Vec<f64> = (0..=n).map(|x| t.row_min(x).0).collect();
    let r = t.reference_value();
    let mut worst = 0.0f64;
    for x in 0..=n {
        for p in 0..t.num_patterns() {
            let target = kernel.q_target_with(&row_min, r, x, p);
            worst = worst.max((t.get(x, p) - target).abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state(lambda: f64, mu: f64) -> UserKernel {
        UserKernel::from_parts(
            vec![1.0 - lambda, lambda],
            vec![vec![1.0 - mu, mu]],
            vec![0.0, 1.0],
            0,
        )
        .unwrap()
    }

    #[test]
    fn zero_cost_gives_zero_tables() {
        let k = UserKernel::from_parts(
            vec![0.5, 0.5, 0.0],
            vec![vec![0.2, 0.3, 0.5], vec![1.0, 0.0, 0.0]],
            vec![0.0; 3],
            0,
        )
        .unwrap();
        let v = solve_value_fixed_point(&k).unwrap();
        assert!(v.values().iter().all(|&x| x.abs() < 1e-15));
        let q = solve_qfactor_fixed_point(&k, QSolveOptions::default()).unwrap();
        assert!(q.values().iter().all(|&x| x.abs() < 1e-15));
    }

    #[test]
    fn two_state_chain_matches_hand_solution() {
        // Post-decision chain on {0, 1}: from 0, Q = 1 w.p. λ and is then
        // served w.p. μ; from 1, Q = 1 always.
        let (lambda, mu) = (0.3, 0.6);
        let k = two_state(lambda, mu);
        let v = solve_value_fixed_point(&k).unwrap();
        // With x = Ṽ(0), y = Ṽ(1):
        //   2x    = λ + (1 - λ(1-μ)) x + λ(1-μ) y
        //   y + x = 1 + μ x + (1-μ) y
        let a = [[2.0 - (1.0 - lambda * (1.0 - mu)), -lambda * (1.0 - mu)], [1.0 - mu, mu]];
        let b = [lambda, 1.0];
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        let x = (b[0] * a[1][1] - a[0][1] * b[1]) / det;
        let y = (a[0][0] * b[1] - b[0] * a[1][0]) / det;
        assert!((v.get(0) - x).abs() < 1e-12);
        assert!((v.get(1) - y).abs() < 1e-12);
        assert!(value_residual(&k, &v) < 1e-12);
    }

    #[test]
    fn residuals_vanish() {
        let k = UserKernel::from_parts(
            vec![0.4, 0.4, 0.1, 0.1],
            vec![
                vec![0.1, 0.4, 0.0, 0.5],
                vec![1.0, 0.0, 0.0, 0.0],
                vec![0.5, 0.3, 0.2, 0.0],
            ],
            vec![0.0, 1.0, 2.0, 3.0],
            0,
        )
        .unwrap();
        let v = solve_value_fixed_point(&k).unwrap();
        assert!(value_residual(&k, &v) < 1e-10);
        assert!(v.is_nondecreasing());
        let q = solve_qfactor_fixed_point(&k, QSolveOptions::default()).unwrap();
        assert!(qfactor_residual(&k, &q) < 1e-8);
    }
}
