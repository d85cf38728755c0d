//! Box-constrained limited-memory quasi-Newton minimization.
//!
//! Each iteration fixes the variables sitting on a bound with the gradient
//! pushing outward, builds an L-BFGS direction on the remaining free
//! variables, and backtracks along the projected path `P(x + a d)` until the
//! Armijo condition holds. Every accepted iterate is feasible and strictly
//! decreases the objective.

use std::collections::VecDeque;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct BoxOptions {
    pub max_iterations: usize,
    /// Stop when the projected gradient infinity-norm falls below this.
    pub gradient_tolerance: f64,
    /// Stop when one step decreases the objective by less than this fraction.
    pub relative_decrease_tolerance: f64,
    pub memory: usize,
}

impl Default for BoxOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            gradient_tolerance: 1e-8,
            relative_decrease_tolerance: 1e-13,
            memory: 10,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoxStatus {
    GradientTolerance,
    FunctionTolerance,
    MaxIterations,
    LineSearchFailure,
}

#[derive(Clone, Debug)]
pub struct BoxResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub projected_gradient_norm: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub status: BoxStatus,
}

impl BoxResult {
    pub fn converged(&self) -> bool {
        matches!(self.status, BoxStatus::GradientTolerance | BoxStatus::FunctionTolerance)
    }
}

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 50;

fn project(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((v, &l), &u) in x.iter_mut().zip(lower).zip(upper) {
        *v = v.clamp(l, u);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn projected_gradient_norm(x: &[f64], g: &[f64], lower: &[f64], upper: &[f64]) -> f64 {
    x.iter()
        .zip(g)
        .zip(lower.iter().zip(upper))
        .map(|((&xi, &gi), (&l, &u))| ((xi - gi).clamp(l, u) - xi).abs())
        .fold(0.0, f64::max)
}

/// Minimizes `f` over the box `[lower, upper]` starting from the projection of
/// `x0`. `f` writes the gradient into its second argument and returns the value.
pub fn minimize_box<F>(mut f: F, x0: &[f64], lower: &[f64], upper: &[f64], opts: &BoxOptions) -> Result<BoxResult>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<f64>,
{
    let n = x0.len();
    assert!(lower.len() == n && upper.len() == n, "bound length mismatch");
    if lower.iter().zip(upper).any(|(l, u)| l > u) {
        return Err(Error::InvalidParameter("lower bound above upper bound".into()));
    }

    let mut x = x0.to_vec();
    project(&mut x, lower, upper);
    let mut g = vec![0.0; n];
    let mut value = f(&x, &mut g)?;
    let mut evaluations = 1;
    if !value.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("objective at starting point"));
    }

    let mut memory: VecDeque<(Vec<f64>, Vec<f64>)> = VecDeque::with_capacity(opts.memory);
    let mut free = vec![true; n];
    let mut dir = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut trial_g = vec![0.0; n];
    let mut alpha_buf = vec![0.0; opts.memory];

    let mut iterations = 0;
    let status = loop {
        let pg = projected_gradient_norm(&x, &g, lower, upper);
        if pg <= opts.gradient_tolerance {
            break BoxStatus::GradientTolerance;
        }
        if iterations >= opts.max_iterations {
            break BoxStatus::MaxIterations;
        }

        for i in 0..n {
            free[i] = !((x[i] <= lower[i] && g[i] > 0.0) || (x[i] >= upper[i] && g[i] < 0.0));
        }

        // Two-loop recursion restricted to the free variables.
        let masked = |v: &[f64], i: usize| if free[i] { v[i] } else { 0.0 };
        for i in 0..n {
            dir[i] = masked(&g, i);
        }
        let mut used = Vec::with_capacity(memory.len());
        for (idx, (s, y)) in memory.iter().enumerate().rev() {
            let sy: f64 = (0..n).map(|i| masked(s, i) * masked(y, i)).sum();
            if sy <= 1e-300 {
                continue;
            }
            let rho = 1.0 / sy;
            let a = rho * (0..n).map(|i| masked(s, i) * dir[i]).sum::<f64>();
            alpha_buf[idx] = a;
            for i in 0..n {
                dir[i] -= a * masked(y, i);
            }
            used.push((idx, rho));
        }
        if let Some(&(newest, _)) = used.first() {
            let (s, y) = &memory[newest];
            let sy: f64 = (0..n).map(|i| masked(s, i) * masked(y, i)).sum();
            let yy: f64 = (0..n).map(|i| masked(y, i) * masked(y, i)).sum();
            let gamma = sy / yy;
            dir.iter_mut().for_each(|d| *d *= gamma);
        }
        for &(idx, rho) in used.iter().rev() {
            let (s, y) = &memory[idx];
            let b = rho * (0..n).map(|i| masked(y, i) * dir[i]).sum::<f64>();
            for i in 0..n {
                dir[i] += masked(s, i) * (alpha_buf[idx] - b);
            }
        }
        dir.iter_mut().for_each(|d| *d = -*d);

        if !(dot(&g, &dir) < 0.0) || used.is_empty() {
            memory.clear();
            for i in 0..n {
                dir[i] = -masked(&g, i);
            }
        }
        let mut step = if memory.is_empty() {
            let dmax = dir.iter().fold(0.0f64, |m, d| m.max(d.abs()));
            (1.0 / dmax).min(1.0)
        } else {
            1.0
        };

        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            for i in 0..n {
                trial[i] = x[i] + step * dir[i];
            }
            project(&mut trial, lower, upper);
            let predicted: f64 = (0..n).map(|i| g[i] * (trial[i] - x[i])).sum();
            if predicted >= 0.0 {
                step *= 0.5;
                continue;
            }
            let tv = f(&trial, &mut trial_g)?;
            evaluations += 1;
            if tv.is_finite() && trial_g.iter().all(|v| v.is_finite()) && tv <= value + ARMIJO * predicted {
                accepted = Some(tv);
                break;
            }
            step *= 0.5;
        }

        let Some(new_value) = accepted else {
            if memory.is_empty() {
                break BoxStatus::LineSearchFailure;
            }
            memory.clear();
            continue;
        };

        let s: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = trial_g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).max(1e-300) {
            if memory.len() == opts.memory {
                memory.pop_front();
            }
            memory.push_back((s, y));
        }

        let decrease = value - new_value;
        x.copy_from_slice(&trial);
        g.copy_from_slice(&trial_g);
        let old = value;
        value = new_value;
        iterations += 1;

        if decrease <= opts.relative_decrease_tolerance * old.abs().max(value.abs()).max(1.0) {
            break BoxStatus::FunctionTolerance;
        }
    };

    Ok(BoxResult {
        projected_gradient_norm: projected_gradient_norm(&x, &g, lower, upper),
        x,
        value,
        iterations,
        evaluations,
        status,
    })
}
