//! Non-negative LASSO over the weights of a fixed atom list.
//!
//! With `phi_n = H * G(theta_n)`, the weight-only criterion is the quadratic
//! `1/2 w^T Q w - c^T w + lambda sum(w) + 1/2 ||y||^2` where `Q_ij = <phi_i, phi_j>`
//! and `c_i = <phi_i, y>`. Cyclic coordinate descent minimizes it exactly one
//! coordinate at a time: `w_i <- max(0, w_i - g_i / Q_ii)`.

use crate::error::{Error, Result};
use crate::forward::ForwardModel;
use crate::measure::AtomParams;
use crate::par;
use crate::volume::Volume;

#[derive(Clone, Debug, PartialEq)]
pub struct LassoOptions {
    /// Largest accepted KKT violation.
    pub tolerance: f64,
    pub max_sweeps: usize,
}

impl Default for LassoOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-9,
            max_sweeps: 100_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LassoResult {
    pub weights: Vec<f64>,
    pub sweeps: usize,
    pub max_kkt_violation: f64,
    pub converged: bool,
}

/// Gram matrix (row-major) and data correlations of the blurred unit atoms.
#[derive(Clone, Debug)]
pub struct LassoSystem {
    pub gram: Vec<f64>,
    pub correlation: Vec<f64>,
    pub n: usize,
}

impl LassoSystem {
    pub fn build(model: &ForwardModel, y: &Volume, thetas: &[AtomParams]) -> Result<Self> {
        let images = par::map(thetas, |t| model.unit_image(t))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_images(&images, y))
    }

    pub fn from_images(images: &[Volume], y: &Volume) -> Self {
        let n = images.len();
        let rows = par::map_range(n, |i| {
            let mut row = vec![0.0; n];
            for j in i..n {
                row[j] = images[i].dot(&images[j]);
            }
            (row, images[i].dot(y))
        });
        let mut gram = vec![0.0; n * n];
        let mut correlation = vec![0.0; n];
        for (i, (row, c)) in rows.into_iter().enumerate() {
            correlation[i] = c;
            for j in i..n {
                gram[i * n + j] = row[j];
                gram[j * n + i] = row[j];
            }
        }
        Self { gram, correlation, n }
    }

    /// `dC/dw_i = (Q w)_i - c_i + lambda`.
    pub fn gradient(&self, w: &[f64], lambda: f64) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let qw: f64 = (0..self.n).map(|j| self.gram[i * self.n + j] * w[j]).sum();
                qw - self.correlation[i] + lambda
            })
            .collect()
    }

    /// Criterion minus the constant `1/2 ||y||^2`.
    pub fn reduced_criterion(&self, w: &[f64], lambda: f64) -> f64 {
        let mut quad = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                quad += w[i] * self.gram[i * self.n + j] * w[j];
            }
        }
        0.5 * quad - self.correlation.iter().zip(w).map(|(c, x)| c * x).sum::<f64>() + lambda * w.iter().sum::<f64>()
    }
}

/// Sign-dependent KKT residual: `|g_i|` on the support, `max(0, -g_i)` off it.
pub fn kkt_violation(weights: &[f64], gradient: &[f64]) -> f64 {
    weights
        .iter()
        .zip(gradient)
        .map(|(&w, &g)| if w > 0.0 { g.abs() } else { (-g).max(0.0) })
        .fold(0.0, f64::max)
}

pub fn solve_system(sys: &LassoSystem, lambda: f64, w_init: &[f64], opts: &LassoOptions) -> Result<LassoResult> {
    if w_init.len() != sys.n {
        return Err(Error::InvalidParameter(format!(
            "{} initial weights for {} atoms",
            w_init.len(),
            sys.n
        )));
    }
    if w_init.iter().any(|&w| !(w.is_finite() && w >= 0.0)) {
        return Err(Error::InvalidParameter("initial weights must be non-negative".into()));
    }
    let n = sys.n;
    let mut w = w_init.to_vec();
    let mut grad = sys.gradient(&w, lambda);
    let mut violation = kkt_violation(&w, &grad);
    let mut sweeps = 0;
    while violation > opts.tolerance && sweeps < opts.max_sweeps {
        for i in 0..n {
            let q = sys.gram[i * n + i];
            if q <= 0.0 {
                continue;
            }
            let g: f64 = (0..n).map(|j| sys.gram[i * n + j] * w[j]).sum::<f64>() - sys.correlation[i] + lambda;
            w[i] = (w[i] - g / q).max(0.0);
        }
        sweeps += 1;
        grad = sys.gradient(&w, lambda);
        violation = kkt_violation(&w, &grad);
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("LASSO weights"));
    }
    let converged = violation <= opts.tolerance;
    if !converged {
        log::warn!("non-negative LASSO stopped after {sweeps} sweeps with KKT violation {violation:.3e}");
    }
    Ok(LassoResult {
        weights: w,
        sweeps,
        max_kkt_violation: violation,
        converged,
    })
}

/// `argmin_{w >= 0} C(y, mu_{w, theta}, lambda)` for fixed atom parameters.
/// Non-convergence is reported through [`LassoResult::converged`] with the
/// best iterate.
pub fn nonneg_lasso(
    model: &ForwardModel,
    y: &Volume,
    thetas: &[AtomParams],
    lambda: f64,
    w_init: &[f64],
    opts: &LassoOptions,
) -> Result<LassoResult> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    let sys = LassoSystem::build(model, y, thetas)?;
    solve_system(&sys, lambda, w_init, opts)
}
