//! Joint local descent over all weights and atom parameters.

use crate::error::Result;
use crate::forward::{ForwardModel, GRAD_COMPONENTS};
use crate::measure::{AtomParams, DomainBounds, WeightedAtom, WeightedMeasure};
use crate::optim::{minimize_box, BoxOptions, BoxStatus};
use crate::volume::Volume;

#[derive(Clone, Debug, PartialEq)]
pub struct DescentOptions {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub relative_decrease_tolerance: f64,
}

impl Default for DescentOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            gradient_tolerance: 1e-8,
            relative_decrease_tolerance: 1e-13,
        }
    }
}

#[derive(Clone, Debug)]
pub struct DescentResult {
    pub measure: WeightedMeasure,
    pub criterion: f64,
    pub initial_criterion: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub status: BoxStatus,
    /// Set when the line search could not make progress; the best feasible
    /// iterate is still returned.
    pub line_search_failed: bool,
}

fn pack(measure: &WeightedMeasure) -> Vec<f64> {
    measure
        .atoms()
        .iter()
        .flat_map(|a| {
            let p = a.theta.packed();
            [a.weight, p[0], p[1], p[2], p[3], p[4]]
        })
        .collect()
}

fn unpack(x: &[f64]) -> WeightedMeasure {
    x.chunks_exact(GRAD_COMPONENTS)
        .map(|c| WeightedAtom {
            weight: c[0],
            theta: AtomParams::from_packed(&c[1..]),
        })
        .collect()
}

/// Box-constrained quasi-Newton minimization of the criterion over
/// `(w_n, m_n, sigma_n, d_n)` for every atom, with `w >= 0` and `theta` in `bounds`.
pub fn local_descent(
    model: &ForwardModel,
    y: &Volume,
    init: &WeightedMeasure,
    lambda: f64,
    bounds: &DomainBounds,
    opts: &DescentOptions,
) -> Result<DescentResult> {
    if init.is_empty() {
        let c = model.criterion(y, init, lambda)?;
        return Ok(DescentResult {
            measure: init.clone(),
            criterion: c,
            initial_criterion: c,
            iterations: 0,
            evaluations: 1,
            status: BoxStatus::GradientTolerance,
            line_search_failed: false,
        });
    }

    let (lo, hi) = bounds.packed();
    let atom_lower = [0.0, lo[0], lo[1], lo[2], lo[3], lo[4]];
    let atom_upper = [f64::INFINITY, hi[0], hi[1], hi[2], hi[3], hi[4]];
    let lower: Vec<f64> = init.atoms().iter().flat_map(|_| atom_lower).collect();
    let upper: Vec<f64> = init.atoms().iter().flat_map(|_| atom_upper).collect();

    let mut initial_criterion = None;
    let objective = |x: &[f64], g: &mut [f64]| {
        let (c, grad) = model.criterion_and_gradient(y, &unpack(x), lambda)?;
        initial_criterion.get_or_insert(c);
        for (dst, row) in g.chunks_exact_mut(GRAD_COMPONENTS).zip(&grad.per_atom) {
            dst.copy_from_slice(row);
        }
        Ok(c)
    };
    let box_opts = BoxOptions {
        max_iterations: opts.max_iterations,
        gradient_tolerance: opts.gradient_tolerance,
        relative_decrease_tolerance: opts.relative_decrease_tolerance,
        ..BoxOptions::default()
    };
    let r = minimize_box(objective, &pack(init), &lower, &upper, &box_opts)?;
    log::debug!(
        "local descent on {} atoms: {} iterations, {} evaluations, {:?}, projected gradient {:.3e}",
        init.len(),
        r.iterations,
        r.evaluations,
        r.status,
        r.projected_gradient_norm
    );
    let line_search_failed = r.status == BoxStatus::LineSearchFailure;
    if line_search_failed {
        log::warn!(
            "local descent line search stalled after {} iterations (projected gradient {:.3e})",
            r.iterations,
            r.projected_gradient_norm
        );
    }
    Ok(DescentResult {
        measure: unpack(&r.x),
        criterion: r.value,
        initial_criterion: initial_criterion.unwrap_or(r.value),
        iterations: r.iterations,
        evaluations: r.evaluations,
        status: r.status,
        line_search_failed,
    })
}
