//! Weight fitting, joint local descent, and the Sliding Frank-Wolfe outer
//! loops (standard and boosted).

pub mod descent;
mod frank_wolfe;
pub mod lasso;
pub mod trace;

use crate::certificate::AscentOptions;
use crate::error::{Error, Result};
use crate::measure::WeightedMeasure;

pub use descent::{local_descent, DescentOptions, DescentResult};
pub use frank_wolfe::{bsfw, sfw, solve};
pub use lasso::{nonneg_lasso, LassoOptions, LassoResult};
pub use trace::{criterion_path_audit, Algorithm, AuditReport, SolveTrace, Step};

/// Outer-iteration cap used when no expected atom count is known.
pub const DEFAULT_MAX_OUTER_ITERATIONS: usize = 50;

#[derive(Clone, Debug, PartialEq)]
pub struct SolverOptions {
    pub lambda: f64,
    pub max_outer_iterations: usize,
    /// A new atom is added while the certificate maximum exceeds
    /// `eta_threshold + eta_tolerance`.
    pub eta_threshold: f64,
    /// Slack on the stopping test. Converged local descents leave the
    /// certificate at exactly the threshold on existing atoms, up to solver
    /// precision, and that round-off must not trigger a duplicate atom.
    pub eta_tolerance: f64,
    pub lasso: LassoOptions,
    pub descent: DescentOptions,
    pub ascent: AscentOptions,
    /// Atoms with weight `<= prune_relative_tolerance * max weight` are removed.
    pub prune_relative_tolerance: f64,
    pub grid_sigma_samples: usize,
    pub grid_shape_samples: usize,
    /// Component-wise distance under which a new atom counts as a duplicate.
    pub duplicate_distance: f64,
}

impl SolverOptions {
    pub fn new(lambda: f64) -> Self {
        Self {
            lambda,
            max_outer_iterations: DEFAULT_MAX_OUTER_ITERATIONS,
            eta_threshold: 1.0,
            eta_tolerance: 1e-4,
            lasso: LassoOptions::default(),
            descent: DescentOptions::default(),
            ascent: AscentOptions::default(),
            prune_relative_tolerance: 1e-10,
            grid_sigma_samples: 8,
            grid_shape_samples: 6,
            duplicate_distance: 1e-6,
        }
    }

    /// Caps the outer loop at four times the expected number of atoms.
    pub fn with_expected_atoms(mut self, atoms: usize) -> Self {
        self.max_outer_iterations = (4 * atoms).max(1);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lambda", self.lambda),
            ("eta_threshold", self.eta_threshold),
            ("lasso tolerance", self.lasso.tolerance),
            ("descent gradient tolerance", self.descent.gradient_tolerance),
            ("ascent gradient tolerance", self.ascent.gradient_tolerance),
            ("prune tolerance", self.prune_relative_tolerance),
            ("duplicate distance", self.duplicate_distance),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.eta_tolerance.is_finite() && self.eta_tolerance >= 0.0) {
            return Err(Error::InvalidParameter("eta_tolerance must be non-negative".into()));
        }
        if self.max_outer_iterations == 0 || self.grid_sigma_samples == 0 || self.grid_shape_samples == 0 {
            return Err(Error::InvalidParameter(
                "iteration cap and grid sizes must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    /// Certificate maximum fell to the threshold.
    Certificate,
    IterationCap,
    /// The certificate kept proposing an existing atom without progress.
    DuplicateStall,
}

impl Termination {
    pub fn tag(self) -> &'static str {
        match self {
            Termination::Certificate => "certificate",
            Termination::IterationCap => "iteration_cap",
            Termination::DuplicateStall => "duplicate_stall",
        }
    }
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub measure: WeightedMeasure,
    pub criterion: f64,
    pub termination: Termination,
    pub trace: SolveTrace,
}
