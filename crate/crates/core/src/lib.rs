//! Gridless sparse 3D deconvolution.
//!
//! A blurred, noisy volume `y = H * sum_n G(theta_n, w_n) + noise` is inverted
//! for a small set of generalized isotropic Gaussian atoms `theta = (m, sigma, d)`
//! with non-negative weights, by minimizing
//! `C(mu) = 1/2 ||y - Phi mu||^2 + lambda * sum_n w_n` over Dirac measures.
//! Two greedy solvers are provided: Sliding Frank-Wolfe ([`solvers::sfw`]),
//! which slides every atom after each insertion, and its boosted variant
//! ([`solvers::bsfw`]), which defers sliding to a single final descent.
//!
//! Per-atom rendering, gradient evaluation, certificate fields and 3D FFT lines
//! run on rayon when the default `parallel` feature is enabled, and
//! sequentially otherwise. Both paths produce identical results.

// `!(x > 0.0)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod certificate;
pub mod error;
pub mod fft;
pub mod forward;
pub mod harness;
pub mod measure;
pub mod optim;
pub mod par;
pub mod solvers;
pub mod volume;

pub use error::{Error, Result};
pub use forward::{CriterionGradient, ForwardModel, Psf};
pub use measure::{AtomParams, DomainBounds, WeightedAtom, WeightedMeasure};
pub use solvers::{Algorithm, SolveResult, SolverOptions, Termination};
pub use volume::{GridGeometry, Volume};
