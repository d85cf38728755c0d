use std::time::{Duration, Instant};

use crate::certificate::{build_template_table, certificate_max, TemplateGrid};
use crate::error::{Error, Result};
use crate::forward::ForwardModel;
use crate::measure::{DomainBounds, WeightedMeasure};
use crate::volume::Volume;

use super::descent::local_descent;
use super::lasso::nonneg_lasso;
use super::trace::{Algorithm, CriterionSample, IterationRecord, SolveTrace, Step};
use super::{SolveResult, SolverOptions, Termination};

/// Sliding Frank-Wolfe: every added atom is followed by a weight fit and a
/// joint descent over all atoms.
pub fn sfw(model: &ForwardModel, y: &Volume, opts: &SolverOptions, bounds: &DomainBounds) -> Result<SolveResult> {
    solve(Algorithm::Sfw, model, y, opts, bounds)
}

/// Boosted Sliding Frank-Wolfe: weight fits only while atoms are added, and a
/// single joint descent once the certificate stops the loop.
pub fn bsfw(model: &ForwardModel, y: &Volume, opts: &SolverOptions, bounds: &DomainBounds) -> Result<SolveResult> {
    solve(Algorithm::Bsfw, model, y, opts, bounds)
}

struct Run<'a> {
    model: &'a ForwardModel,
    y: &'a Volume,
    opts: &'a SolverOptions,
    bounds: &'a DomainBounds,
}

impl Run<'_> {
    fn criterion(&self, mu: &WeightedMeasure) -> Result<f64> {
        self.model.criterion(self.y, mu, self.opts.lambda)
    }

    fn prune(&self, mu: WeightedMeasure, value: f64, rec: &mut IterationRecord) -> Result<(WeightedMeasure, f64)> {
        let pruned = mu.prune_zero_weights(mu.relative_tolerance(self.opts.prune_relative_tolerance));
        let value = if pruned.len() == mu.len() {
            value
        } else {
            self.criterion(&pruned)?
        };
        rec.samples.push(CriterionSample {
            step: Step::Prune,
            value,
        });
        Ok((pruned, value))
    }

    fn descend(&self, mu: &WeightedMeasure, rec: &mut IterationRecord) -> Result<(WeightedMeasure, f64)> {
        let t = Instant::now();
        let d = local_descent(
            self.model,
            self.y,
            mu,
            self.opts.lambda,
            self.bounds,
            &self.opts.descent,
        )?;
        rec.descent_time += t.elapsed();
        rec.samples.push(CriterionSample {
            step: Step::Descent,
            value: d.criterion,
        });
        Ok((d.measure, d.criterion))
    }

    /// Final descent and prune of the boosted variant.
    fn finish(&self, mu: WeightedMeasure, rec: &mut IterationRecord) -> Result<(WeightedMeasure, f64)> {
        let (mu, value) = self.descend(&mu, rec)?;
        let out = self.prune(mu, value, rec)?;
        rec.atoms = out.0.len();
        Ok(out)
    }
}

/// Runs either outer loop. Both share the certificate, augmentation, weight
/// fit and pruning steps; only the placement of the joint descent differs.
pub fn solve(
    algorithm: Algorithm,
    model: &ForwardModel,
    y: &Volume,
    opts: &SolverOptions,
    bounds: &DomainBounds,
) -> Result<SolveResult> {
    opts.validate()?;
    if y.dims() != model.geometry().dims() {
        return Err(Error::DimMismatch {
            expected: model.geometry().dims(),
            got: y.dims(),
        });
    }
    let run = Run { model, y, opts, bounds };
    let lambda = opts.lambda;

    let setup = Instant::now();
    let grid = TemplateGrid::spanning(bounds, opts.grid_sigma_samples, opts.grid_shape_samples);
    let table = build_template_table(model, &grid, bounds)?;
    let mut trace = SolveTrace::new(algorithm, 0.5 * y.norm_sq());
    trace.setup_time = setup.elapsed();

    let mut mu = WeightedMeasure::empty();
    let mut criterion = trace.initial_criterion;
    let mut stalled_on_duplicate = false;
    let mut termination = None;

    for iteration in 1..=opts.max_outer_iterations {
        let t = Instant::now();
        let residual = y.sub(&model.forward(&mu)?);
        let cert = certificate_max(model, &residual, lambda, &table, bounds, &opts.ascent)?;
        let mut rec = IterationRecord {
            iteration,
            eta_max: cert.value,
            eta_grid_max: cert.grid.value,
            augmented: false,
            atoms: mu.len(),
            samples: Vec::new(),
            certificate_time: t.elapsed(),
            lasso_time: Duration::ZERO,
            descent_time: Duration::ZERO,
        };
        log::debug!(
            "{algorithm} iteration {iteration}: eta max {:.6} (grid {:.6}), {} atoms, C = {criterion:.6e}",
            cert.value,
            cert.grid.value,
            mu.len()
        );

        let duplicate = mu
            .atoms()
            .iter()
            .any(|a| a.theta.max_abs_diff(&cert.theta) <= opts.duplicate_distance);
        let stop = if cert.value <= opts.eta_threshold + opts.eta_tolerance {
            Some(Termination::Certificate)
        } else if duplicate && stalled_on_duplicate {
            Some(Termination::DuplicateStall)
        } else {
            None
        };
        if let Some(reason) = stop {
            if algorithm == Algorithm::Bsfw {
                (mu, criterion) = run.finish(mu, &mut rec)?;
            }
            trace.iterations.push(rec);
            termination = Some(reason);
            break;
        }

        // Augment the support; the new atom starts with zero weight.
        let mut thetas = mu.thetas();
        thetas.push(cert.theta);
        let mut w0 = mu.weights();
        w0.push(0.0);

        let t = Instant::now();
        let fit = nonneg_lasso(model, y, &thetas, lambda, &w0, &opts.lasso)?;
        rec.lasso_time = t.elapsed();
        let mut next = WeightedMeasure::from_parts(&thetas, &fit.weights)?;
        let mut value = run.criterion(&next)?;
        rec.samples.push(CriterionSample {
            step: Step::Lasso,
            value,
        });

        if algorithm == Algorithm::Sfw {
            (next, value) = run.descend(&next, &mut rec)?;
        }
        let before = criterion;
        (mu, criterion) = run.prune(next, value, &mut rec)?;
        stalled_on_duplicate = duplicate && criterion >= before - 1e-12 * before.abs().max(1.0);
        rec.augmented = true;
        rec.atoms = mu.len();
        trace.iterations.push(rec);
    }

    let termination = match termination {
        Some(t) => t,
        None => {
            if algorithm == Algorithm::Bsfw {
                let mut last = trace.iterations.pop().expect("at least one iteration");
                (mu, criterion) = run.finish(mu, &mut last)?;
                trace.iterations.push(last);
            }
            Termination::IterationCap
        }
    };

    Ok(SolveResult {
        measure: mu,
        criterion,
        termination,
        trace,
    })
}
