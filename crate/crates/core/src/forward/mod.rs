//! Observation model `y = H * sum_n G(theta_n, w_n) + noise` and the
//! penalized least-squares criterion
//! `C(mu) = 1/2 ||y - Phi mu||^2 + lambda * mu(D)` with its analytic gradient.

pub mod atom;
pub mod psf;

use crate::error::{Error, Result};
use crate::fft::Fft3;
use crate::measure::{AtomParams, WeightedMeasure};
use crate::par;
use crate::volume::{GridGeometry, Volume};

pub use atom::{atom_moments, render_atom, AtomPatch, Footprint};
pub use psf::{convolve_fft, Psf};

/// Values per atom in a [`CriterionGradient`] row: `(w, m_x, m_y, m_z, sigma, d)`.
pub const GRAD_COMPONENTS: usize = 6;

/// Partial derivatives of the criterion, one row per atom in
/// `(w, m_x, m_y, m_z, sigma, d)` order.
#[derive(Clone, Debug, PartialEq)]
pub struct CriterionGradient {
    pub per_atom: Vec<[f64; GRAD_COMPONENTS]>,
}

/// Grid, FFT plans and PSF shared by every evaluation on one problem.
#[derive(Debug)]
pub struct ForwardModel {
    geom: GridGeometry,
    fft: Fft3,
    psf: Psf,
}

impl ForwardModel {
    /// Builds the model from an origin-centered kernel (normalized to unit sum).
    pub fn new(kernel: Volume) -> Result<Self> {
        let geom = kernel.geometry();
        let fft = Fft3::new(geom);
        let psf = Psf::new(kernel, &fft)?;
        Ok(Self { geom, fft, psf })
    }

    pub fn geometry(&self) -> GridGeometry {
        self.geom
    }

    pub fn fft(&self) -> &Fft3 {
        &self.fft
    }

    pub fn psf(&self) -> &Psf {
        &self.psf
    }

    /// `sum_n w_n G(theta_n)` before blurring. Atoms are rendered in parallel
    /// and summed in order.
    pub fn render(&self, measure: &WeightedMeasure) -> Result<Volume> {
        let patches = par::map(measure.atoms(), |a| AtomPatch::new(&a.theta, self.geom));
        let mut out = Volume::zeros(self.geom);
        for (patch, a) in patches.into_iter().zip(measure.atoms()) {
            patch?.add_to(&mut out, a.weight);
        }
        Ok(out)
    }

    /// `Phi mu = H * sum_n G(theta_n, w_n)`, one convolution for the whole sum.
    pub fn forward(&self, measure: &WeightedMeasure) -> Result<Volume> {
        if measure.is_empty() {
            return Ok(Volume::zeros(self.geom));
        }
        self.convolve(&self.render(measure)?)
    }

    pub fn convolve(&self, v: &Volume) -> Result<Volume> {
        self.psf.convolve(v, &self.fft)
    }

    /// `Phi^T`-side operator on volumes: correlation with the PSF.
    pub fn adjoint(&self, v: &Volume) -> Result<Volume> {
        self.psf.correlate(v, &self.fft)
    }

    /// `H * G(theta)` for a unit-weight atom.
    pub fn unit_image(&self, theta: &AtomParams) -> Result<Volume> {
        self.convolve(&render_atom(theta, 1.0, self.geom)?)
    }

    fn check(&self, y: &Volume, lambda: f64) -> Result<()> {
        if y.dims() != self.geom.dims() {
            return Err(Error::DimMismatch {
                expected: self.geom.dims(),
                got: y.dims(),
            });
        }
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "lambda must be positive, got {lambda}"
            )));
        }
        Ok(())
    }

    pub fn criterion(&self, y: &Volume, measure: &WeightedMeasure, lambda: f64) -> Result<f64> {
        self.check(y, lambda)?;
        let residual = y.sub(&self.forward(measure)?);
        Ok(0.5 * residual.norm_sq() + lambda * measure.total_mass())
    }

    pub fn criterion_gradient(&self, y: &Volume, measure: &WeightedMeasure, lambda: f64) -> Result<CriterionGradient> {
        Ok(self.criterion_and_gradient(y, measure, lambda)?.1)
    }

    /// Criterion and gradient from a single forward pass. With
    /// `b = H^T (Phi mu - y)`: `dC/dw_n = <G_n, b> + lambda` and
    /// `dC/dp_n = w_n <dG_n/dp, b>`, evaluated in parallel across atoms.
    pub fn criterion_and_gradient(
        &self,
        y: &Volume,
        measure: &WeightedMeasure,
        lambda: f64,
    ) -> Result<(f64, CriterionGradient)> {
        self.check(y, lambda)?;
        let mut residual = self.forward(measure)?;
        residual.add_scaled(-1.0, y);
        let value = 0.5 * residual.norm_sq() + lambda * measure.total_mass();
        if measure.is_empty() {
            return Ok((value, CriterionGradient { per_atom: Vec::new() }));
        }
        let back = self.adjoint(&residual)?;
        let rows = par::map(measure.atoms(), |a| {
            let m = atom_moments(&a.theta, &back)?;
            let w = a.weight;
            Ok([m[0] + lambda, w * m[1], w * m[2], w * m[3], w * m[4], w * m[5]])
        });
        let per_atom = rows.into_iter().collect::<Result<Vec<_>>>()?;
        if !value.is_finite() || per_atom.iter().flatten().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("criterion gradient"));
        }
        Ok((value, CriterionGradient { per_atom }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn model(n: usize) -> ForwardModel {
        let g = GridGeometry::cube(n).unwrap();
        let k = Volume::from_fn(g, |i, j, k| {
            let w = |x: usize| {
                let d = x.min(n - x) as f64;
                d * d
            };
            (-(w(i) + w(j)) / 2.0 - w(k) / 8.0).exp()
        });
        ForwardModel::new(k).unwrap()
    }

    fn two_atoms() -> WeightedMeasure {
        WeightedMeasure::from_parts(
            &[
                AtomParams::new([4.2, 5.5, 6.1], 1.5, 2.0),
                AtomParams::new([9.7, 8.05, 7.3], 2.2, 1.6),
            ],
            &[1.3, 0.6],
        )
        .unwrap()
    }

    #[test]
    fn empty_measure_forwards_to_zero() {
        let m = model(8);
        assert!(m
            .forward(&WeightedMeasure::empty())
            .unwrap()
            .data()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn forward_is_linear_in_atoms() {
        let m = model(14);
        let mu = two_atoms();
        let both = m.forward(&mu).unwrap();
        let mut sum = Volume::zeros(m.geometry());
        for a in mu.atoms() {
            let single = WeightedMeasure::from_parts(&[a.theta], &[a.weight]).unwrap();
            sum.add_scaled(1.0, &m.forward(&single).unwrap());
        }
        let err = both.sub(&sum).linf_and_l2_norms().1 / both.linf_and_l2_norms().1;
        assert!(err < 1e-12);

        let a = mu.atoms()[0];
        let single = WeightedMeasure::from_parts(&[a.theta], &[a.weight]).unwrap();
        let direct = m
            .convolve(&render_atom(&a.theta, a.weight, m.geometry()).unwrap())
            .unwrap();
        assert_eq!(m.forward(&single).unwrap(), direct);
    }

    #[test]
    fn criterion_special_cases() {
        let m = model(10);
        let mu = two_atoms();
        let y = m.forward(&mu).unwrap();
        assert_relative_eq!(
            m.criterion(&y, &WeightedMeasure::empty(), 0.2).unwrap(),
            0.5 * y.norm_sq(),
            max_relative = 1e-15
        );
        let unit_mass = WeightedMeasure::from_parts(&[mu.atoms()[0].theta], &[1.0]).unwrap();
        let y1 = m.forward(&unit_mass).unwrap();
        assert_relative_eq!(m.criterion(&y1, &unit_mass, 0.2).unwrap(), 0.2, max_relative = 1e-12);
        assert!(m.criterion(&y, &mu, 0.0).is_err());
    }

    #[test]
    fn zero_residual_gradient() {
        let m = model(12);
        let mu = two_atoms();
        let y = m.forward(&mu).unwrap();
        let grad = m.criterion_gradient(&y, &mu, 0.2).unwrap();
        let scale = y.linf_and_l2_norms().1;
        for row in &grad.per_atom {
            assert_relative_eq!(row[0], 0.2, epsilon = 1e-12 * scale);
            for g in &row[1..] {
                assert!(g.abs() < 1e-12 * scale, "{g}");
            }
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let m = model(12);
        let mu = two_atoms();
        let y = Volume::from_fn(m.geometry(), |i, j, k| ((i + 2 * j + 3 * k) % 7) as f64 / 20.0);
        let lambda = 0.3;
        let grad = m.criterion_gradient(&y, &mu, lambda).unwrap();
        let eval = |n: usize, c: usize, h: f64| {
            let mut atoms = mu.atoms().to_vec();
            if c == 0 {
                atoms[n].weight += h;
            } else {
                let mut p = atoms[n].theta.packed();
                p[c - 1] += h;
                atoms[n].theta = AtomParams::from_packed(&p);
            }
            m.criterion(&y, &WeightedMeasure::new(atoms).unwrap(), lambda).unwrap()
        };
        for n in 0..mu.len() {
            for c in 0..GRAD_COMPONENTS {
                let h = 1e-5;
                let fd = (eval(n, c, h) - eval(n, c, -h)) / (2.0 * h);
                assert_relative_eq!(grad.per_atom[n][c], fd, max_relative = 1e-5, epsilon = 1e-7);
            }
        }
    }

    #[test]
    fn dim_mismatch_is_reported() {
        let m = model(8);
        let y = Volume::new_zero([8, 8, 9]).unwrap();
        assert!(matches!(
            m.criterion(&y, &WeightedMeasure::empty(), 1.0),
            Err(Error::DimMismatch { .. })
        ));
    }
}
