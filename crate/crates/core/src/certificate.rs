//! Dual certificate `eta(theta) = <H * G(theta), y - Phi mu> / lambda`.
//!
//! The grid stage evaluates `eta` at every integer position for each `(sigma, d)`
//! pair of a lookup table, one frequency-domain correlation per table entry.
//! The continuous stage runs a box-constrained quasi-Newton ascent from the
//! best grid point, using the analytic atom derivatives.
//!
//! Table templates are even functions on the torus (isotropic atoms and a
//! centro-symmetric PSF), so their spectra are real and correlation with a
//! template coincides with convolution. [`build_template_table`] rejects a PSF
//! for which that does not hold.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::forward::{atom_moments, render_atom, ForwardModel};
use crate::measure::{AtomParams, DomainBounds};
use crate::optim::{minimize_box, BoxOptions};
use crate::par;
use crate::volume::Volume;

/// Largest tolerated `max |Im T| / max |T|` over a template spectrum.
const SYMMETRY_TOLERANCE: f64 = 1e-9;

/// Sample values over `(sigma, d)` for the grid stage.
#[derive(Clone, Debug, PartialEq)]
pub struct TemplateGrid {
    pub sigmas: Vec<f64>,
    pub shapes: Vec<f64>,
}

impl TemplateGrid {
    /// `n_sigma` geometrically spaced scales and `n_shape` linearly spaced
    /// exponents spanning the domain.
    pub fn spanning(bounds: &DomainBounds, n_sigma: usize, n_shape: usize) -> Self {
        let geometric = |lo: f64, hi: f64, n: usize| -> Vec<f64> {
            if n == 1 {
                return vec![(lo * hi).sqrt()];
            }
            (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect()
        };
        let linear = |lo: f64, hi: f64, n: usize| -> Vec<f64> {
            if n == 1 {
                return vec![0.5 * (lo + hi)];
            }
            (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
        };
        Self {
            sigmas: geometric(bounds.sigma_min, bounds.sigma_max, n_sigma),
            shapes: linear(bounds.shape_min, bounds.shape_max, n_shape),
        }
    }

    pub fn len(&self) -> usize {
        self.sigmas.len() * self.shapes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(sigma, d)` of table entry `entry` (sigma-major order).
    pub fn pair(&self, entry: usize) -> (f64, f64) {
        (
            self.sigmas[entry / self.shapes.len()],
            self.shapes[entry % self.shapes.len()],
        )
    }
}

/// Frequency-domain transforms of `H * G(origin, sigma, d)` for every grid pair.
#[derive(Clone, Debug)]
pub struct AtomTemplateTable {
    grid: TemplateGrid,
    dims: [usize; 3],
    /// Real spectra, one per entry in sigma-major order.
    spectra: Vec<Vec<f64>>,
}

impl AtomTemplateTable {
    pub fn grid(&self) -> &TemplateGrid {
        &self.grid
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.spectra.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spectra.is_empty()
    }

    pub fn spectrum(&self, entry: usize) -> &[f64] {
        &self.spectra[entry]
    }
}

/// Transform of the PSF-blurred unit atom centered at the origin.
pub fn template_spectrum(model: &ForwardModel, sigma: f64, shape: f64) -> Result<Vec<Complex64>> {
    let atom = render_atom(&AtomParams::new([0.0; 3], sigma, shape), 1.0, model.geometry())?;
    let mut s = model.fft().forward_real(&atom);
    s.iter_mut().zip(model.psf().spectrum()).for_each(|(a, h)| *a *= h);
    Ok(s)
}

/// Builds the lookup table once per solve, in parallel across entries.
pub fn build_template_table(
    model: &ForwardModel,
    grid: &TemplateGrid,
    bounds: &DomainBounds,
) -> Result<AtomTemplateTable> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("template grid is empty".into()));
    }
    for &s in &grid.sigmas {
        if !(bounds.sigma_min <= s && s <= bounds.sigma_max) {
            return Err(Error::InvalidParameter(format!("grid sigma {s} outside domain")));
        }
    }
    for &d in &grid.shapes {
        if !(bounds.shape_min <= d && d <= bounds.shape_max) {
            return Err(Error::InvalidParameter(format!("grid shape {d} outside domain")));
        }
    }
    let entries = par::map_range(grid.len(), |e| {
        let (sigma, shape) = grid.pair(e);
        let s = template_spectrum(model, sigma, shape)?;
        let peak = s.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let imag = s.iter().map(|c| c.im.abs()).fold(0.0, f64::max);
        let ratio = imag / peak;
        if ratio > SYMMETRY_TOLERANCE {
            return Err(Error::NonSymmetricPsf(ratio));
        }
        Ok(s.into_iter().map(|c| c.re).collect::<Vec<f64>>())
    });
    Ok(AtomTemplateTable {
        grid: grid.clone(),
        dims: model.geometry().dims(),
        spectra: entries.into_iter().collect::<Result<_>>()?,
    })
}

/// Best grid point of a certificate evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridArgmax {
    pub position: [usize; 3],
    pub sigma_index: usize,
    pub shape_index: usize,
    pub value: f64,
}

impl GridArgmax {
    pub fn theta(&self, grid: &TemplateGrid) -> AtomParams {
        AtomParams::new(
            self.position.map(|p| p as f64),
            grid.sigmas[self.sigma_index],
            grid.shapes[self.shape_index],
        )
    }
}

/// `eta` sampled at all integer positions for every table entry.
#[derive(Clone, Debug)]
pub struct CertificateField {
    pub grid: TemplateGrid,
    /// One volume per table entry, sigma-major.
    pub fields: Vec<Volume>,
    pub argmax: GridArgmax,
}

impl CertificateField {
    pub fn field(&self, sigma_index: usize, shape_index: usize) -> &Volume {
        &self.fields[sigma_index * self.grid.shapes.len() + shape_index]
    }
}

fn check_inputs(residual: &Volume, lambda: f64, table: &AtomTemplateTable) -> Result<()> {
    if residual.dims() != table.dims {
        return Err(Error::DimMismatch {
            expected: table.dims,
            got: residual.dims(),
        });
    }
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    Ok(())
}

fn entry_field(
    model: &ForwardModel,
    spectrum: &[Complex64],
    template: &[f64],
    lambda: f64,
    residual: &Volume,
) -> Volume {
    let scale = 1.0 / lambda;
    let prod: Vec<Complex64> = spectrum.iter().zip(template).map(|(r, t)| r * (t * scale)).collect();
    model.fft().inverse_real(prod, residual.geometry())
}

fn volume_argmax(v: &Volume) -> (usize, f64) {
    v.data().iter().enumerate().fold(
        (0, f64::NEG_INFINITY),
        |best, (i, &x)| if x > best.1 { (i, x) } else { best },
    )
}

fn reduce_argmax(table: &AtomTemplateTable, model: &ForwardModel, per_entry: Vec<(usize, f64)>) -> GridArgmax {
    let n_shape = table.grid.shapes.len();
    let (entry, (idx, value)) =
        per_entry
            .into_iter()
            .enumerate()
            .fold((0, (0, f64::NEG_INFINITY)), |best, (e, cur)| {
                if cur.1 > best.1 .1 {
                    (e, cur)
                } else {
                    best
                }
            });
    GridArgmax {
        position: model.geometry().coords(idx),
        sigma_index: entry / n_shape,
        shape_index: entry % n_shape,
        value,
    }
}

/// Full certificate field over positions x table entries.
pub fn eta_field(
    model: &ForwardModel,
    residual: &Volume,
    lambda: f64,
    table: &AtomTemplateTable,
) -> Result<CertificateField> {
    check_inputs(residual, lambda, table)?;
    let spectrum = model.fft().forward_real(residual);
    let fields = par::map(&table.spectra, |t| entry_field(model, &spectrum, t, lambda, residual));
    let argmax = reduce_argmax(table, model, fields.iter().map(volume_argmax).collect());
    Ok(CertificateField {
        grid: table.grid.clone(),
        fields,
        argmax,
    })
}

/// Same argmax as [`eta_field`] without retaining the per-entry volumes.
pub fn eta_grid_argmax(
    model: &ForwardModel,
    residual: &Volume,
    lambda: f64,
    table: &AtomTemplateTable,
) -> Result<GridArgmax> {
    check_inputs(residual, lambda, table)?;
    let spectrum = model.fft().forward_real(residual);
    let per_entry = par::map(&table.spectra, |t| {
        volume_argmax(&entry_field(model, &spectrum, t, lambda, residual))
    });
    Ok(reduce_argmax(table, model, per_entry))
}

/// `eta` and its gradient at a continuous `theta`, given `back = H^T residual`.
pub fn eta_at(back: &Volume, lambda: f64, theta: &AtomParams) -> Result<(f64, [f64; 5])> {
    let m = atom_moments(theta, back)?;
    Ok((m[0] / lambda, [m[1], m[2], m[3], m[4], m[5]].map(|v| v / lambda)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct AscentOptions {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
}

impl Default for AscentOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            gradient_tolerance: 1e-8,
        }
    }
}

/// Box-constrained local maximization of `eta` from `start`.
pub fn refine_eta_max(
    model: &ForwardModel,
    residual: &Volume,
    lambda: f64,
    start: &AtomParams,
    bounds: &DomainBounds,
    opts: &AscentOptions,
) -> Result<(AtomParams, f64)> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    let back = model.adjoint(residual)?;
    refine_with_backprojection(&back, lambda, start, bounds, opts)
}

pub(crate) fn refine_with_backprojection(
    back: &Volume,
    lambda: f64,
    start: &AtomParams,
    bounds: &DomainBounds,
    opts: &AscentOptions,
) -> Result<(AtomParams, f64)> {
    let (lower, upper) = bounds.packed();
    let objective = |x: &[f64], g: &mut [f64]| {
        let (eta, grad) = eta_at(back, lambda, &AtomParams::from_packed(x))?;
        for (gi, v) in g.iter_mut().zip(grad) {
            *gi = -v;
        }
        Ok(-eta)
    };
    let box_opts = BoxOptions {
        max_iterations: opts.max_iterations,
        gradient_tolerance: opts.gradient_tolerance,
        ..BoxOptions::default()
    };
    let result = minimize_box(objective, &start.packed(), &lower, &upper, &box_opts).map_err(|e| match e {
        Error::NonFinite(_) => Error::NonFinite("certificate ascent"),
        other => other,
    })?;
    if !result.value.is_finite() {
        return Err(Error::NonFinite("certificate ascent"));
    }
    Ok((AtomParams::from_packed(&result.x), -result.value))
}

/// Result of the two-stage certificate maximization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CertificateMax {
    pub theta: AtomParams,
    pub value: f64,
    pub grid: GridArgmax,
}

/// Grid argmax over the lookup table, then continuous refinement from it.
pub fn certificate_max(
    model: &ForwardModel,
    residual: &Volume,
    lambda: f64,
    table: &AtomTemplateTable,
    bounds: &DomainBounds,
    opts: &AscentOptions,
) -> Result<CertificateMax> {
    let grid = eta_grid_argmax(model, residual, lambda, table)?;
    let start = grid.theta(&table.grid).clamp_to_domain(bounds);
    let back = model.adjoint(residual)?;
    let (theta, value) = refine_with_backprojection(&back, lambda, &start, bounds, opts)?;
    Ok(CertificateMax { theta, value, grid })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::Psf;
    use crate::harness::synth::make_surrogate_model;
    use crate::volume::GridGeometry;
    use approx::assert_relative_eq;

    fn model(n: usize) -> ForwardModel {
        make_surrogate_model(GridGeometry::cube(n).unwrap(), 1.0, 1.5).unwrap()
    }

    fn bounds(n: usize) -> DomainBounds {
        DomainBounds::for_volume([n; 3], 0.0, (1.0, 3.0), (1.2, 2.5)).unwrap()
    }

    fn single(sigma: f64, shape: f64) -> TemplateGrid {
        TemplateGrid {
            sigmas: vec![sigma],
            shapes: vec![shape],
        }
    }

    fn pseudo_random(geom: crate::volume::GridGeometry, seed: u64) -> Volume {
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        Volume::from_fn(geom, |_, _, _| {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        })
    }

    #[test]
    fn grid_spacing() {
        let g = TemplateGrid::spanning(&bounds(8), 3, 4);
        assert_relative_eq!(g.sigmas[1], 3f64.sqrt(), max_relative = 1e-15);
        assert_eq!(g.sigmas[2], 3.0);
        assert_relative_eq!(g.shapes[1], 1.2 + 1.3 / 3.0, max_relative = 1e-15);
        assert_eq!(g.pair(5), (g.sigmas[1], g.shapes[1]));
    }

    #[test]
    fn zero_residual_gives_zero_field() {
        let m = model(10);
        let b = bounds(10);
        let table = build_template_table(&m, &TemplateGrid::spanning(&b, 2, 2), &b).unwrap();
        let zero = Volume::zeros(m.geometry());
        let f = eta_field(&m, &zero, 0.5, &table).unwrap();
        assert!(f.fields.iter().all(|v| v.data().iter().all(|&x| x == 0.0)));
        let c = certificate_max(&m, &zero, 0.5, &table, &b, &AscentOptions::default()).unwrap();
        assert_eq!(c.value, 0.0);
    }

    #[test]
    fn on_grid_atom_is_the_argmax() {
        let m = model(12);
        let b = bounds(12);
        let theta = AtomParams::new([5.0, 6.0, 7.0], 2.0, 2.0);
        let table = build_template_table(&m, &single(2.0, 2.0), &b).unwrap();
        let phi = m.unit_image(&theta).unwrap();
        let f = eta_field(&m, &phi, 1.0, &table).unwrap();
        assert_eq!(f.argmax.position, [5, 6, 7]);
        assert_relative_eq!(f.argmax.value, phi.norm_sq(), max_relative = 1e-12);
        assert_eq!(eta_grid_argmax(&m, &phi, 1.0, &table).unwrap(), f.argmax);
    }

    #[test]
    fn stored_argmax_is_the_maximum() {
        let m = model(10);
        let b = bounds(10);
        let table = build_template_table(&m, &TemplateGrid::spanning(&b, 3, 2), &b).unwrap();
        let f = eta_field(&m, &pseudo_random(m.geometry(), 4), 0.3, &table).unwrap();
        let best = f
            .fields
            .iter()
            .flat_map(|v| v.data().iter().copied())
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(f.argmax.value, best);
        let a = f.argmax;
        let v = f.field(a.sigma_index, a.shape_index);
        assert_eq!(v.get(a.position[0], a.position[1], a.position[2]), best);
    }

    #[test]
    fn field_is_linear_in_the_residual() {
        let m = model(10);
        let b = bounds(10);
        let table = build_template_table(&m, &TemplateGrid::spanning(&b, 2, 2), &b).unwrap();
        let r1 = pseudo_random(m.geometry(), 1);
        let r2 = pseudo_random(m.geometry(), 2);
        let mut mix = r1.clone();
        mix.scale(2.5);
        mix.add_scaled(-0.7, &r2);
        let f1 = eta_field(&m, &r1, 0.2, &table).unwrap();
        let f2 = eta_field(&m, &r2, 0.2, &table).unwrap();
        let fm = eta_field(&m, &mix, 0.2, &table).unwrap();
        for e in 0..table.len() {
            let mut expect = f1.fields[e].clone();
            expect.scale(2.5);
            expect.add_scaled(-0.7, &f2.fields[e]);
            let scale = expect.linf_and_l2_norms().0;
            for (a, b) in fm.fields[e].data().iter().zip(expect.data()) {
                assert!((a - b).abs() <= 1e-10 * scale);
            }
        }
    }

    #[test]
    fn fft_field_matches_spatial_inner_products() {
        let n = 12;
        let m = model(n);
        let b = bounds(n);
        let grid = TemplateGrid::spanning(&b, 2, 2);
        let table = build_template_table(&m, &grid, &b).unwrap();
        let r = pseudo_random(m.geometry(), 9);
        let lambda = 0.4;
        let f = eta_field(&m, &r, lambda, &table).unwrap();
        for e in 0..table.len() {
            let (sigma, shape) = grid.pair(e);
            let field = &f.fields[e];
            let scale = field.linf_and_l2_norms().0;
            for idx in (0..field.data().len()).step_by(7) {
                let pos = m.geometry().coords(idx).map(|p| p as f64);
                let phi = m.unit_image(&AtomParams::new(pos, sigma, shape)).unwrap();
                let direct = phi.dot(&r) / lambda;
                assert!(
                    (field[idx] - direct).abs() <= 1e-8 * direct.abs().max(scale),
                    "{} vs {direct}",
                    field[idx]
                );
            }
        }
    }

    #[test]
    fn table_entries_match_direct_transforms() {
        let m = model(10);
        let b = bounds(10);
        let grid = TemplateGrid::spanning(&b, 3, 2);
        let table = build_template_table(&m, &grid, &b).unwrap();
        assert_eq!(table.len(), 6);
        for e in 0..table.len() {
            let (sigma, shape) = grid.pair(e);
            let phi = m.unit_image(&AtomParams::new([0.0; 3], sigma, shape)).unwrap();
            let direct = m.fft().forward_real(&phi);
            let scale = direct.iter().map(|c| c.norm()).fold(0.0, f64::max);
            for (t, d) in table.spectrum(e).iter().zip(&direct) {
                assert!((t - d.re).abs() <= 1e-12 * scale);
                assert!(d.im.abs() <= 1e-12 * scale);
            }
        }
    }

    #[test]
    fn delta_psf_gives_bare_atom_spectrum() {
        let g = GridGeometry::cube(8).unwrap();
        let mut delta = Volume::zeros(g);
        delta[0] = 1.0;
        let m = ForwardModel::new(delta).unwrap();
        assert_eq!(m.psf().spectrum(), Psf::identity(m.fft()).unwrap().spectrum());
        let b = bounds(8);
        let table = build_template_table(&m, &single(1.5, 2.0), &b).unwrap();
        let bare = m
            .fft()
            .forward_real(&render_atom(&AtomParams::new([0.0; 3], 1.5, 2.0), 1.0, g).unwrap());
        for (t, d) in table.spectrum(0).iter().zip(&bare) {
            assert!((t - d.re).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_asymmetric_psf_and_bad_grids() {
        let g = GridGeometry::cube(8).unwrap();
        let mut k = Volume::zeros(g);
        k[0] = 1.0;
        k[1] = 0.5;
        let m = ForwardModel::new(k).unwrap();
        let b = bounds(8);
        assert!(matches!(
            build_template_table(&m, &single(1.5, 2.0), &b),
            Err(Error::NonSymmetricPsf(_))
        ));
        let m = model(8);
        assert!(build_template_table(&m, &single(5.0, 2.0), &b).is_err());
        assert!(build_template_table(&m, &single(1.5, 1.0), &b).is_err());
        let table = build_template_table(&m, &single(1.5, 2.0), &b).unwrap();
        assert!(eta_field(&m, &Volume::new_zero([8, 8, 9]).unwrap(), 1.0, &table).is_err());
        assert!(eta_field(&m, &Volume::zeros(g), 0.0, &table).is_err());
    }

    #[test]
    fn refinement_never_decreases_eta_and_stays_in_bounds() {
        let m = model(12);
        let b = bounds(12);
        let table = build_template_table(&m, &TemplateGrid::spanning(&b, 3, 3), &b).unwrap();
        for seed in 0..4 {
            let r = pseudo_random(m.geometry(), seed);
            let c = certificate_max(&m, &r, 0.25, &table, &b, &AscentOptions::default()).unwrap();
            let back = m.adjoint(&r).unwrap();
            let start = c.grid.theta(&table.grid);
            let (eta_start, _) = eta_at(&back, 0.25, &start).unwrap();
            assert_relative_eq!(eta_start, c.grid.value, max_relative = 1e-9);
            assert!(c.value >= eta_start);
            assert!(b.contains(&c.theta));
        }
    }

    #[test]
    fn stationary_start_is_kept() {
        let m = model(12);
        let b = bounds(12);
        let theta = AtomParams::new([5.0, 6.0, 7.0], 2.0, 2.0);
        let phi = m.unit_image(&theta).unwrap();
        let table = build_template_table(&m, &TemplateGrid::spanning(&b, 3, 3), &b).unwrap();
        let first = certificate_max(&m, &phi, 1.0, &table, &b, &AscentOptions::default()).unwrap();
        let (again, value) = refine_eta_max(&m, &phi, 1.0, &first.theta, &b, &AscentOptions::default()).unwrap();
        assert!(again.max_abs_diff(&first.theta) < 1e-5);
        assert_relative_eq!(value, first.value, max_relative = 1e-12);
    }

    #[test]
    fn recovers_single_atom_position() {
        let m = model(14);
        let b = bounds(14);
        let table = build_template_table(&m, &TemplateGrid::spanning(&b, 4, 3), &b).unwrap();
        for pos in [[6.3, 7.6, 5.2], [4.0, 9.0, 8.0], [8.45, 5.55, 7.7]] {
            let theta = AtomParams::new(pos, 1.8, 2.0);
            let c = certificate_max(
                &m,
                &m.unit_image(&theta).unwrap(),
                1.0,
                &table,
                &b,
                &AscentOptions::default(),
            )
            .unwrap();
            for a in 0..3 {
                assert!((c.theta.position[a] - pos[a]).abs() < 0.1, "{:?} vs {pos:?}", c.theta);
            }
        }
    }

    #[test]
    fn threshold_boundary_and_strong_atom() {
        let m = model(12);
        let lambda = 0.2;
        let theta = AtomParams::new([5.0, 6.0, 7.0], 2.0, 2.0);
        let phi = m.unit_image(&theta).unwrap();
        let mut r = phi.clone();
        r.scale(lambda / phi.norm_sq());
        // Scale and shape pinned so the boundary value is the global maximum.
        let pinned = DomainBounds::new([0.0; 3], [11.0; 3], (2.0, 2.0 + 1e-9), (2.0, 2.0 + 1e-9)).unwrap();
        let table = build_template_table(&m, &single(2.0, 2.0), &pinned).unwrap();
        let c = certificate_max(&m, &r, lambda, &table, &pinned, &AscentOptions::default()).unwrap();
        // Sampled atoms have a slightly position-dependent norm, so the
        // continuous maximum sits marginally above the on-grid value.
        assert!(c.value >= 1.0 - 1e-12 && c.value < 1.0 + 1e-4, "{}", c.value);
        assert_relative_eq!(
            eta_at(&m.adjoint(&r).unwrap(), lambda, &theta).unwrap().0,
            1.0,
            max_relative = 1e-12
        );

        let w = 2.0;
        assert!(w * phi.norm_sq() > lambda);
        let mut strong = phi;
        strong.scale(w);
        let b = bounds(12);
        let table = build_template_table(&m, &TemplateGrid::spanning(&b, 3, 3), &b).unwrap();
        let c = certificate_max(&m, &strong, lambda, &table, &b, &AscentOptions::default()).unwrap();
        assert!(c.value >= w * m.unit_image(&theta).unwrap().norm_sq() / lambda);
        assert!(c.value > 1.0);
    }
}
