//! Generalized isotropic Gaussian atoms on the periodic voxel grid and their
//! closed-form parameter derivatives.
//!
//! The unit atom is `G(s) = exp(-|m - s|^d / (2 sigma^d))`. Displacements use
//! the minimum-image convention on the torus, which makes a rendered atom at an
//! integer position an exact circular shift of the same atom at the origin.
//! Samples where the unit atom is below [`TAIL_CUTOFF`] are skipped.

use crate::error::{Error, Result};
use crate::measure::AtomParams;
use crate::volume::{GridGeometry, Volume};

pub const TAIL_CUTOFF: f64 = 1e-12;

/// Distance beyond which the unit atom falls below [`TAIL_CUTOFF`].
pub fn support_radius(sigma: f64, shape: f64) -> f64 {
    sigma * (2.0 * (1.0 / TAIL_CUTOFF).ln()).powf(1.0 / shape)
}

#[derive(Clone, Debug)]
struct AxisSpan {
    index: Vec<usize>,
    offset: Vec<f64>,
}

impl AxisSpan {
    fn new(n: usize, center: f64, radius: f64) -> Self {
        let nf = n as f64;
        if 2.0 * radius + 1.0 >= nf {
            let offset = (0..n)
                .map(|i| {
                    let dx = i as f64 - center;
                    dx - nf * (dx / nf).round()
                })
                .collect();
            Self {
                index: (0..n).collect(),
                offset,
            }
        } else {
            let lo = (center - radius).ceil() as i64;
            let hi = (center + radius).floor() as i64;
            let cap = (hi - lo + 1).max(0) as usize;
            let mut index = Vec::with_capacity(cap);
            let mut offset = Vec::with_capacity(cap);
            for i in lo..=hi {
                index.push(i.rem_euclid(n as i64) as usize);
                offset.push(i as f64 - center);
            }
            Self { index, offset }
        }
    }
}

/// The truncated box of voxels an atom touches, with per-axis displacements
/// `s - m`.
#[derive(Clone, Debug)]
pub struct Footprint {
    axes: [AxisSpan; 3],
    radius_sq: f64,
    geom: GridGeometry,
}

impl Footprint {
    pub fn new(theta: &AtomParams, geom: GridGeometry) -> Result<Self> {
        validate(theta)?;
        let r = support_radius(theta.sigma, theta.shape);
        let dims = geom.dims();
        let axes = [0, 1, 2].map(|a| AxisSpan::new(dims[a], theta.position[a], r));
        Ok(Self {
            axes,
            radius_sq: r * r,
            geom,
        })
    }

    /// Voxels in the bounding box, an upper bound on the visited count.
    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.index.len()).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Visits `(linear index, squared distance, displacement)` in box order,
    /// skipping box corners outside the support sphere.
    #[inline]
    fn for_each(&self, mut f: impl FnMut(usize, f64, [f64; 3])) {
        let [ax, ay, az] = &self.axes;
        for (&k, &dz) in az.index.iter().zip(&az.offset) {
            for (&j, &dy) in ay.index.iter().zip(&ay.offset) {
                let row = self.geom.index(0, j, k);
                let dyz = dy * dy + dz * dz;
                if dyz > self.radius_sq {
                    continue;
                }
                for (&i, &dx) in ax.index.iter().zip(&ax.offset) {
                    let rho2 = dx * dx + dyz;
                    if rho2 <= self.radius_sq {
                        f(row + i, rho2, [dx, dy, dz]);
                    }
                }
            }
        }
    }
}

fn validate(theta: &AtomParams) -> Result<()> {
    if !theta.is_finite() {
        return Err(Error::NonFinite("atom parameters"));
    }
    if theta.sigma <= 0.0 || theta.shape <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "atom scale and shape must be positive, got sigma={} d={}",
            theta.sigma, theta.shape
        )));
    }
    Ok(())
}

/// `u = rho^d / (2 sigma^d)` from the squared distance.
#[inline]
fn half_power(rho2: f64, shape: f64, ln_sigma: f64) -> f64 {
    if rho2 == 0.0 {
        0.0
    } else {
        0.5 * (shape * (0.5 * rho2.ln() - ln_sigma)).exp()
    }
}

/// Sampled unit atom restricted to its footprint.
#[derive(Clone, Debug)]
pub struct AtomPatch {
    footprint: Footprint,
    values: Vec<f64>,
}

impl AtomPatch {
    pub fn new(theta: &AtomParams, geom: GridGeometry) -> Result<Self> {
        let footprint = Footprint::new(theta, geom)?;
        let ln_sigma = theta.sigma.ln();
        let mut values = Vec::with_capacity(footprint.len());
        footprint.for_each(|_, rho2, _| values.push((-half_power(rho2, theta.shape, ln_sigma)).exp()));
        Ok(Self { footprint, values })
    }

    /// `vol += scale * G`.
    pub fn add_to(&self, vol: &mut Volume, scale: f64) {
        debug_assert_eq!(vol.geometry(), self.footprint.geom);
        let data = vol.data_mut();
        let mut it = self.values.iter();
        self.footprint.for_each(|idx, _, _| {
            data[idx] += scale * it.next().unwrap();
        });
    }
}

/// `w * G(theta)` sampled on the grid.
pub fn render_atom(theta: &AtomParams, weight: f64, geom: GridGeometry) -> Result<Volume> {
    if !weight.is_finite() {
        return Err(Error::NonFinite("atom weight"));
    }
    let mut v = Volume::zeros(geom);
    AtomPatch::new(theta, geom)?.add_to(&mut v, weight);
    Ok(v)
}

/// Inner products of `field` with the unit atom and its derivatives:
/// `[<G, f>, <dG/dm_x, f>, <dG/dm_y, f>, <dG/dm_z, f>, <dG/dsigma, f>, <dG/dd, f>]`.
///
/// With `u = rho^d / (2 sigma^d)` and `t = rho / sigma`:
/// `dG/dm = G d u (s - m) / rho^2`, `dG/dsigma = G d u / sigma`,
/// `dG/dd = -G u ln t`. The removable singularities at `rho = 0` are set to 0.
pub fn atom_moments(theta: &AtomParams, field: &Volume) -> Result<[f64; 6]> {
    let footprint = Footprint::new(theta, field.geometry())?;
    let d = theta.shape;
    let sigma = theta.sigma;
    let ln_sigma = sigma.ln();
    let data = field.data();
    let mut acc = [0.0; 6];
    footprint.for_each(|idx, rho2, disp| {
        let f = data[idx];
        if rho2 == 0.0 {
            acc[0] += f;
            return;
        }
        let ln_t = 0.5 * rho2.ln() - ln_sigma;
        let u = 0.5 * (d * ln_t).exp();
        let g = (-u).exp();
        let gf = g * f;
        acc[0] += gf;
        let radial = gf * d * u / rho2;
        acc[1] += radial * disp[0];
        acc[2] += radial * disp[1];
        acc[3] += radial * disp[2];
        acc[4] += gf * d * u / sigma;
        acc[5] -= gf * u * ln_t;
    });
    if acc.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("atom derivative moments"));
    }
    Ok(acc)
}

/// Continuous unit-atom profile at displacement `s - m`.
pub fn unit_profile(disp: [f64; 3], sigma: f64, shape: f64) -> f64 {
    let rho2 = disp.iter().map(|x| x * x).sum::<f64>();
    (-half_power(rho2, shape, sigma.ln())).exp()
}
