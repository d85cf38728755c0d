//! Synthetic PSF, ground-truth measures and noisy observations.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::forward::ForwardModel;
use crate::measure::{AtomParams, WeightedMeasure};
use crate::volume::{GridGeometry, Volume};

/// Half-width, in standard deviations, a surrogate PSF must fit inside.
const PSF_SUPPORT_SIGMAS: f64 = 2.5;

pub fn psf_support(sigma: f64) -> f64 {
    PSF_SUPPORT_SIGMAS * sigma
}

/// Anisotropic Gaussian elongated along z, origin-centered on the torus and
/// normalized to unit sum. It is rotationally symmetric about the z axis and
/// centro-symmetric.
pub fn surrogate_psf_kernel(geom: GridGeometry, lateral_sigma: f64, axial_sigma: f64) -> Result<Volume> {
    if !(lateral_sigma > 0.0 && axial_sigma >= lateral_sigma) {
        return Err(Error::InvalidParameter(format!(
            "need 0 < lateral <= axial PSF width, got {lateral_sigma} and {axial_sigma}"
        )));
    }
    let [nx, ny, nz] = geom.dims();
    let half = |n: usize| n as f64 / 2.0;
    if psf_support(lateral_sigma) > half(nx).min(half(ny)) || psf_support(axial_sigma) > half(nz) {
        return Err(Error::InvalidParameter(format!(
            "PSF widths ({lateral_sigma}, {axial_sigma}) exceed the grid support {:?}",
            geom.dims()
        )));
    }
    let wrap = |i: usize, n: usize| {
        let d = i as f64;
        if i <= n / 2 {
            d
        } else {
            d - n as f64
        }
    };
    let mut k = Volume::from_fn(geom, |i, j, l| {
        let (x, y, z) = (wrap(i, nx), wrap(j, ny), wrap(l, nz));
        surrogate_profile(x, y, z, lateral_sigma, axial_sigma)
    });
    let sum: f64 = k.data().iter().sum();
    k.scale(1.0 / sum);
    Ok(k)
}

/// Unnormalized continuous surrogate profile.
pub fn surrogate_profile(x: f64, y: f64, z: f64, lateral_sigma: f64, axial_sigma: f64) -> f64 {
    (-(x * x + y * y) / (2.0 * lateral_sigma * lateral_sigma) - z * z / (2.0 * axial_sigma * axial_sigma)).exp()
}

/// Forward model with the surrogate PSF.
pub fn make_surrogate_model(geom: GridGeometry, lateral_sigma: f64, axial_sigma: f64) -> Result<ForwardModel> {
    ForwardModel::new(surrogate_psf_kernel(geom, lateral_sigma, axial_sigma)?)
}

/// Sampling ranges for one ground-truth measure.
#[derive(Clone, Debug, PartialEq)]
pub struct TruthSpec {
    pub size: usize,
    pub count: usize,
    pub margin: f64,
    pub min_separation: f64,
    pub weight_range: (f64, f64),
    pub sigma_range: (f64, f64),
    pub shape_range: (f64, f64),
}

const ATTEMPTS_PER_ATOM: usize = 2_000;
const RESTARTS: usize = 50;

fn periodic_distance(a: &[f64; 3], b: &[f64; 3], n: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| {
            let d = (p - q).abs() % n;
            let d = d.min(n - d);
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// Atoms uniform in the margin-shrunk volume with pairwise periodic
/// separation at least `min_separation`; deterministic given the RNG state.
pub fn gen_ground_truth<R: Rng + ?Sized>(spec: &TruthSpec, rng: &mut R) -> Result<WeightedMeasure> {
    let lo = spec.margin;
    let hi = spec.size as f64 - 1.0 - spec.margin;
    if hi < lo {
        return Err(Error::Sampling(format!(
            "margin {} leaves no room in a volume of size {}",
            spec.margin, spec.size
        )));
    }
    let n = spec.size as f64;
    for _ in 0..RESTARTS {
        let mut positions: Vec<[f64; 3]> = Vec::with_capacity(spec.count);
        'atoms: for _ in 0..spec.count {
            for _ in 0..ATTEMPTS_PER_ATOM {
                let p = [0; 3].map(|_| uniform(rng, (lo, hi)));
                if positions
                    .iter()
                    .all(|q| periodic_distance(&p, q, n) >= spec.min_separation)
                {
                    positions.push(p);
                    continue 'atoms;
                }
            }
            break;
        }
        if positions.len() == spec.count {
            let mut mu = WeightedMeasure::empty();
            for p in positions {
                let sigma = uniform(rng, spec.sigma_range);
                let shape = uniform(rng, spec.shape_range);
                let w = uniform(rng, spec.weight_range);
                mu.push(AtomParams::new(p, sigma, shape), w);
            }
            return Ok(mu);
        }
    }
    Err(Error::Sampling(format!(
        "could not place {} atoms {} voxels apart in a {}^3 volume with margin {}",
        spec.count, spec.min_separation, spec.size, spec.margin
    )))
}

/// `forward(truth)` plus i.i.d. Gaussian noise of standard deviation `noise_sigma`.
pub fn gen_observation<R: Rng + ?Sized>(
    model: &ForwardModel,
    truth: &WeightedMeasure,
    noise_sigma: f64,
    rng: &mut R,
) -> Result<Volume> {
    let clean = model.forward(truth)?;
    add_noise(clean, noise_sigma, rng)
}

pub fn add_noise<R: Rng + ?Sized>(mut v: Volume, noise_sigma: f64, rng: &mut R) -> Result<Volume> {
    if noise_sigma == 0.0 {
        return Ok(v);
    }
    let normal =
        Normal::new(0.0, noise_sigma).map_err(|e| Error::InvalidParameter(format!("noise standard deviation: {e}")))?;
    v.data_mut().iter_mut().for_each(|x| *x += normal.sample(rng));
    Ok(v)
}
