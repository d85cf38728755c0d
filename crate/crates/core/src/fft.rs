//! Separable 3D complex FFT over x-fastest volumes, backed by rustfft.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::par;
use crate::volume::{GridGeometry, Volume};

pub type Spectrum = Vec<Complex64>;

pub struct Fft3 {
    dims: [usize; 3],
    forward: [Arc<dyn Fft<f64>>; 3],
    inverse: [Arc<dyn Fft<f64>>; 3],
}

impl std::fmt::Debug for Fft3 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft3").field("dims", &self.dims).finish()
    }
}

impl Fft3 {
    pub fn new(geom: GridGeometry) -> Self {
        let dims = geom.dims();
        let mut planner = FftPlanner::new();
        let forward = dims.map(|n| planner.plan_fft_forward(n));
        let inverse = dims.map(|n| planner.plan_fft_inverse(n));
        Self { dims, forward, inverse }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Unnormalized forward transform, in place.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.transform(data, &self.forward);
    }

    /// Inverse transform scaled by `1/N`, so `inverse(forward(x)) == x`.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.transform(data, &self.inverse);
        let scale = 1.0 / self.len() as f64;
        data.iter_mut().for_each(|c| *c *= scale);
    }

    pub fn forward_real(&self, v: &Volume) -> Spectrum {
        debug_assert_eq!(v.dims(), self.dims);
        let mut buf: Spectrum = v.data().iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.forward(&mut buf);
        buf
    }

    /// Inverse transform keeping only the real part.
    pub fn inverse_real(&self, mut spectrum: Spectrum, geom: GridGeometry) -> Volume {
        self.inverse(&mut spectrum);
        let data = spectrum.into_iter().map(|c| c.re).collect();
        Volume::from_vec(geom, data).expect("inverse transform produced non-finite values")
    }

    fn transform(&self, data: &mut [Complex64], plans: &[Arc<dyn Fft<f64>>; 3]) {
        let [nx, ny, nz] = self.dims;
        assert_eq!(data.len(), nx * ny * nz);
        let slab = nx * ny;

        // x: contiguous lines, processed one z-slab at a time.
        if nx > 1 {
            par::for_each_chunk(data, slab, |_, s| plans[0].process(s));
        }

        // y: transpose each slab so y is contiguous.
        if ny > 1 {
            par::for_each_chunk(data, slab, |_, s| {
                let mut t = vec![Complex64::default(); slab];
                for j in 0..ny {
                    for i in 0..nx {
                        t[j + ny * i] = s[i + nx * j];
                    }
                }
                plans[1].process(&mut t);
                for j in 0..ny {
                    for i in 0..nx {
                        s[i + nx * j] = t[j + ny * i];
                    }
                }
            });
        }

        // z: gather into a z-fastest buffer, one y-plane per chunk.
        if nz > 1 {
            let plane = nz * nx;
            let mut t = vec![Complex64::default(); data.len()];
            {
                let src = &*data;
                par::for_each_chunk(&mut t, plane, |j, c| {
                    for i in 0..nx {
                        for k in 0..nz {
                            c[k + nz * i] = src[i + nx * (j + ny * k)];
                        }
                    }
                });
            }
            par::for_each_chunk(&mut t, plane, |_, c| plans[2].process(c));
            let src = &t;
            par::for_each_chunk(data, slab, |k, s| {
                for j in 0..ny {
                    for i in 0..nx {
                        s[i + nx * j] = src[k + nz * (i + nx * j)];
                    }
                }
            });
        }
    }
}
