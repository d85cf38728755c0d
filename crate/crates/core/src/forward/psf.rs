use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::{Fft3, Spectrum};
use crate::volume::{GridGeometry, Volume};

/// Point spread function on the same grid as the observation.
///
/// The kernel is stored origin-centered with periodic wrap-around: its peak
/// sits at voxel `(0, 0, 0)` and negative offsets live at the far end of each
/// axis. It is normalized to unit sum on construction.
#[derive(Clone, Debug)]
pub struct Psf {
    kernel: Volume,
    spectrum: Spectrum,
}

impl Psf {
    pub fn new(kernel: Volume, fft: &Fft3) -> Result<Self> {
        if kernel.dims() != fft.dims() {
            return Err(Error::DimMismatch {
                expected: fft.dims(),
                got: kernel.dims(),
            });
        }
        let sum: f64 = kernel.data().iter().sum();
        if !(sum.is_finite() && sum > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "PSF kernel sum must be positive, got {sum}"
            )));
        }
        let mut kernel = kernel;
        kernel.scale(1.0 / sum);
        let spectrum = fft.forward_real(&kernel);
        Ok(Self { kernel, spectrum })
    }

    /// Discrete delta at the origin.
    pub fn identity(fft: &Fft3) -> Result<Self> {
        let mut k = Volume::new_zero(fft.dims())?;
        k[0] = 1.0;
        Self::new(k, fft)
    }

    pub fn kernel(&self) -> &Volume {
        &self.kernel
    }

    pub fn spectrum(&self) -> &[Complex64] {
        &self.spectrum
    }

    pub fn geometry(&self) -> GridGeometry {
        self.kernel.geometry()
    }

    /// Circular convolution `H * v` via the frequency domain.
    pub fn convolve(&self, v: &Volume, fft: &Fft3) -> Result<Volume> {
        self.kernel.check_same_dims(v)?;
        let mut s = fft.forward_real(v);
        s.iter_mut().zip(&self.spectrum).for_each(|(a, h)| *a *= h);
        Ok(fft.inverse_real(s, v.geometry()))
    }

    /// Adjoint of [`Psf::convolve`]: circular cross-correlation with `H`.
    pub fn correlate(&self, v: &Volume, fft: &Fft3) -> Result<Volume> {
        self.kernel.check_same_dims(v)?;
        let mut s = fft.forward_real(v);
        s.iter_mut().zip(&self.spectrum).for_each(|(a, h)| *a *= h.conj());
        Ok(fft.inverse_real(s, v.geometry()))
    }
}

/// Free-function form of [`Psf::convolve`].
pub fn convolve_fft(v: &Volume, psf: &Psf, fft: &Fft3) -> Result<Volume> {
    psf.convolve(v, fft)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_volume(g: GridGeometry, rng: &mut ChaCha8Rng) -> Volume {
        Volume::from_fn(g, |_, _, _| rng.random_range(-1.0..1.0))
    }

    /// O(N^2) spatial circular convolution.
    fn direct_convolution(v: &Volume, h: &Volume) -> Volume {
        let g = v.geometry();
        let [nx, ny, nz] = g.dims();
        Volume::from_fn(g, |i, j, k| {
            let mut acc = 0.0;
            for c in 0..nz {
                for b in 0..ny {
                    for a in 0..nx {
                        acc += h.get(a, b, c) * v.get((i + nx - a) % nx, (j + ny - b) % ny, (k + nz - c) % nz);
                    }
                }
            }
            acc
        })
    }

    #[test]
    fn delta_kernel_is_identity() {
        let g = GridGeometry::new([5, 6, 7]).unwrap();
        let fft = Fft3::new(g);
        let psf = Psf::identity(&fft).unwrap();
        let v = random_volume(g, &mut ChaCha8Rng::seed_from_u64(1));
        let out = psf.convolve(&v, &fft).unwrap();
        let scale = v.linf_and_l2_norms().0;
        for (a, b) in out.data().iter().zip(v.data()) {
            assert!((a - b).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn matches_direct_convolution() {
        let g = GridGeometry::cube(8).unwrap();
        let fft = Fft3::new(g);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let v = random_volume(g, &mut rng);
        let kernel = Volume::from_fn(g, |_, _, _| rng.random_range(0.0..1.0));
        let psf = Psf::new(kernel, &fft).unwrap();
        let fast = psf.convolve(&v, &fft).unwrap();
        let slow = direct_convolution(&v, psf.kernel());
        let err = fast.sub(&slow).linf_and_l2_norms().1 / slow.linf_and_l2_norms().1;
        assert!(err < 1e-10, "relative error {err}");
    }

    #[test]
    fn zero_in_zero_out_and_unit_sum() {
        let g = GridGeometry::cube(6).unwrap();
        let fft = Fft3::new(g);
        let psf = Psf::new(Volume::from_fn(g, |i, j, k| (1 + i + j + k) as f64), &fft).unwrap();
        assert!((psf.kernel().data().iter().sum::<f64>() - 1.0).abs() < 1e-14);
        let out = psf.convolve(&Volume::zeros(g), &fft).unwrap();
        assert!(out.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn correlate_is_adjoint() {
        let g = GridGeometry::new([6, 5, 4]).unwrap();
        let fft = Fft3::new(g);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let psf = Psf::new(Volume::from_fn(g, |_, _, _| rng.random_range(0.0..1.0)), &fft).unwrap();
        let a = random_volume(g, &mut rng);
        let b = random_volume(g, &mut rng);
        let lhs = psf.convolve(&a, &fft).unwrap().dot(&b);
        let rhs = a.dot(&psf.correlate(&b, &fft).unwrap());
        assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0));
    }

    #[test]
    fn dim_mismatch() {
        let fft = Fft3::new(GridGeometry::cube(4).unwrap());
        let psf = Psf::identity(&fft).unwrap();
        let other = Volume::new_zero([4, 4, 5]).unwrap();
        assert!(matches!(psf.convolve(&other, &fft), Err(Error::DimMismatch { .. })));
        assert!(Psf::new(other, &fft).is_err());
    }
}
