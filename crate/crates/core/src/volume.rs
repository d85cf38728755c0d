//! Dense 3D volumes on a unit-spaced voxel grid, and their binary file format.
//!
//! Linear order is x-fastest: voxel `(i, j, k)` lives at `i + nx * (j + ny * k)`.
//! Voxel `(i, j, k)` has coordinate `(i, j, k)` in the same frame as atom positions.
//!
//! File layout (all little-endian):
//!
//! | offset | size           | content                              |
//! |--------|----------------|--------------------------------------|
//! | 0      | 8              | magic `SFWVOL1\0`                    |
//! | 8      | 12             | `nx`, `ny`, `nz` as `u32`            |
//! | 20     | 8 * nx*ny*nz   | IEEE-754 `f64` samples, x-fastest    |

use std::fs;
use std::ops::{Index, IndexMut};
use std::path::Path;

use crate::error::{Error, Result};

pub const VOLUME_MAGIC: &[u8; 8] = b"SFWVOL1\0";
const HEADER_LEN: usize = 8 + 12;

/// Grid shape and voxel-index arithmetic. Voxel spacing is 1 on every axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct GridGeometry {
    dims: [usize; 3],
}

impl GridGeometry {
    pub fn new(dims: [usize; 3]) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::InvalidDims(dims));
        }
        Ok(Self { dims })
    }

    pub fn cube(n: usize) -> Result<Self> {
        Self::new([n; 3])
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

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.dims[0];
        let rest = idx / self.dims[0];
        [i, rest % self.dims[1], rest / self.dims[1]]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Volume {
    geom: GridGeometry,
    data: Vec<f64>,
}

impl Volume {
    pub fn zeros(geom: GridGeometry) -> Self {
        Self {
            geom,
            data: vec![0.0; geom.len()],
        }
    }

    pub fn new_zero(dims: [usize; 3]) -> Result<Self> {
        Ok(Self::zeros(GridGeometry::new(dims)?))
    }

    pub fn from_vec(geom: GridGeometry, data: Vec<f64>) -> Result<Self> {
        if data.len() != geom.len() {
            return Err(Error::InvalidParameter(format!(
                "volume data length {} does not match {:?}",
                data.len(),
                geom.dims()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("volume data"));
        }
        Ok(Self { geom, data })
    }

    pub fn from_fn(geom: GridGeometry, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let [nx, ny, nz] = geom.dims();
        let mut data = Vec::with_capacity(geom.len());
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    data.push(f(i, j, k));
                }
            }
        }
        Self { geom, data }
    }

    pub fn geometry(&self) -> GridGeometry {
        self.geom
    }

    pub fn dims(&self) -> [usize; 3] {
        self.geom.dims()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.geom.index(i, j, k)]
    }

    pub fn check_same_dims(&self, other: &Volume) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimMismatch {
                expected: self.dims(),
                got: other.dims(),
            });
        }
        Ok(())
    }

    /// `(max |v_i|, sqrt(sum v_i^2))`.
    pub fn linf_and_l2_norms(&self) -> (f64, f64) {
        let linf = self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        (linf, self.norm_sq().sqrt())
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn dot(&self, other: &Volume) -> f64 {
        debug_assert_eq!(self.dims(), other.dims());
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn scale(&mut self, c: f64) {
        self.data.iter_mut().for_each(|v| *v *= c);
    }

    /// `self += c * other`.
    pub fn add_scaled(&mut self, c: f64, other: &Volume) {
        debug_assert_eq!(self.dims(), other.dims());
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += c * b);
    }

    /// `self - other`.
    pub fn sub(&self, other: &Volume) -> Volume {
        debug_assert_eq!(self.dims(), other.dims());
        Volume {
            geom: self.geom,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * self.data.len());
        out.extend_from_slice(VOLUME_MAGIC);
        for n in self.dims() {
            out.extend_from_slice(&(n as u32).to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let header = |reason: &str| Error::MalformedHeader {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        };
        if bytes.len() < HEADER_LEN {
            return Err(header("file shorter than header"));
        }
        if &bytes[..8] != VOLUME_MAGIC {
            return Err(header("bad magic"));
        }
        let mut dims = [0usize; 3];
        for (a, d) in dims.iter_mut().enumerate() {
            let off = 8 + 4 * a;
            *d = u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as usize;
        }
        let geom = GridGeometry::new(dims).map_err(|_| header("zero dimension"))?;
        let expected = geom.len().checked_mul(8).ok_or_else(|| header("dimensions overflow"))?;
        let payload = &bytes[HEADER_LEN..];
        if payload.len() != expected {
            return Err(Error::SizeMismatch {
                path: path.to_path_buf(),
                expected,
                found: payload.len(),
            });
        }
        let data: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("volume file payload"));
        }
        Ok(Self { geom, data })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&fs::read(path)?, path)
    }
}

impl Index<usize> for Volume {
    type Output = f64;
    fn index(&self, idx: usize) -> &f64 {
        &self.data[idx]
    }
}

impl IndexMut<usize> for Volume {
    fn index_mut(&mut self, idx: usize) -> &mut f64 {
        &mut self.data[idx]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_constructor() {
        assert_eq!(Volume::new_zero([2, 2, 2]).unwrap().data(), &[0.0; 8]);
        let big = Volume::new_zero([60, 60, 60]).unwrap();
        assert_eq!(big.data().len(), 216_000);
        assert!(big.data().iter().all(|&v| v == 0.0));
        assert!(matches!(Volume::new_zero([0, 4, 4]), Err(Error::InvalidDims(_))));
    }

    #[test]
    fn norms() {
        let mut v = Volume::new_zero([3, 3, 3]).unwrap();
        assert_eq!(v.linf_and_l2_norms(), (0.0, 0.0));
        v[13] = 3.0;
        assert_eq!(v.linf_and_l2_norms(), (3.0, 3.0));
        let ones = Volume::from_fn(GridGeometry::cube(2).unwrap(), |_, _, _| 1.0);
        assert_eq!(ones.linf_and_l2_norms(), (1.0, 8f64.sqrt()));
    }

    #[test]
    fn index_layout_is_x_fastest() {
        let g = GridGeometry::new([4, 3, 2]).unwrap();
        assert_eq!(g.index(1, 0, 0), 1);
        assert_eq!(g.index(0, 1, 0), 4);
        assert_eq!(g.index(0, 0, 1), 12);
        assert_eq!(g.coords(g.index(3, 2, 1)), [3, 2, 1]);
        let v = Volume::from_fn(g, |i, j, k| (i + 10 * j + 100 * k) as f64);
        assert_eq!(v.get(3, 2, 1), 123.0);
    }

    #[test]
    fn header_format() {
        let g = GridGeometry::cube(60).unwrap();
        let mut bytes = VOLUME_MAGIC.to_vec();
        for _ in 0..3 {
            bytes.extend_from_slice(&60u32.to_le_bytes());
        }
        for idx in 0..g.len() {
            bytes.extend_from_slice(&(idx as f64).to_le_bytes());
        }
        let v = Volume::from_bytes(&bytes, Path::new("mem")).unwrap();
        assert_eq!(v.dims(), [60, 60, 60]);
        assert_eq!(v[12345], 12345.0);
    }

    #[test]
    fn io_errors() {
        let v = Volume::from_fn(GridGeometry::cube(3).unwrap(), |i, j, k| (i * j + k) as f64);
        let bytes = v.to_bytes();
        let p = Path::new("mem");
        assert!(matches!(
            Volume::from_bytes(&bytes[..bytes.len() - 8], p),
            Err(Error::SizeMismatch { .. })
        ));
        assert!(matches!(
            Volume::from_bytes(&bytes[..10], p),
            Err(Error::MalformedHeader { .. })
        ));
        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(matches!(
            Volume::from_bytes(&bad_magic, p),
            Err(Error::MalformedHeader { .. })
        ));
        let mut nan = bytes.clone();
        nan[HEADER_LEN..HEADER_LEN + 8].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(matches!(Volume::from_bytes(&nan, p), Err(Error::NonFinite(_))));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.vol");
        let v = Volume::from_fn(GridGeometry::new([5, 4, 3]).unwrap(), |i, j, k| {
            (i as f64).sin() + 1e-300 * j as f64 - k as f64 / 3.0
        });
        v.write(&path).unwrap();
        assert_eq!(Volume::read(&path).unwrap(), v);
    }

    proptest! {
        #[test]
        fn bytes_round_trip_bit_exact(
            dims in proptest::array::uniform3(1usize..6),
            seed in proptest::collection::vec(proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO, 216),
        ) {
            let g = GridGeometry::new(dims).unwrap();
            let v = Volume::from_vec(g, seed[..g.len()].to_vec()).unwrap();
            let back = Volume::from_bytes(&v.to_bytes(), Path::new("mem")).unwrap();
            prop_assert!(back.data().iter().zip(v.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
            prop_assert_eq!(back.dims(), dims);
        }

        #[test]
        fn norms_vanish_only_on_zero(vals in proptest::collection::vec(-5.0f64..5.0, 8)) {
            let v = Volume::from_vec(GridGeometry::cube(2).unwrap(), vals.clone()).unwrap();
            let (linf, l2) = v.linf_and_l2_norms();
            prop_assert!(linf >= 0.0 && l2 >= 0.0);
            let zero = vals.iter().all(|&x| x == 0.0);
            prop_assert_eq!(linf == 0.0, zero);
            prop_assert_eq!(l2 == 0.0, zero);
        }
    }
}
