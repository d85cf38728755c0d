//! Atoms, non-negative Dirac measures over atom parameters, and the box
//! domain that every atom must live in.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Number of continuous parameters of one atom: position (3), scale, shape.
pub const ATOM_PARAMS: usize = 5;

/// Box constraints on atom parameters. Positions are voxel-space coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainBounds {
    pub lower: [f64; 3],
    pub upper: [f64; 3],
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub shape_min: f64,
    pub shape_max: f64,
}

impl DomainBounds {
    /// Validates the box. The shape exponent is required to stay strictly
    /// above 1 so the atom profile is differentiable at its center.
    pub fn new(lower: [f64; 3], upper: [f64; 3], sigma: (f64, f64), shape: (f64, f64)) -> Result<Self> {
        let b = Self {
            lower,
            upper,
            sigma_min: sigma.0,
            sigma_max: sigma.1,
            shape_min: shape.0,
            shape_max: shape.1,
        };
        b.validate()?;
        Ok(b)
    }

    /// Domain covering a whole volume of `dims` voxels (positions in
    /// `[margin, n - 1 - margin]` per axis).
    pub fn for_volume(dims: [usize; 3], margin: f64, sigma: (f64, f64), shape: (f64, f64)) -> Result<Self> {
        let lower = [margin; 3];
        let upper = [
            dims[0] as f64 - 1.0 - margin,
            dims[1] as f64 - 1.0 - margin,
            dims[2] as f64 - 1.0 - margin,
        ];
        Self::new(lower, upper, sigma, shape)
    }

    fn validate(&self) -> Result<()> {
        let all = self.lower.iter().chain(&self.upper).chain([
            &self.sigma_min,
            &self.sigma_max,
            &self.shape_min,
            &self.shape_max,
        ]);
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidBounds("non-finite bound".into()));
        }
        for axis in 0..3 {
            if self.lower[axis] >= self.upper[axis] {
                return Err(Error::InvalidBounds(format!(
                    "position axis {axis}: lower {} >= upper {}",
                    self.lower[axis], self.upper[axis]
                )));
            }
        }
        if !(0.0 < self.sigma_min && self.sigma_min < self.sigma_max) {
            return Err(Error::InvalidBounds(format!(
                "need 0 < sigma_min < sigma_max, got [{}, {}]",
                self.sigma_min, self.sigma_max
            )));
        }
        if !(1.0 < self.shape_min && self.shape_min < self.shape_max) {
            return Err(Error::InvalidBounds(format!(
                "need 1 < shape_min < shape_max, got [{}, {}]",
                self.shape_min, self.shape_max
            )));
        }
        Ok(())
    }

    pub fn contains(&self, theta: &AtomParams) -> bool {
        (0..3).all(|a| self.lower[a] <= theta.position[a] && theta.position[a] <= self.upper[a])
            && self.sigma_min <= theta.sigma
            && theta.sigma <= self.sigma_max
            && self.shape_min <= theta.shape
            && theta.shape <= self.shape_max
    }

    /// Lower and upper bounds in the packed `[m_x, m_y, m_z, sigma, d]` layout.
    pub fn packed(&self) -> ([f64; ATOM_PARAMS], [f64; ATOM_PARAMS]) {
        (
            [
                self.lower[0],
                self.lower[1],
                self.lower[2],
                self.sigma_min,
                self.shape_min,
            ],
            [
                self.upper[0],
                self.upper[1],
                self.upper[2],
                self.sigma_max,
                self.shape_max,
            ],
        )
    }
}

/// Continuous parameters of one generalized isotropic Gaussian atom.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AtomParams {
    pub position: [f64; 3],
    pub sigma: f64,
    /// Exponent `d` of the generalized Gaussian profile.
    pub shape: f64,
}

impl AtomParams {
    pub fn new(position: [f64; 3], sigma: f64, shape: f64) -> Self {
        Self { position, sigma, shape }
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite()) && self.sigma.is_finite() && self.shape.is_finite()
    }

    pub fn packed(&self) -> [f64; ATOM_PARAMS] {
        [
            self.position[0],
            self.position[1],
            self.position[2],
            self.sigma,
            self.shape,
        ]
    }

    pub fn from_packed(p: &[f64]) -> Self {
        Self::new([p[0], p[1], p[2]], p[3], p[4])
    }

    /// Projects every component onto its interval in `bounds`.
    pub fn clamp_to_domain(&self, bounds: &DomainBounds) -> Self {
        let mut position = self.position;
        for (a, p) in position.iter_mut().enumerate() {
            *p = p.clamp(bounds.lower[a], bounds.upper[a]);
        }
        Self {
            position,
            sigma: self.sigma.clamp(bounds.sigma_min, bounds.sigma_max),
            shape: self.shape.clamp(bounds.shape_min, bounds.shape_max),
        }
    }

    /// Largest absolute component-wise difference.
    pub fn max_abs_diff(&self, other: &AtomParams) -> f64 {
        self.packed()
            .iter()
            .zip(other.packed())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightedAtom {
    pub theta: AtomParams,
    pub weight: f64,
}

/// Finite non-negative Dirac sum `sum_n w_n delta_{theta_n}`. Insertion
/// order is preserved by every operation.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WeightedMeasure {
    atoms: Vec<WeightedAtom>,
}

impl WeightedMeasure {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn new(atoms: Vec<WeightedAtom>) -> Result<Self> {
        for (i, a) in atoms.iter().enumerate() {
            if !(a.weight.is_finite() && a.weight >= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "atom {i}: weight must be finite and non-negative, got {}",
                    a.weight
                )));
            }
            if !a.theta.is_finite() {
                return Err(Error::NonFinite("atom parameters"));
            }
        }
        Ok(Self { atoms })
    }

    pub fn from_parts(thetas: &[AtomParams], weights: &[f64]) -> Result<Self> {
        if thetas.len() != weights.len() {
            return Err(Error::InvalidParameter(format!(
                "{} atoms but {} weights",
                thetas.len(),
                weights.len()
            )));
        }
        Self::new(
            thetas
                .iter()
                .zip(weights)
                .map(|(&theta, &weight)| WeightedAtom { theta, weight })
                .collect(),
        )
    }

    pub fn atoms(&self) -> &[WeightedAtom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn thetas(&self) -> Vec<AtomParams> {
        self.atoms.iter().map(|a| a.theta).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.atoms.iter().map(|a| a.weight).collect()
    }

    /// Appends an atom. Panics on a negative or non-finite weight.
    pub fn push(&mut self, theta: AtomParams, weight: f64) {
        assert!(weight.is_finite() && weight >= 0.0, "weight must be non-negative");
        self.atoms.push(WeightedAtom { theta, weight });
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum()
    }

    pub fn max_weight(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).fold(0.0, f64::max)
    }

    /// Drops every atom whose weight is `<= tol`, keeping survivors in order.
    pub fn prune_zero_weights(&self, tol: f64) -> Self {
        Self {
            atoms: self.atoms.iter().copied().filter(|a| a.weight > tol).collect(),
        }
    }

    /// Relative pruning threshold `rel * max weight`.
    pub fn relative_tolerance(&self, rel: f64) -> f64 {
        rel * self.max_weight()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# w,m_x,m_y,m_z,sigma,d\n");
        for a in &self.atoms {
            let t = &a.theta;
            // `{}` on f64 prints the shortest string that parses back exactly.
            writeln!(
                out,
                "{},{},{},{},{},{}",
                a.weight, t.position[0], t.position[1], t.position[2], t.sigma, t.shape
            )
            .unwrap();
        }
        out
    }

    pub fn parse_text(text: &str, path: &Path) -> Result<Self> {
        let mut atoms = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |reason: String| Error::MalformedMeasure {
                path: path.to_path_buf(),
                line: idx + 1,
                reason,
            };
            let fields = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| bad(e.to_string()))?;
            if fields.len() != 6 {
                return Err(bad(format!("expected 6 fields, found {}", fields.len())));
            }
            if fields.iter().any(|v| !v.is_finite()) {
                return Err(bad("non-finite value".into()));
            }
            if fields[0] < 0.0 {
                return Err(bad("negative weight".into()));
            }
            atoms.push(WeightedAtom {
                weight: fields[0],
                theta: AtomParams::new([fields[1], fields[2], fields[3]], fields[4], fields[5]),
            });
        }
        Ok(Self { atoms })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse_text(&fs::read_to_string(path)?, path)
    }
}

impl FromIterator<WeightedAtom> for WeightedMeasure {
    fn from_iter<I: IntoIterator<Item = WeightedAtom>>(iter: I) -> Self {
        let atoms: Vec<_> = iter.into_iter().collect();
        assert!(atoms.iter().all(|a| a.weight >= 0.0), "weights must be non-negative");
        Self { atoms }
    }
}
