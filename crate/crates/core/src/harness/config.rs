use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Benchmark sweep settings. Serialized as TOML, one key per field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Cubic volume edge lengths, in voxels.
    pub sizes: Vec<usize>,
    pub atom_counts: Vec<usize>,
    pub lambda: f64,
    /// Noise standard deviation as a fraction of the noiseless peak of `y`.
    pub noise_level: f64,
    pub repetitions: usize,
    pub seed: u64,
    pub psf_lateral_sigma: f64,
    pub psf_axial_sigma: f64,
    /// Minimum pairwise (periodic) distance between ground-truth atoms.
    pub min_separation: f64,
    /// Distance kept between ground-truth atoms and the volume faces.
    pub truth_margin: f64,
    pub truth_weight_range: (f64, f64),
    pub truth_sigma_range: (f64, f64),
    pub truth_shape_range: (f64, f64),
    pub solver_sigma_range: (f64, f64),
    pub solver_shape_range: (f64, f64),
    pub grid_sigma_samples: usize,
    pub grid_shape_samples: usize,
    /// Radius for matching recovered atoms to ground truth.
    pub match_radius: f64,
    /// Run trials sequentially with a discarded warm-up solve per cell.
    /// When false, trials run concurrently and time columns are not comparable.
    pub timed: bool,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            sizes: vec![60, 80, 100],
            atom_counts: vec![4, 6, 8],
            lambda: 0.2,
            noise_level: 0.01,
            repetitions: 30,
            seed: 0,
            psf_lateral_sigma: 1.0,
            psf_axial_sigma: 3.0,
            min_separation: 12.0,
            truth_margin: 8.0,
            truth_weight_range: (1.0, 3.0),
            truth_sigma_range: (1.5, 4.0),
            truth_shape_range: (1.5, 2.5),
            solver_sigma_range: (1.0, 6.0),
            solver_shape_range: (1.2, 3.0),
            grid_sigma_samples: 8,
            grid_shape_samples: 6,
            match_radius: 3.0,
            timed: true,
            output_dir: PathBuf::from("bench-out"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.sizes.is_empty() || self.atom_counts.is_empty() {
            return fail("sizes and atom_counts must be non-empty".into());
        }
        if self.repetitions == 0 {
            return fail("repetitions must be at least 1".into());
        }
        if !(self.lambda > 0.0) {
            return fail(format!("lambda must be positive, got {}", self.lambda));
        }
        if !(self.noise_level >= 0.0) {
            return fail("noise_level must be non-negative".into());
        }
        if !(self.psf_lateral_sigma > 0.0 && self.psf_axial_sigma >= self.psf_lateral_sigma) {
            return fail("need 0 < psf_lateral_sigma <= psf_axial_sigma".into());
        }
        let support = super::synth::psf_support(self.psf_axial_sigma);
        for &n in &self.sizes {
            if (n as f64) < 2.0 * support {
                return fail(format!("size {n} is below twice the PSF support {support:.1}"));
            }
        }
        for (name, (lo, hi)) in [
            ("truth_weight_range", self.truth_weight_range),
            ("truth_sigma_range", self.truth_sigma_range),
            ("truth_shape_range", self.truth_shape_range),
            ("solver_sigma_range", self.solver_sigma_range),
            ("solver_shape_range", self.solver_shape_range),
        ] {
            if !(lo > 0.0 && lo <= hi) {
                return fail(format!("{name} must satisfy 0 < lo <= hi, got ({lo}, {hi})"));
            }
        }
        if self.truth_sigma_range.0 < self.solver_sigma_range.0
            || self.truth_sigma_range.1 > self.solver_sigma_range.1
            || self.truth_shape_range.0 < self.solver_shape_range.0
            || self.truth_shape_range.1 > self.solver_shape_range.1
        {
            return fail("ground-truth ranges must lie inside the solver domain".into());
        }
        if self.grid_sigma_samples == 0 || self.grid_shape_samples == 0 {
            return fail("grid sample counts must be positive".into());
        }
        if !(self.match_radius > 0.0) || self.min_separation < 0.0 || self.truth_margin < 0.0 {
            return fail("match_radius must be positive; separation and margin non-negative".into());
        }
        Ok(())
    }
}
