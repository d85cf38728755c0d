//! The SFW-vs-BSFW sweep over volume sizes and atom counts.
//!
//! Every trial draws its ground truth and noise from a seed derived from
//! `(seed, size, atoms, repetition)`, so trials are independent of execution
//! order and both algorithms see bit-identical inputs.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::matching::match_atoms;
use super::synth::{add_noise, gen_ground_truth, make_surrogate_model, TruthSpec};
use crate::error::{Error, Result};
use crate::forward::ForwardModel;
use crate::measure::{DomainBounds, WeightedMeasure};
use crate::par;
use crate::solvers::{solve, Algorithm, SolveResult, SolverOptions};
use crate::volume::{GridGeometry, Volume};

/// Written in the first column of every CSV row.
pub const SCHEMA_VERSION: u32 = 1;

pub const RECORDS_FILE: &str = "records.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const MATCHES_FILE: &str = "matches.csv";
pub const CONFIG_FILE: &str = "config.toml";

/// Wall-clock columns are the only ones allowed to differ between runs.
pub fn is_time_column(name: &str) -> bool {
    name.ends_with("_time_s")
}

/// One row per (trial, algorithm). Optional fields are empty when the trial failed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub schema_version: u32,
    pub size: usize,
    pub atoms: usize,
    pub repetition: usize,
    pub trial_seed: u64,
    pub algorithm: Algorithm,
    /// `ok` or `failed`.
    pub status: String,
    pub termination: String,
    pub noise_sigma: Option<f64>,
    pub outer_iterations: Option<usize>,
    pub recovered_atoms: Option<usize>,
    pub initial_criterion: Option<f64>,
    pub final_criterion: Option<f64>,
    pub matched: Option<usize>,
    pub missed: Option<usize>,
    pub spurious: Option<usize>,
    pub max_position_error: Option<f64>,
    pub mean_position_error: Option<f64>,
    pub mean_sigma_error: Option<f64>,
    pub mean_shape_error: Option<f64>,
    pub mean_weight_error: Option<f64>,
    pub error: String,
    pub total_time_s: Option<f64>,
    pub setup_time_s: Option<f64>,
    pub certificate_time_s: Option<f64>,
    pub lasso_time_s: Option<f64>,
    pub descent_time_s: Option<f64>,
}

impl TrialRecord {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

/// Per matched atom of one (trial, algorithm).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchRecord {
    pub schema_version: u32,
    pub size: usize,
    pub atoms: usize,
    pub repetition: usize,
    pub algorithm: Algorithm,
    pub truth_index: usize,
    pub estimate_index: usize,
    pub position_error: f64,
    pub sigma_error: f64,
    pub shape_error: f64,
    pub weight_error: f64,
}

/// Median and quartiles per (size, atoms, algorithm) over successful trials.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub schema_version: u32,
    pub size: usize,
    pub atoms: usize,
    pub algorithm: Algorithm,
    pub trials: usize,
    pub failures: usize,
    pub median_criterion: f64,
    pub q1_criterion: f64,
    pub q3_criterion: f64,
    pub median_recovered_atoms: f64,
    pub median_outer_iterations: f64,
    pub median_total_time_s: f64,
    pub q1_total_time_s: f64,
    pub q3_total_time_s: f64,
}

/// Linear-interpolation quantile of sorted data (`p` in `[0, 1]`).
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let h = p * (n - 1) as f64;
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

/// `(q1, median, q3)`.
pub fn quartiles(values: &[f64]) -> (f64, f64, f64) {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    (quantile(&v, 0.25), quantile(&v, 0.5), quantile(&v, 0.75))
}

pub fn summarize(records: &[TrialRecord]) -> Vec<SummaryRow> {
    let mut keys: Vec<(usize, usize, Algorithm)> = records.iter().map(|r| (r.size, r.atoms, r.algorithm)).collect();
    keys.sort();
    keys.dedup();
    keys.into_iter()
        .map(|(size, atoms, algorithm)| {
            let cell: Vec<&TrialRecord> = records
                .iter()
                .filter(|r| r.size == size && r.atoms == atoms && r.algorithm == algorithm)
                .collect();
            let ok: Vec<&&TrialRecord> = cell.iter().filter(|r| r.is_ok()).collect();
            let column =
                |f: &dyn Fn(&TrialRecord) -> Option<f64>| -> Vec<f64> { ok.iter().filter_map(|r| f(r)).collect() };
            let (q1c, medc, q3c) = quartiles(&column(&|r| r.final_criterion));
            let (q1t, medt, q3t) = quartiles(&column(&|r| r.total_time_s));
            SummaryRow {
                schema_version: SCHEMA_VERSION,
                size,
                atoms,
                algorithm,
                trials: cell.len(),
                failures: cell.len() - ok.len(),
                median_criterion: medc,
                q1_criterion: q1c,
                q3_criterion: q3c,
                median_recovered_atoms: quartiles(&column(&|r| r.recovered_atoms.map(|v| v as f64))).1,
                median_outer_iterations: quartiles(&column(&|r| r.outer_iterations.map(|v| v as f64))).1,
                median_total_time_s: medt,
                q1_total_time_s: q1t,
                q3_total_time_s: q3t,
            }
        })
        .collect()
}

/// SplitMix64 finalizer over the trial coordinates.
pub fn trial_seed(seed: u64, size: usize, atoms: usize, repetition: usize) -> u64 {
    let mut h = seed;
    for v in [size as u64, atoms as u64, repetition as u64] {
        h = h.wrapping_add(v).wrapping_add(0x9E37_79B9_7F4A_7C15);
        h = (h ^ (h >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h ^= h >> 31;
    }
    h
}

pub fn truth_spec(cfg: &ExperimentConfig, size: usize, atoms: usize) -> TruthSpec {
    TruthSpec {
        size,
        count: atoms,
        margin: cfg.truth_margin,
        min_separation: cfg.min_separation,
        weight_range: cfg.truth_weight_range,
        sigma_range: cfg.truth_sigma_range,
        shape_range: cfg.truth_shape_range,
    }
}

/// Solver domain: the whole volume for positions, configured scale and shape ranges.
pub fn solver_bounds(cfg: &ExperimentConfig, size: usize) -> Result<DomainBounds> {
    DomainBounds::for_volume([size; 3], 0.0, cfg.solver_sigma_range, cfg.solver_shape_range)
}

pub fn solver_options(cfg: &ExperimentConfig, atoms: usize) -> SolverOptions {
    let mut o = SolverOptions::new(cfg.lambda).with_expected_atoms(atoms);
    o.grid_sigma_samples = cfg.grid_sigma_samples;
    o.grid_shape_samples = cfg.grid_shape_samples;
    o
}

pub fn make_model(cfg: &ExperimentConfig, size: usize) -> Result<ForwardModel> {
    make_surrogate_model(GridGeometry::cube(size)?, cfg.psf_lateral_sigma, cfg.psf_axial_sigma)
}

/// Ground truth and observation of one trial.
#[derive(Clone, Debug)]
pub struct TrialInput {
    pub size: usize,
    pub atoms: usize,
    pub repetition: usize,
    pub seed: u64,
    pub truth: WeightedMeasure,
    pub y: Volume,
    /// `noise_level` times the noiseless peak.
    pub noise_sigma: f64,
}

pub fn trial_input(
    cfg: &ExperimentConfig,
    model: &ForwardModel,
    size: usize,
    atoms: usize,
    repetition: usize,
) -> Result<TrialInput> {
    let seed = trial_seed(cfg.seed, size, atoms, repetition);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth = gen_ground_truth(&truth_spec(cfg, size, atoms), &mut rng)?;
    let clean = model.forward(&truth)?;
    let noise_sigma = cfg.noise_level * clean.linf_and_l2_norms().0;
    let y = add_noise(clean, noise_sigma, &mut rng)?;
    Ok(TrialInput {
        size,
        atoms,
        repetition,
        seed,
        truth,
        y,
        noise_sigma,
    })
}

/// Everything a per-solve inspection callback may need.
pub struct TrialContext<'a> {
    pub model: &'a ForwardModel,
    pub bounds: &'a DomainBounds,
    pub options: &'a SolverOptions,
    pub input: &'a TrialInput,
}

#[derive(Clone, Debug, Default)]
pub struct BenchReport {
    pub records: Vec<TrialRecord>,
    pub matches: Vec<MatchRecord>,
    pub summary: Vec<SummaryRow>,
}

/// Paths of the files written by [`BenchReport::write`].
#[derive(Clone, Debug)]
pub struct BenchFiles {
    pub records: PathBuf,
    pub summary: PathBuf,
    pub matches: PathBuf,
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<TrialRecord>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for (i, row) in r.deserialize().enumerate() {
        let rec: TrialRecord =
            row.map_err(|e| Error::MalformedCsv(format!("{}: row {}: {e}", path.display(), i + 1)))?;
        if rec.schema_version != SCHEMA_VERSION {
            return Err(Error::MalformedCsv(format!(
                "{}: row {}: schema version {} (expected {SCHEMA_VERSION})",
                path.display(),
                i + 1,
                rec.schema_version
            )));
        }
        out.push(rec);
    }
    Ok(out)
}

impl BenchReport {
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<BenchFiles> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let files = BenchFiles {
            records: dir.join(RECORDS_FILE),
            summary: dir.join(SUMMARY_FILE),
            matches: dir.join(MATCHES_FILE),
        };
        write_csv(&files.records, &self.records)?;
        write_csv(&files.summary, &self.summary)?;
        write_csv(&files.matches, &self.matches)?;
        Ok(files)
    }
}

fn seconds(d: Duration) -> Option<f64> {
    Some(d.as_secs_f64())
}

fn failed_record(
    cfg: &ExperimentConfig,
    size: usize,
    atoms: usize,
    rep: usize,
    alg: Algorithm,
    err: &Error,
) -> TrialRecord {
    TrialRecord {
        schema_version: SCHEMA_VERSION,
        size,
        atoms,
        repetition: rep,
        trial_seed: trial_seed(cfg.seed, size, atoms, rep),
        algorithm: alg,
        status: "failed".into(),
        termination: String::new(),
        noise_sigma: None,
        outer_iterations: None,
        recovered_atoms: None,
        initial_criterion: None,
        final_criterion: None,
        matched: None,
        missed: None,
        spurious: None,
        max_position_error: None,
        mean_position_error: None,
        mean_sigma_error: None,
        mean_shape_error: None,
        mean_weight_error: None,
        error: err.to_string(),
        total_time_s: None,
        setup_time_s: None,
        certificate_time_s: None,
        lasso_time_s: None,
        descent_time_s: None,
    }
}

fn ok_record(
    cfg: &ExperimentConfig,
    input: &TrialInput,
    alg: Algorithm,
    r: &SolveResult,
    matches: &mut Vec<MatchRecord>,
) -> TrialRecord {
    let m = match_atoms(&r.measure, &input.truth, cfg.match_radius);
    matches.extend(m.pairs.iter().map(|p| MatchRecord {
        schema_version: SCHEMA_VERSION,
        size: input.size,
        atoms: input.atoms,
        repetition: input.repetition,
        algorithm: alg,
        truth_index: p.truth_index,
        estimate_index: p.estimate_index,
        position_error: p.position_error,
        sigma_error: p.sigma_error,
        shape_error: p.shape_error,
        weight_error: p.weight_error,
    }));
    let t = &r.trace;
    TrialRecord {
        schema_version: SCHEMA_VERSION,
        size: input.size,
        atoms: input.atoms,
        repetition: input.repetition,
        trial_seed: input.seed,
        algorithm: alg,
        status: "ok".into(),
        termination: r.termination.tag().into(),
        noise_sigma: Some(input.noise_sigma),
        outer_iterations: Some(t.augmentations()),
        recovered_atoms: Some(r.measure.len()),
        initial_criterion: Some(t.initial_criterion),
        final_criterion: Some(r.criterion),
        matched: Some(m.pairs.len()),
        missed: Some(m.missed.len()),
        spurious: Some(m.spurious.len()),
        max_position_error: m.max_position_error(),
        mean_position_error: m.mean_position_error(),
        mean_sigma_error: m.mean_sigma_error(),
        mean_shape_error: m.mean_shape_error(),
        mean_weight_error: m.mean_weight_error(),
        error: String::new(),
        total_time_s: seconds(t.total_time()),
        setup_time_s: seconds(t.setup_time),
        certificate_time_s: seconds(t.certificate_time()),
        lasso_time_s: seconds(t.lasso_time()),
        descent_time_s: seconds(t.descent_time()),
    }
}

const ALGORITHMS: [Algorithm; 2] = [Algorithm::Sfw, Algorithm::Bsfw];

struct SizeSetup {
    size: usize,
    model: ForwardModel,
    bounds: DomainBounds,
}

fn run_trial<F>(
    cfg: &ExperimentConfig,
    setup: &SizeSetup,
    atoms: usize,
    rep: usize,
    inspect: &F,
) -> (Vec<TrialRecord>, Vec<MatchRecord>)
where
    F: Fn(&TrialContext<'_>, Algorithm, &SolveResult) + Sync,
{
    let size = setup.size;
    let mut records = Vec::new();
    let mut matches = Vec::new();
    let input = match trial_input(cfg, &setup.model, size, atoms, rep) {
        Ok(i) => i,
        Err(e) => {
            log::warn!("trial {size}^3 x {atoms} #{rep}: {e}");
            return (
                ALGORITHMS
                    .iter()
                    .map(|&a| failed_record(cfg, size, atoms, rep, a, &e))
                    .collect(),
                matches,
            );
        }
    };
    let options = solver_options(cfg, atoms);
    let ctx = TrialContext {
        model: &setup.model,
        bounds: &setup.bounds,
        options: &options,
        input: &input,
    };
    for alg in ALGORITHMS {
        match solve(alg, &setup.model, &input.y, &options, &setup.bounds) {
            Ok(r) => {
                log::info!(
                    "{size}^3 x {atoms} #{rep} {alg}: {} atoms, C = {:.6e}, {:.3}s ({})",
                    r.measure.len(),
                    r.criterion,
                    r.trace.total_time().as_secs_f64(),
                    r.termination.tag()
                );
                inspect(&ctx, alg, &r);
                records.push(ok_record(cfg, &input, alg, &r, &mut matches));
            }
            Err(e) => {
                log::warn!("{size}^3 x {atoms} #{rep} {alg} failed: {e}");
                records.push(failed_record(cfg, size, atoms, rep, alg, &e));
            }
        }
    }
    (records, matches)
}

pub fn run_benchmark(cfg: &ExperimentConfig) -> Result<BenchReport> {
    run_benchmark_with(cfg, |_, _, _| {})
}

/// Runs the sweep, calling `inspect` after every successful solve. Timed runs
/// are sequential with one discarded warm-up trial per cell; untimed runs
/// spread trials over the worker pool.
pub fn run_benchmark_with<F>(cfg: &ExperimentConfig, inspect: F) -> Result<BenchReport>
where
    F: Fn(&TrialContext<'_>, Algorithm, &SolveResult) + Sync,
{
    cfg.validate()?;
    let setups = cfg
        .sizes
        .iter()
        .map(|&size| {
            Ok(SizeSetup {
                size,
                model: make_model(cfg, size)?,
                bounds: solver_bounds(cfg, size)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut tasks = Vec::new();
    for (si, _) in setups.iter().enumerate() {
        for &atoms in &cfg.atom_counts {
            for rep in 0..cfg.repetitions {
                tasks.push((si, atoms, rep));
            }
        }
    }

    let results: Vec<(Vec<TrialRecord>, Vec<MatchRecord>)> = if cfg.timed {
        let mut out = Vec::with_capacity(tasks.len());
        let mut warmed = None;
        for &(si, atoms, rep) in &tasks {
            let setup = &setups[si];
            if warmed != Some((si, atoms)) {
                log::info!("warm-up for {}^3 x {atoms}", setup.size);
                let _ = run_trial(cfg, setup, atoms, 0, &|_: &TrialContext<'_>, _, _: &SolveResult| {});
                warmed = Some((si, atoms));
            }
            out.push(run_trial(cfg, setup, atoms, rep, &inspect));
        }
        out
    } else {
        par::map(&tasks, |&(si, atoms, rep)| {
            run_trial(cfg, &setups[si], atoms, rep, &inspect)
        })
    };

    let mut report = BenchReport::default();
    for (records, matches) in results {
        report.records.extend(records);
        report.matches.extend(matches);
    }
    report
        .records
        .sort_by_key(|r| (r.size, r.atoms, r.repetition, r.algorithm));
    report.matches.sort_by(|a, b| {
        (a.size, a.atoms, a.repetition, a.algorithm, a.truth_index).cmp(&(
            b.size,
            b.atoms,
            b.repetition,
            b.algorithm,
            b.truth_index,
        ))
    });
    report.summary = summarize(&report.records);
    Ok(report)
}

/// Runs the sweep and writes the CSV files plus a copy of the configuration.
pub fn run_and_write(cfg: &ExperimentConfig) -> Result<(BenchReport, BenchFiles)> {
    let report = run_benchmark(cfg)?;
    let files = report.write(&cfg.output_dir)?;
    fs::write(cfg.output_dir.join(CONFIG_FILE), cfg.to_toml())?;
    Ok((report, files))
}
