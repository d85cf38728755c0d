use std::fmt;
use std::io::Write;
use std::time::Duration;

use serde::Serialize;

use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Sfw,
    Bsfw,
}

impl Algorithm {
    pub fn tag(self) -> &'static str {
        match self {
            Algorithm::Sfw => "sfw",
            Algorithm::Bsfw => "bsfw",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "sfw" => Ok(Algorithm::Sfw),
            "bsfw" => Ok(Algorithm::Bsfw),
            other => Err(format!("unknown algorithm `{other}` (expected sfw or bsfw)")),
        }
    }
}

/// Which sub-step produced a recorded criterion value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Step {
    Lasso,
    Descent,
    Prune,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CriterionSample {
    pub step: Step,
    pub value: f64,
}

/// One outer iteration: a certificate evaluation and, if the certificate
/// exceeded the threshold (or BSFW finished), the sub-steps that followed.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub eta_max: f64,
    pub eta_grid_max: f64,
    /// Whether a new atom was appended in this iteration.
    pub augmented: bool,
    pub atoms: usize,
    pub samples: Vec<CriterionSample>,
    pub certificate_time: Duration,
    pub lasso_time: Duration,
    pub descent_time: Duration,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveTrace {
    pub algorithm: Algorithm,
    /// Criterion of the zero measure, `1/2 ||y||^2`.
    pub initial_criterion: f64,
    pub setup_time: Duration,
    pub iterations: Vec<IterationRecord>,
}

impl SolveTrace {
    pub fn new(algorithm: Algorithm, initial_criterion: f64) -> Self {
        Self {
            algorithm,
            initial_criterion,
            setup_time: Duration::ZERO,
            iterations: Vec::new(),
        }
    }

    /// Number of iterations that appended an atom.
    pub fn augmentations(&self) -> usize {
        self.iterations.iter().filter(|r| r.augmented).count()
    }

    pub fn certificate_time(&self) -> Duration {
        self.iterations.iter().map(|r| r.certificate_time).sum()
    }

    pub fn lasso_time(&self) -> Duration {
        self.iterations.iter().map(|r| r.lasso_time).sum()
    }

    pub fn descent_time(&self) -> Duration {
        self.iterations.iter().map(|r| r.descent_time).sum()
    }

    pub fn total_time(&self) -> Duration {
        self.setup_time + self.certificate_time() + self.lasso_time() + self.descent_time()
    }

    /// Writes one CSV row per recorded criterion sample.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "algorithm",
            "iteration",
            "eta_max",
            "eta_grid_max",
            "augmented",
            "atoms",
            "step",
            "criterion",
            "certificate_s",
            "lasso_s",
            "descent_s",
        ])?;
        w.write_record([
            self.algorithm.tag(),
            "0",
            "",
            "",
            "false",
            "0",
            "init",
            &self.initial_criterion.to_string(),
            "0",
            "0",
            "0",
        ])?;
        for r in &self.iterations {
            let steps: Vec<(String, String)> = if r.samples.is_empty() {
                vec![(String::new(), String::new())]
            } else {
                r.samples
                    .iter()
                    .map(|s| (format!("{:?}", s.step).to_lowercase(), s.value.to_string()))
                    .collect()
            };
            for (step, value) in steps {
                w.write_record([
                    self.algorithm.tag().to_string(),
                    r.iteration.to_string(),
                    r.eta_max.to_string(),
                    r.eta_grid_max.to_string(),
                    r.augmented.to_string(),
                    r.atoms.to_string(),
                    step,
                    value,
                    r.certificate_time.as_secs_f64().to_string(),
                    r.lasso_time.as_secs_f64().to_string(),
                    r.descent_time.as_secs_f64().to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// A recorded criterion value that exceeded its predecessor.
#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub iteration: usize,
    pub step: Step,
    pub previous: f64,
    pub value: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AuditReport {
    pub violations: Vec<Violation>,
    pub samples_checked: usize,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Relative slack for floating-point noise in the monotonicity audit.
pub const AUDIT_RELATIVE_SLACK: f64 = 1e-9;

/// Checks that the criterion never increases along the recorded path,
/// starting from the zero measure.
pub fn criterion_path_audit(trace: &SolveTrace) -> AuditReport {
    let mut report = AuditReport::default();
    let mut previous = trace.initial_criterion;
    for r in &trace.iterations {
        for s in &r.samples {
            report.samples_checked += 1;
            if s.value > previous + AUDIT_RELATIVE_SLACK * previous.abs().max(1.0) || !s.value.is_finite() {
                report.violations.push(Violation {
                    iteration: r.iteration,
                    step: s.step,
                    previous,
                    value: s.value,
                });
            }
            previous = s.value;
        }
    }
    report
}
