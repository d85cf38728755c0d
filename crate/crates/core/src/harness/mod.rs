//! Synthetic experiments: ground truth and observation generation, the
//! SFW-vs-BSFW benchmark sweep, atom matching, CSV reports and plots.

pub mod bench;
pub mod config;
pub mod matching;
pub mod plot;
pub mod synth;

pub use bench::{run_benchmark, BenchReport, TrialRecord};
pub use config::ExperimentConfig;
pub use matching::{match_atoms, MatchReport};
pub use plot::emit_plots;
