//! Experiment runner for the active clustering library: sweeps over
//! synthetic hierarchical instances, per-trial and summary CSVs, and
//! log-log slope fits.

pub mod config;
pub mod error;
pub mod runner;
pub mod summary;

pub use config::{AlgorithmKind, ExperimentConfig, ExperimentKind, GridPoint};
pub use error::CliError;
pub use runner::{run_experiment, run_single, run_trials, trial_seed, TrialRecord};
pub use summary::{fit_loglog_slope, loglog_slope, noise_threshold, SlopeFit, SlopeY, SummaryRow};
