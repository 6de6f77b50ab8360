//! Experiment harness behind the `vbnet` binary: dataset assembly, the
//! comparison and cold-start studies, gradient verification, metrics, and
//! deterministic report serialization.

pub mod case_a;
pub mod case_b;
pub mod dataset;
pub mod gradcheck;
pub mod metrics;
pub mod report;

use std::path::PathBuf;
use thiserror::Error;

/// Environment variable overriding the default output directory.
pub const OUT_DIR_ENV: &str = "VBNET_OUT_DIR";

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] vbnet_core::fleet::ConfigError),
    #[error(transparent)]
    Data(#[from] vbnet_core::data::DataError),
    #[error(transparent)]
    Sim(#[from] vbnet_core::thermo::SimError),
    #[error(transparent)]
    Battery(#[from] vbnet_core::battery::BatteryError),
    #[error(transparent)]
    Train(#[from] vbnet_model::TrainError),
    #[error(transparent)]
    Model(#[from] vbnet_model::ModelError),
    #[error(transparent)]
    Checkpoint(#[from] vbnet_autodiff::checkpoint::CheckpointError),
    #[error(transparent)]
    Metric(#[from] metrics::MetricError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("dataset is empty: {days} days cannot fit one {window}-step window")]
    EmptyDataset { days: usize, window: usize },
    #[error("dataset split index {got} does not match manifest value {expected}")]
    SplitMismatch { expected: usize, got: usize },
    #[error("mature fleet must have 3 or 7 units, got {0}")]
    BadMatureCount(usize),
    #[error("no availability ratios given")]
    NoAlphas,
    #[error("availability ratio must lie in (0, 1], got {0}")]
    BadAlpha(f64),
    #[error("unknown model `{0}`: expected vbnet, dense, conv, or recurrent")]
    UnknownModel(String),
    #[error("gradient check failed: max relative error {err:.3e} exceeds {bound:.0e}")]
    GradCheckFailed { err: f64, bound: f64 },
    #[error("no smooth probe point past {tried} initializations (found {found})")]
    NoSmoothPoint { tried: usize, found: usize },
    #[error("no reports under {0}: run case-a or case-b first")]
    NoReports(PathBuf),
}

/// Output directory precedence: explicit flag, then the environment
/// override, then `./out`.
pub fn resolve_out_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}
