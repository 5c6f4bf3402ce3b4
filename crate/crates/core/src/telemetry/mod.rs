//! Telemetry data types, data-quality improvement and windowing.

mod clean;
mod ljung_box;
pub mod log;
mod types;
mod window;

use thiserror::Error;

pub use clean::{
    clean_dataset, clean_with_stats, prepare_sample, validate_sample, CleanReport, RejectReason, Validation,
    DEFAULT_MISSING_LIMIT,
};
pub use ljung_box::{ljung_box, time_dependency_score, TimeDependency, MAX_TABLE_LAG};
pub use types::{
    dimensionality, BehaviorLevel, Dataset, DeviceId, FeatureSchema, NormStats, Sample, SequenceSample, TelemetrySample,
};
pub use window::{windowize, Series};

#[derive(Debug, Error)]
pub enum TelemetryError {
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("every sample was dropped during cleaning")]
    EmptyAfterCleaning,
    #[error("series of length {len} is shorter than window {win}")]
    SeriesTooShort { len: usize, win: usize },
    #[error("need at least {need} points, have {have}")]
    TooFewPoints { have: usize, need: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("telemetry parse error: {0}")]
    Parse(String),
}
