//! Group-level synthesis: score aggregation, clustering with outlier
//! detection, group insights and resource usage forecasting.

mod cluster;
mod forecast;
mod insights;
mod matrix;

use thiserror::Error;

pub use cluster::{
    choose_k, cluster_and_outliers, find_outliers, kmeans, silhouette, Clustering, KChoice, KMeans, Outlier,
    OutlierReason, OutlierReport, MAX_AUTO_K, MAX_RESTARTS,
};
pub use forecast::{forecast_usage, ForecastSpec, UsageForecast, UsageForecaster, UsageModel};
pub use insights::{
    bin_of, format_insight, group_insights, GroupDefinition, GroupInsight, GroupKind, Histogram, InsightFlag,
    InsightHistory, InsightOptions, BINS,
};
pub use matrix::{build_score_matrix, Cell, ScoreMatrix, ScoreRecord, DEFAULT_WINDOW};

use crate::telemetry::DeviceId;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("clustering needs at least 2 populated devices, have {have}")]
    TooFewDevices { have: usize },
    #[error("group member {0} is not in the score matrix")]
    UnknownDevice(DeviceId),
    #[error("usage history of {have} points is shorter than the required {need}")]
    InsufficientHistory { have: usize, need: usize },
}
