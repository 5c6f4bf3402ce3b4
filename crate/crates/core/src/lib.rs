//! Owner-centric edge-IoT management engine.
//!
//! The engine runs one management cycle per simulated minute:
//!
//! 1. **observe**: every telemetry sample is cleaned and scored by the
//!    one-class behavior model registered for its `(device type, level)`;
//! 2. **synthesize**: scores are aggregated into a [`synth::ScoreMatrix`],
//!    clustered for outliers and summarized into group insights, while
//!    per-subsystem resource usage is forecast;
//! 3. **respond**: outliers are forecast with online ARIMA to build a
//!    predictive-maintenance list, and shared edge capacity is allocated by a
//!    two-stage online learner maximizing a QoE model.
//!
//! [`fleet`] provides a deterministic heterogeneous device simulator with
//! fault injection and ground truth; [`manager`] ties everything together.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod fleet;
pub mod manager;
pub mod models;
pub mod response;
pub mod rng;
pub mod synth;
pub mod telemetry;

pub use fleet::{Fleet, FleetConfig};
pub use manager::{CycleReport, Engine, ModelRegistry, OrcaConfig};
pub use models::{AnomalyScore, ModelFamily, ModelSpec, TrainedModel};
pub use telemetry::{BehaviorLevel, Dataset, DeviceId, FeatureSchema, Sample};
