//! Orchestration: model registry, the management cycle, persistence and
//! cost reporting.

mod config;
mod costs;
mod engine;
mod persist;
mod registry;

use thiserror::Error;

pub use config::{
    env_seed, OrcaConfig, ResponseSettings, Scenario, SynthSettings, TargetConfig, Thresholds, TrainingSettings,
    SEED_ENV,
};
pub use costs::{
    benchmark_fleet, benchmark_models, ingest_accounting, report_costs, BenchmarkSizes, CostReport, CostRow,
    IngestReport, BENCH_DEVICES, BENCH_NTS_DIM, BENCH_TS_LEN, NTS_SAMPLE_BYTES, TS_SAMPLE_BYTES,
};
pub use engine::{format_score, normal_dataset, CycleOutputs, CycleReport, Engine, PhaseTimes};
pub use persist::{load_state, save_state, STATE_VERSION};
pub use registry::{register_models, ModelRegistry, RegistryEntry};

use crate::fleet::FleetError;
use crate::models::{ModelError, ModelFamily};
use crate::response::ResponseError;
use crate::synth::SynthError;
use crate::telemetry::{BehaviorLevel, TelemetryError};

#[derive(Debug, Error)]
pub enum ManagerError {
    #[error("config: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("({device_type}, {level}) is registered twice")]
    DuplicateEntry { device_type: String, level: BehaviorLevel },
    #[error("unknown model family `{0}`")]
    UnknownFamily(String),
    #[error("no trained model for ({device_type}, {level})")]
    UntrainedModel { device_type: String, level: BehaviorLevel },
    #[error("cost report needs a {0} model")]
    MissingFamily(ModelFamily),
    #[error("training ({device_type}, {level}) failed: {source}")]
    Training { device_type: String, level: BehaviorLevel, source: Box<ManagerError> },
    #[error("corrupt engine state: {0}")]
    CorruptState(String),
    #[error("engine state version {found}, expected {expected}")]
    StateVersion { found: u32, expected: u32 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Fleet(#[from] FleetError),
    #[error(transparent)]
    Telemetry(#[from] TelemetryError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Response(#[from] ResponseError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ManagerError {
    /// Process exit code: 1 usage or configuration, 2 data, 3 model or state.
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) | Self::DuplicateEntry { .. } | Self::UnknownFamily(_) => 1,
            Self::Fleet(FleetError::BadConfig(_)) => 1,
            Self::Data(_) | Self::Fleet(_) | Self::Telemetry(_) | Self::Io(_) => 2,
            Self::Training { source, .. } => match **source {
                Self::Telemetry(_) | Self::Data(_) => 2,
                _ => 3,
            },
            _ => 3,
        }
    }
}
