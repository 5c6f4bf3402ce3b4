use serde::{Deserialize, Serialize};

use crate::telemetry::{BehaviorLevel, FeatureSchema, TelemetryError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Intensity {
    Low,
    Medium,
    High,
}

/// Parameters of a behavior target's normal-regime distribution.
///
/// Vectors: `x = mean + W z + noise_std * e` with `z ~ N(0, I_latent)`;
/// the covariance `W W^T + noise_std^2 I` is fixed by `structure_seed`.
/// Sequences add a sinusoid of `period` points and drive `z` as an AR(1)
/// process with coefficient `latent_ar`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    pub latent_dim: usize,
    pub loading_scale: f64,
    pub noise_std: f64,
    pub mean_spread: f64,
    pub amplitude: f64,
    pub period: f64,
    pub latent_ar: f64,
    pub structure_seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            latent_dim: 3,
            loading_scale: 1.0,
            noise_std: 0.3,
            mean_spread: 2.0,
            amplitude: 1.0,
            period: 45.0,
            latent_ar: 0.7,
            structure_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmitConfig {
    pub level: BehaviorLevel,
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub names: Option<Vec<String>>,
    /// Present for time-series targets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seq_len: Option<usize>,
    #[serde(default)]
    pub baseline: BaselineConfig,
}

impl EmitConfig {
    pub fn schema(&self) -> Result<FeatureSchema, TelemetryError> {
        match &self.names {
            Some(names) => {
                if names.len() != self.dim {
                    return Err(TelemetryError::InvalidSchema(format!(
                        "{} names given for dim {}",
                        names.len(),
                        self.dim
                    )));
                }
                match self.seq_len {
                    Some(l) => FeatureSchema::sequence(self.level, names.clone(), l),
                    None => FeatureSchema::vector(self.level, names.clone()),
                }
            }
            None => FeatureSchema::anonymous(self.level, self.dim, self.seq_len),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceTypeConfig {
    pub name: String,
    pub count: usize,
    /// 1 (highest) to 4 (lowest).
    pub priority: u8,
    #[serde(default = "medium")]
    pub compute_intensity: Intensity,
    #[serde(default = "medium")]
    pub data_intensity: Intensity,
    #[serde(default = "medium")]
    pub latency_sensitivity: Intensity,
    pub subsystem: String,
    /// Resource units requested per device per tick under normal load.
    #[serde(default = "one")]
    pub base_demand: f64,
    pub emits: Vec<EmitConfig>,
}

fn medium() -> Intensity {
    Intensity::Medium
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetConfig {
    pub device_types: Vec<DeviceTypeConfig>,
    #[serde(default = "default_groups")]
    pub locations: usize,
    #[serde(default = "default_groups")]
    pub batches: usize,
    /// Ticks between time-series emissions.
    #[serde(default = "default_ts_cadence")]
    pub ts_cadence: u64,
    #[serde(default = "default_demand_period")]
    pub demand_period: f64,
    #[serde(default = "default_demand_amplitude")]
    pub demand_amplitude: f64,
    #[serde(default = "default_demand_noise")]
    pub demand_noise: f64,
}

fn default_groups() -> usize {
    4
}
fn default_ts_cadence() -> u64 {
    30
}
fn default_demand_period() -> f64 {
    60.0
}
fn default_demand_amplitude() -> f64 {
    0.2
}
fn default_demand_noise() -> f64 {
    0.03
}

impl FleetConfig {
    pub fn new(device_types: Vec<DeviceTypeConfig>) -> Self {
        Self {
            device_types,
            locations: default_groups(),
            batches: default_groups(),
            ts_cadence: default_ts_cadence(),
            demand_period: default_demand_period(),
            demand_amplitude: default_demand_amplitude(),
            demand_noise: default_demand_noise(),
        }
    }

    pub fn total_devices(&self) -> usize {
        self.device_types.iter().map(|t| t.count).sum()
    }
}

/// Reference application classes with their priority and intensity profile.
/// Rows listing two priorities use the higher one (the smaller number).
pub struct ApplicationClass {
    pub name: &'static str,
    pub priority: u8,
    pub compute: Intensity,
    pub data: Intensity,
    pub latency: Intensity,
}

pub const APPLICATION_CLASSES: [ApplicationClass; 9] = {
    use Intensity::*;
    [
        ApplicationClass { name: "emergency_response", priority: 1, compute: High, data: High, latency: High },
        ApplicationClass { name: "vr_ar", priority: 2, compute: High, data: High, latency: High },
        ApplicationClass { name: "voice_assistant", priority: 2, compute: Medium, data: Medium, latency: High },
        ApplicationClass { name: "cognitive_assistance", priority: 2, compute: High, data: High, latency: Medium },
        ApplicationClass { name: "face_detection", priority: 3, compute: Medium, data: Medium, latency: Medium },
        ApplicationClass {
            name: "personal_identification",
            priority: 3,
            compute: Medium,
            data: Medium,
            latency: Medium,
        },
        ApplicationClass { name: "health_monitoring", priority: 2, compute: Low, data: Low, latency: Low },
        ApplicationClass { name: "smart_home", priority: 4, compute: Medium, data: Low, latency: Low },
        ApplicationClass { name: "low_level_sensor", priority: 4, compute: Low, data: Low, latency: Low },
    ]
};

impl ApplicationClass {
    pub fn lookup(name: &str) -> Option<&'static ApplicationClass> {
        APPLICATION_CLASSES.iter().find(|c| c.name == name)
    }

    pub fn device_type(
        &self,
        type_name: &str,
        count: usize,
        subsystem: &str,
        emits: Vec<EmitConfig>,
    ) -> DeviceTypeConfig {
        DeviceTypeConfig {
            name: type_name.to_owned(),
            count,
            priority: self.priority,
            compute_intensity: self.compute,
            data_intensity: self.data,
            latency_sensitivity: self.latency,
            subsystem: subsystem.to_owned(),
            base_demand: match self.compute {
                Intensity::High => 2.0,
                Intensity::Medium => 1.0,
                Intensity::Low => 0.25,
            },
            emits,
        }
    }
}
