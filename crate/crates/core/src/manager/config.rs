use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ManagerError;
use crate::fleet::{FaultInjection, FleetConfig};
use crate::models::{ModelFamily, ModelSpec, DEFAULT_ALARM_THRESHOLD, DEFAULT_DIM_THRESHOLD};
use crate::response::{PolicyParams, QoEParams, DEFAULT_MAINTENANCE_WINDOW};
use crate::synth::{ForecastSpec, GroupDefinition, DEFAULT_WINDOW};
use crate::telemetry::{BehaviorLevel, DEFAULT_MISSING_LIMIT};

/// A behavior target of one device type. `family` is a family name or
/// `"auto"`; `spec` overrides the family's default hyper-parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetConfig {
    pub device_type: String,
    pub level: BehaviorLevel,
    #[serde(default = "auto")]
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<ModelSpec>,
}

fn auto() -> String {
    "auto".into()
}

impl TargetConfig {
    /// `None` for auto-selection.
    pub fn family(&self) -> Result<Option<ModelFamily>, ManagerError> {
        if self.family.eq_ignore_ascii_case("auto") {
            return Ok(None);
        }
        ModelFamily::ALL
            .into_iter()
            .find(|f| f.as_str().eq_ignore_ascii_case(&self.family))
            .map(Some)
            .ok_or_else(|| ManagerError::UnknownFamily(self.family.clone()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    pub alarm: f64,
    pub missing_limit: f64,
    /// Feature count at which the neural families take over.
    pub dim_threshold: usize,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            alarm: DEFAULT_ALARM_THRESHOLD,
            missing_limit: DEFAULT_MISSING_LIMIT,
            dim_threshold: DEFAULT_DIM_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSettings {
    pub window: u64,
    /// Fixed cluster count; automatic when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    pub restarts: usize,
    pub insight_depth: usize,
    pub top_k: usize,
    pub forecast: ForecastSpec,
    pub forecast_horizon: usize,
}

impl Default for SynthSettings {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            k: None,
            restarts: 10,
            insight_depth: 30,
            top_k: 5,
            forecast: ForecastSpec::default(),
            forecast_horizon: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ResponseSettings {
    pub ar_order: usize,
    pub differencing: usize,
    pub maintenance_window: usize,
    pub qoe: QoEParams,
    pub policy: PolicyParams,
    /// Edge capacity in demand units; defaults to 75% of the fleet's base demand.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub capacity: Option<f64>,
}

impl Default for ResponseSettings {
    fn default() -> Self {
        Self {
            ar_order: 2,
            differencing: 1,
            maintenance_window: DEFAULT_MAINTENANCE_WINDOW,
            qoe: QoEParams::default(),
            policy: PolicyParams::default(),
            capacity: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingSettings {
    /// Normal-regime samples drawn per vector target.
    pub vector_samples: usize,
    /// Normal-regime sequences drawn per time-series target.
    pub sequence_samples: usize,
}

impl Default for TrainingSettings {
    fn default() -> Self {
        Self { vector_samples: 1500, sequence_samples: 300 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrcaConfig {
    #[serde(default)]
    pub seed: u64,
    pub fleet: FleetConfig,
    /// Every emitted target with auto-selection when empty.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub targets: Vec<TargetConfig>,
    /// Derived from device tags when empty.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub groups: Vec<GroupDefinition>,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub synth: SynthSettings,
    #[serde(default)]
    pub response: ResponseSettings,
    #[serde(default)]
    pub training: TrainingSettings,
}

impl OrcaConfig {
    pub fn new(fleet: FleetConfig, seed: u64) -> Self {
        Self {
            seed,
            fleet,
            targets: Vec::new(),
            groups: Vec::new(),
            thresholds: Thresholds::default(),
            synth: SynthSettings::default(),
            response: ResponseSettings::default(),
            training: TrainingSettings::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ManagerError> {
        let c: Self = serde_json::from_str(text).map_err(|e| ManagerError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, ManagerError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Targets as configured, or one auto target per emitted level.
    pub fn effective_targets(&self) -> Vec<TargetConfig> {
        if !self.targets.is_empty() {
            return self.targets.clone();
        }
        self.fleet
            .device_types
            .iter()
            .flat_map(|t| {
                t.emits.iter().map(|e| TargetConfig {
                    device_type: t.name.clone(),
                    level: e.level,
                    family: auto(),
                    spec: None,
                })
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), ManagerError> {
        let bad = |m: String| Err(ManagerError::Config(m));
        let t = &self.thresholds;
        if !(t.alarm > 0.0 && t.alarm <= 1.0) {
            return bad(format!("alarm threshold {} outside (0, 1]", t.alarm));
        }
        if !(0.0..=1.0).contains(&t.missing_limit) {
            return bad(format!("missing_limit {} outside [0, 1]", t.missing_limit));
        }
        if self.synth.window == 0 || self.synth.restarts == 0 || self.synth.insight_depth == 0 {
            return bad("synth window, restarts and insight_depth must be positive".into());
        }
        if self.synth.k == Some(0) {
            return bad("synth.k must be positive".into());
        }
        if self.response.ar_order == 0 {
            return bad("response.ar_order must be positive".into());
        }
        if let Some(c) = self.response.capacity {
            if !(c > 0.0 && c.is_finite()) {
                return bad(format!("capacity {c} must be positive"));
            }
        }
        self.response.qoe.validate().map_err(|e| ManagerError::Config(e.to_string()))?;
        for tc in self.effective_targets() {
            tc.family()?;
            if let Some(s) = &tc.spec {
                s.validate()?;
            }
        }
        for g in &self.groups {
            if g.members.is_empty() {
                return bad(format!("group `{}` has no members", g.id));
            }
        }
        Ok(())
    }
}

/// Fault injections to apply, optionally with the fleet they target.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fleet: Option<FleetConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub injections: Vec<FaultInjection>,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, ManagerError> {
        serde_json::from_str(&std::fs::read_to_string(path)?).map_err(|e| ManagerError::Data(e.to_string()))
    }
}

/// Environment variable that overrides the configured seed.
pub const SEED_ENV: &str = "ORCA_SEED";

/// Seed from `ORCA_SEED`, if set.
pub fn env_seed() -> Result<Option<u64>, ManagerError> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map(Some).map_err(|_| ManagerError::Config(format!("{SEED_ENV}=`{v}` is not a u64"))),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(ManagerError::Config(format!("{SEED_ENV}: {e}"))),
    }
}
